"""Key-value run configuration: parsing, validation, serialization.

Configs are INI-style text with fixed sections; every key is validated and
all problems are reported together, each with its section.key context.
Physics parameters live in the config so a config file doubles as the
archival record of a run; paths and verbosity stay on the command line.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .lattice import MODULATION_NONE, ModulationSpec

__all__ = ["RunConfig", "parse_config", "serialize_config", "DEFAULT_OUTPUT_TOKENS"]

DEFAULT_OUTPUT_TOKENS = ("intensity_map", "spectrum", "squeeze", "correlation")
_VALID_OUTPUTS = DEFAULT_OUTPUT_TOKENS + ("split_spectrum", "squeeze_curve", "trajectory")
_MODELS = ("manakov", "birefringent")
_INITIALS = ("single", "pair")
_KINDS = ("xx", "yy", "xy", "complete")
_DOMAINS = ("time", "frequency")
_MOD_KINDS = ("none", "sine", "truncated_sine")


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run description.

    ``n_steps`` and ``theta`` are None when the automatic choices apply
    (ceil(200 L) steps; squeezing-optimal phase).
    """

    model: str = "manakov"
    initial: str = "single"
    u0: float = 2.0
    t_sep: float = 0.0
    d_omega: float = 0.0
    b: float = 0.0
    b1: float = 0.0
    d_mod: ModulationSpec = MODULATION_NONE
    b_mod: ModulationSpec = MODULATION_NONE
    b1_mod: ModulationSpec = MODULATION_NONE
    length: float = 2.0 * math.pi
    n_points: int = 4096
    tau_min: float = -20.0
    tau_max: float = 20.0
    n_steps: int | None = None
    theta: float | None = None
    slot_domain: str = "time"
    slot_start: float = -20.0
    slot_count: int = 80
    slot_width: float = 0.5
    kind: str = "complete"
    outputs: tuple = DEFAULT_OUTPUT_TOKENS

    @property
    def resolved_n_steps(self) -> int:
        from .nlse import default_step_count

        return self.n_steps if self.n_steps is not None else default_step_count(self.length)


class _Collector:
    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def add(self, ctx: str, msg: str) -> None:
        self.errors.append((ctx, msg))

    def check(self):
        if self.errors:
            raise ConfigError(self.errors)


def _get_float(cp, errs, section, key, default, *, positive=False, nonneg=False):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        v = float(raw)
    except ValueError:
        errs.add(f"{section}.{key}", f"expected a number, got {raw!r}")
        return default
    if positive and not v > 0:
        errs.add(f"{section}.{key}", f"must be positive, got {v}")
    if nonneg and v < 0:
        errs.add(f"{section}.{key}", f"must be >= 0, got {v}")
    return v


def _get_int(cp, errs, section, key, default, *, minimum=None):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        v = int(raw)
    except ValueError:
        errs.add(f"{section}.{key}", f"expected an integer, got {raw!r}")
        return default
    if minimum is not None and v < minimum:
        errs.add(f"{section}.{key}", f"must be >= {minimum}, got {v}")
    return v


def _get_choice(cp, errs, section, key, default, choices):
    if not cp.has_option(section, key):
        return default
    v = cp.get(section, key).strip()
    if v not in choices:
        errs.add(f"{section}.{key}", f"must be one of {', '.join(choices)}; got {v!r}")
        return default
    return v


def _get_modulation(cp, errs, section) -> ModulationSpec:
    kind = _get_choice(cp, errs, section, "kind", "none", _MOD_KINDS)
    period = _get_float(cp, errs, section, "period", math.inf)
    depth = _get_float(cp, errs, section, "depth", 0.2, nonneg=True)
    if kind == "none":
        return MODULATION_NONE
    if not (period > 0 and math.isfinite(period)):
        errs.add(f"{section}.period", f"must be positive and finite, got {period}")
        return MODULATION_NONE
    return ModulationSpec(kind, period, depth)


_SCHEMA = {
    "model": {"kind", "b", "b1"},
    "initial": {"kind", "u0", "t_sep", "d_omega"},
    "fiber": {"length"},
    "modulation_d": {"kind", "period", "depth"},
    "modulation_b": {"kind", "period", "depth"},
    "modulation_b1": {"kind", "period", "depth"},
    "grid": {"n_points", "tau_min", "tau_max"},
    "run": {"n_steps", "theta", "outputs"},
    "slots": {"domain", "start", "count", "width", "kind"},
}


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate config text, reporting every error found."""
    errs = _Collector()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        errs.add("config", f"syntax error: {exc}")
        errs.check()

    for section in cp.sections():
        if section not in _SCHEMA:
            errs.add(section, "unknown section")
            continue
        for key in cp.options(section):
            if key not in _SCHEMA[section]:
                errs.add(f"{section}.{key}", "unknown key")

    model = _get_choice(cp, errs, "model", "kind", "manakov", _MODELS)
    b = _get_float(cp, errs, "model", "b", 0.0)
    b1 = _get_float(cp, errs, "model", "b1", 0.0)
    initial = _get_choice(cp, errs, "initial", "kind", "single", _INITIALS)
    u0 = _get_float(cp, errs, "initial", "u0", 2.0, positive=True)
    t_sep = _get_float(cp, errs, "initial", "t_sep", 0.0)
    d_omega = _get_float(cp, errs, "initial", "d_omega", 0.0)
    length = _get_float(cp, errs, "fiber", "length", 2.0 * math.pi, positive=True)
    d_mod = _get_modulation(cp, errs, "modulation_d")
    b_mod = _get_modulation(cp, errs, "modulation_b")
    b1_mod = _get_modulation(cp, errs, "modulation_b1")

    n_points = _get_int(cp, errs, "grid", "n_points", 4096, minimum=8)
    if n_points & (n_points - 1):
        errs.add("grid.n_points", f"must be a power of two, got {n_points}")
    tau_min = _get_float(cp, errs, "grid", "tau_min", -20.0)
    tau_max = _get_float(cp, errs, "grid", "tau_max", 20.0)
    if not tau_max > tau_min:
        errs.add("grid.tau_max", f"must exceed tau_min, got [{tau_min}, {tau_max}]")

    n_steps: int | None = None
    if cp.has_option("run", "n_steps"):
        raw = cp.get("run", "n_steps").strip()
        if raw != "auto":
            n_steps = _get_int(cp, errs, "run", "n_steps", None, minimum=1)
    theta: float | None = None
    if cp.has_option("run", "theta"):
        raw = cp.get("run", "theta").strip()
        if raw != "auto":
            theta = _get_float(cp, errs, "run", "theta", None)
    outputs = DEFAULT_OUTPUT_TOKENS
    if cp.has_option("run", "outputs"):
        tokens = tuple(t.strip() for t in cp.get("run", "outputs").split(",") if t.strip())
        for t in tokens:
            if t not in _VALID_OUTPUTS:
                errs.add("run.outputs", f"unknown output token {t!r}")
        outputs = tokens

    slot_domain = _get_choice(cp, errs, "slots", "domain", "time", _DOMAINS)
    slot_start = _get_float(cp, errs, "slots", "start", -20.0)
    slot_count = _get_int(cp, errs, "slots", "count", 80, minimum=1)
    slot_width = _get_float(cp, errs, "slots", "width", 0.5, positive=True)
    kind = _get_choice(cp, errs, "slots", "kind", "complete", _KINDS)

    errs.check()
    return RunConfig(
        model=model, initial=initial, u0=u0, t_sep=t_sep, d_omega=d_omega,
        b=b, b1=b1, d_mod=d_mod, b_mod=b_mod, b1_mod=b1_mod, length=length,
        n_points=n_points, tau_min=tau_min, tau_max=tau_max,
        n_steps=n_steps, theta=theta,
        slot_domain=slot_domain, slot_start=slot_start, slot_count=slot_count,
        slot_width=slot_width, kind=kind, outputs=outputs,
    )


def _mod_section(name: str, mod: ModulationSpec) -> str:
    if mod.kind == "none":
        return f"[{name}]\nkind = none\n"
    return f"[{name}]\nkind = {mod.kind}\nperiod = {mod.period!r}\ndepth = {mod.depth!r}\n"


def serialize_config(cfg: RunConfig) -> str:
    """Render a config back to text; parse(serialize(cfg)) == cfg."""
    parts = [
        f"[model]\nkind = {cfg.model}\nb = {cfg.b!r}\nb1 = {cfg.b1!r}\n",
        f"[initial]\nkind = {cfg.initial}\nu0 = {cfg.u0!r}\n"
        f"t_sep = {cfg.t_sep!r}\nd_omega = {cfg.d_omega!r}\n",
        f"[fiber]\nlength = {cfg.length!r}\n",
        _mod_section("modulation_d", cfg.d_mod),
        _mod_section("modulation_b", cfg.b_mod),
        _mod_section("modulation_b1", cfg.b1_mod),
        f"[grid]\nn_points = {cfg.n_points}\ntau_min = {cfg.tau_min!r}\ntau_max = {cfg.tau_max!r}\n",
        "[run]\n"
        + f"n_steps = {'auto' if cfg.n_steps is None else cfg.n_steps}\n"
        + f"theta = {'auto' if cfg.theta is None else repr(cfg.theta)}\n"
        + f"outputs = {', '.join(cfg.outputs)}\n",
        f"[slots]\ndomain = {cfg.slot_domain}\nstart = {cfg.slot_start!r}\n"
        f"count = {cfg.slot_count}\nwidth = {cfg.slot_width!r}\nkind = {cfg.kind}\n",
    ]
    return "\n".join(parts)
