"""Preset simulation regimes and physical-to-normalized unit conversion.

Each scenario freezes the published parameter set of one figure regime:
model preset, input pulse, coefficient modulations, fiber length, and the
measurements to run.  Two quoting conventions are applied when a scenario is
materialized into solver inputs:

* Averaged-model (manakov) amplitudes are quoted in canonical soliton units:
  a quoted amplitude u0 is the soliton order of the equivalent unit-
  coefficient system.  The preset carries the averaged 8/9 nonlinearity, so
  the sech amplitude passed to the solver is u0 * sqrt(9/8).
* The group-delay and birefringence parameters are quoted as the full
  differential between the polarization axes; the symmetric equations carry
  half per component, so quoted values enter the coefficient functions
  divided by two.

Scenario parameter values are frozen constants; ``run_scenario`` accepts
overrides only for grid, step, slot and output-shaping parameters, never for
physics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.signal import find_peaks

from .errors import InvalidParameterError
from .heatmap import emit_heatmap, emit_intensity_map
from .lattice import (
    MODULATION_NONE,
    FiberProfile,
    ModulationSpec,
    PolarizedField,
    TemporalGrid,
    birefringent_profile,
    default_grid,
    make_initial_pair,
    make_initial_single,
    manakov_profile,
)
from . import nlse
from . import measure as ms

__all__ = [
    "Scenario",
    "SCENARIOS",
    "PhysicalParams",
    "ScaleReport",
    "normalize",
    "denormalize",
    "run_scenario",
    "scenario_names",
]

TWO_PI = 2.0 * math.pi
# sqrt(9/8): converts a canonical-soliton-order amplitude to the sech
# amplitude used with the averaged 8/9 nonlinear coefficient.
MANAKOV_AMPLITUDE_SCALE = math.sqrt(9.0 / 8.0)

DEFAULT_SLOT_START = -20.0
DEFAULT_SLOT_COUNT = 80
DEFAULT_SLOT_WIDTH = 0.5
# Slots whose output-plane norm falls below this fraction of the strongest
# slot are excluded from the pulse-region (intra/inter) extrema reports.
PULSE_SLOT_FRACTION = 0.05


@dataclass(frozen=True)
class SpectralRegion:
    """Band layout for a frequency-domain correlation map."""

    name: str
    centers: tuple
    width: float


@dataclass(frozen=True)
class Scenario:
    """Frozen parameter set reproducing one published regime."""

    name: str
    model: str                      # manakov | birefringent
    initial: str                    # single | pair
    u0: float
    t_sep: float = 0.0
    d_omega: float = 0.0
    d_mod: ModulationSpec = MODULATION_NONE
    b_mod: ModulationSpec = MODULATION_NONE
    b1_mod: ModulationSpec = MODULATION_NONE
    b: float = 0.0                  # quoted full differential birefringence
    b1: float = 0.0                 # quoted full differential group delay
    length: float = TWO_PI
    outputs: tuple = ()
    spectral_regions: tuple = ()
    notes: str = ""

    def build_profile(self) -> FiberProfile:
        if self.model == "manakov":
            return manakov_profile(self.length, self.d_mod)
        # Quoted differentials split symmetrically between the axes.
        return birefringent_profile(
            self.length,
            b=0.5 * self.b,
            b1=0.5 * self.b1,
            d_mod=self.d_mod,
            b_mod=self.b_mod,
            b1_mod=self.b1_mod,
        )

    def build_initial(self, grid: TemporalGrid) -> PolarizedField:
        amp = self.u0 * (MANAKOV_AMPLITUDE_SCALE if self.model == "manakov" else 1.0)
        if self.initial == "single":
            return make_initial_single(grid, amp)
        return make_initial_pair(grid, amp, self.t_sep, self.d_omega)


def _mk(kind: str, period: float, depth: float = 0.2) -> ModulationSpec:
    return ModulationSpec(kind, period, depth)


# Spectral slot layouts for the split-soliton regime, tied to the default
# grid's bin spacing pi/20 so each slot holds exactly two spectral bins.
# Output-spectrum interference maxima sit at 0, +-0.785, +-1.728, +-2.985;
# the inner/outer bands straddle the first/second symmetric maxima pairs.
_D_OMEGA = math.pi / 20.0


def _mirrored_bins(pair_starts: tuple) -> tuple:
    pos = [(k + 0.5) * _D_OMEGA for k in pair_starts]
    return tuple(sorted([-c for c in pos] + pos))


_FIG1_REGIONS = (
    SpectralRegion("inner", _mirrored_bins((1, 3, 5, 7)), 2 * _D_OMEGA),
    SpectralRegion("outer", _mirrored_bins((9, 11, 13)), 2 * _D_OMEGA),
    SpectralRegion("full", _mirrored_bins(tuple(range(1, 21, 2))), 2 * _D_OMEGA),
)

SCENARIOS: dict[str, Scenario] = {}


def _register(s: Scenario) -> None:
    SCENARIOS[s.name] = s


_register(Scenario(
    name="fig1", model="manakov", initial="single", u0=2.0,
    d_mod=_mk("sine", 1.3), length=TWO_PI,
    outputs=("intensity_map", "spectrum", "split_spectrum", "spectral_correlations"),
    spectral_regions=_FIG1_REGIONS,
    notes="Second-order soliton split by sine dispersion modulation.",
))
_register(Scenario(
    name="fig2a", model="manakov", initial="single", u0=2.0,
    d_mod=_mk("sine", 1.3), length=TWO_PI,
    outputs=("intensity_map", "output_profile", "squeeze_curve", "corr:complete"),
    notes="Same regime as fig1 plus squeezing curve and time-domain map.",
))
_register(Scenario(
    name="fig2b", model="manakov", initial="single", u0=2.0,
    d_mod=_mk("truncated_sine", 1.3), length=TWO_PI,
    outputs=("intensity_map", "output_profile", "squeeze_curve", "corr:complete"),
    notes="Truncated modulation: split without continued dispersive-wave shedding.",
))
_register(Scenario(
    name="fig2c", model="manakov", initial="single", u0=2.0,
    d_mod=_mk("sine", math.pi / 2), length=TWO_PI,
    outputs=("intensity_map", "output_profile", "squeeze_curve", "corr:complete"),
    notes="Resonant modulation period: maximum pulse separation.",
))
_register(Scenario(
    name="fig3", model="manakov", initial="pair", u0=2.0, t_sep=1.0, d_omega=0.0,
    d_mod=_mk("sine", 0.83), length=TWO_PI,
    outputs=("intensity_map", "component_maps", "squeeze_curve",
             "corr:xx", "corr:yy", "corr:xy", "corr:complete"),
    notes="Inelastic collision of co-propagating orthogonally polarized pulses.",
))
_register(Scenario(
    name="fig4_5_mod", model="manakov", initial="pair", u0=2.0, t_sep=3.0, d_omega=1.0,
    d_mod=_mk("sine", 1.3), length=TWO_PI,
    outputs=("intensity_map", "corr:xx", "corr:yy", "corr:xy", "corr:complete"),
    notes="Frequency-shifted collision with dispersion modulation; continuous "
          "sine form used (body text governs over the equation cross-reference).",
))
_register(Scenario(
    name="fig4_5_nomod", model="manakov", initial="pair", u0=2.0, t_sep=3.0, d_omega=1.0,
    length=TWO_PI,
    outputs=("intensity_map", "corr:xx", "corr:yy", "corr:xy", "corr:complete"),
    notes="Reference collision without modulation.",
))
for _name, _u0 in (("fig6a", 1.8), ("fig6c", 2.12), ("fig6e", 2.83)):
    _register(Scenario(
        name=_name, model="birefringent", initial="single", u0=_u0,
        b=20.0, b1=2.0, length=TWO_PI,
        outputs=("intensity_map", "corr:complete"),
        notes="Pulse splitting by polarization group delay.",
    ))
_register(Scenario(
    name="fig7a", model="birefringent", initial="single", u0=2.83,
    b=40.0, b1=4.0, length=TWO_PI,
    outputs=("intensity_map", "corr:complete"),
    notes="High differential delay: symmetric splitting.",
))
_register(Scenario(
    name="fig7c", model="birefringent", initial="single", u0=2.83,
    b=40.0, b1=4.0,
    d_mod=_mk("sine", 1.3, 0.2),
    b_mod=_mk("sine", 1.3, 0.01),
    b1_mod=_mk("sine", 1.3, 0.01),
    length=TWO_PI,
    outputs=("intensity_map", "corr:complete"),
    notes="Combined group-delay splitting and dispersion-modulation splitting.",
))


def scenario_names() -> tuple:
    return tuple(SCENARIOS)


def scenario_runconfig(name: str):
    """The preset expressed as a RunConfig (quoted, caption-level parameters)."""
    from .config import RunConfig

    s = SCENARIOS[name]
    return RunConfig(
        model=s.model, initial=s.initial, u0=s.u0, t_sep=s.t_sep,
        d_omega=s.d_omega, b=s.b, b1=s.b1,
        d_mod=s.d_mod, b_mod=s.b_mod, b1_mod=s.b1_mod, length=s.length,
    )


def runconfig_inputs(cfg, grid: TemporalGrid | None = None):
    """Materialize a RunConfig into (grid, initial field, profile).

    Applies the same quoting conventions as the presets: canonical soliton
    units for averaged-model amplitudes, full differentials for b and b1.
    """
    if grid is None:
        grid = TemporalGrid(cfg.n_points, cfg.tau_min, cfg.tau_max)
    scenario = Scenario(
        name="config", model=cfg.model, initial=cfg.initial, u0=cfg.u0,
        t_sep=cfg.t_sep, d_omega=cfg.d_omega, d_mod=cfg.d_mod,
        b_mod=cfg.b_mod, b1_mod=cfg.b1_mod, b=cfg.b, b1=cfg.b1,
        length=cfg.length,
    )
    return grid, scenario.build_initial(grid), scenario.build_profile()


# -- unit conversion -----------------------------------------------------------


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional fiber and pulse parameters.

    ``beta2`` and ``delta_beta`` may be constants or callables of z (meters);
    ``dbeta1`` is the inverse-group-velocity difference between the axes.
    """

    t0: float                       # s
    beta2_avg: float                # s^2/m (negative = anomalous)
    beta2: float | Callable[[float], float]
    dbeta1: float                   # s/m
    delta_beta: float | Callable[[float], float]   # 1/m
    gamma: float                    # 1/(W m)
    a_eff: float                    # m^2
    length: float                   # m

    def __post_init__(self):
        if not self.t0 > 0:
            raise InvalidParameterError(f"t0 must be positive, got {self.t0}")
        if not abs(self.beta2_avg) > 0:
            raise InvalidParameterError("average dispersion beta2_avg must be nonzero")


@dataclass(frozen=True)
class ScaleReport:
    """Normalization constants plus everything needed to invert the mapping."""

    t0_s: float
    beta2_avg: float
    zeta_per_meter: float
    length_zeta: float
    power_scale_w: float            # peak power giving unit normalized amplitude
    gamma: float
    a_eff: float

    @property
    def meters_per_zeta(self) -> float:
        return 1.0 / self.zeta_per_meter


def _as_fn(v) -> Callable[[float], float]:
    return v if callable(v) else (lambda z, _v=float(v): _v)


def normalize(p: PhysicalParams) -> tuple[FiberProfile, ScaleReport]:
    """Map dimensional parameters onto the dimensionless coefficient profile.

    D(zeta) = -beta2(z)/|beta2_avg|, b = t0^2 delta_beta / (2 |beta2_avg|),
    b1 = t0 dbeta1 / (2 |beta2_avg|), zeta = z |beta2_avg| / t0^2.
    """
    mag = abs(p.beta2_avg)
    zeta_per_meter = mag / p.t0**2
    beta2_fn = _as_fn(p.beta2)
    dbeta_fn = _as_fn(p.delta_beta)
    b1 = p.t0 * p.dbeta1 / (2.0 * mag)

    def dispersion(zeta: float) -> float:
        return -beta2_fn(zeta / zeta_per_meter) / mag

    def birefringence(zeta: float) -> float:
        return p.t0**2 * dbeta_fn(zeta / zeta_per_meter) / (2.0 * mag)

    profile = FiberProfile(
        a_coef=1.0,
        b_coef=2.0 / 3.0,
        c_coef=1.0 / 3.0,
        dispersion=dispersion,
        birefringence=birefringence,
        group_delay=lambda zeta: b1,
        length=p.length * zeta_per_meter,
        descriptor={"model": "physical", "t0_s": p.t0, "length_m": p.length},
    )
    report = ScaleReport(
        t0_s=p.t0,
        beta2_avg=p.beta2_avg,
        zeta_per_meter=zeta_per_meter,
        length_zeta=p.length * zeta_per_meter,
        power_scale_w=mag / (p.gamma * p.t0**2),
        gamma=p.gamma,
        a_eff=p.a_eff,
    )
    return profile, report


def denormalize(profile: FiberProfile, report: ScaleReport) -> PhysicalParams:
    """Inverse of :func:`normalize` for constant-coefficient profiles.

    Coefficient functions are sampled at zeta = 0; profiles with z-dependent
    coefficients round-trip only at that point.
    """
    mag = abs(report.beta2_avg)
    return PhysicalParams(
        t0=report.t0_s,
        beta2_avg=report.beta2_avg,
        beta2=-profile.dispersion(0.0) * mag,
        dbeta1=profile.group_delay(0.0) * 2.0 * mag / report.t0_s,
        delta_beta=profile.birefringence(0.0) * 2.0 * mag / report.t0_s**2,
        gamma=report.gamma,
        a_eff=report.a_eff,
        length=report.length_zeta / report.zeta_per_meter,
    )


# -- scenario execution ----------------------------------------------------------


_ALLOWED_OVERRIDES = {
    "n_points", "tau_min", "tau_max", "n_steps", "slot_start", "slot_count",
    "slot_width", "curve_points", "workers", "max_map_rows",
}


@dataclass
class ScenarioResult:
    name: str
    out_dir: Path
    metrics: dict
    matrices: dict = field(default_factory=dict)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _pulse_mask(norms: np.ndarray) -> np.ndarray:
    return norms >= PULSE_SLOT_FRACTION * float(norms.max())


def _matrix_metrics(m: ms.CorrelationMatrix, tag: str, metrics: dict) -> None:
    (vmin, _, _), (vmax, _, _) = m.extrema_locations("values")
    metrics[f"{tag}_shotnorm_min"] = vmin
    metrics[f"{tag}_shotnorm_max"] = vmax
    (cmin, ci, cj), (cmax, ci2, cj2) = m.extrema_locations("coefficients")
    metrics[f"{tag}_min"] = cmin
    metrics[f"{tag}_min_at"] = f"({ci},{cj})"
    metrics[f"{tag}_max"] = cmax
    metrics[f"{tag}_max_at"] = f"({ci2},{cj2})"
    metrics[f"{tag}_imag_residue_rel"] = m.meta.get("imag_residue_rel", 0.0)
    norms = np.asarray(m.meta.get("slot_norms", []))
    if norms.size:
        q = ms.quadrant_extrema(m, split=0.0, which="coefficients",
                                slot_mask=_pulse_mask(norms))
        metrics[f"{tag}_intra_min"], metrics[f"{tag}_intra_max"] = q["intra"]
        metrics[f"{tag}_inter_min"], metrics[f"{tag}_inter_max"] = q["inter"]


def run_scenario(
    name: str,
    out_dir,
    overrides: dict | None = None,
    workers: int | None = None,
) -> ScenarioResult:
    """Execute a preset end to end and write its artifact bundle.

    The bundle contains a ``metrics.txt`` key-value summary, intensity maps,
    spectra and matrix files (text plus heatmap renderings).  Overrides are
    restricted to discretization and output-shaping parameters.
    """
    if name not in SCENARIOS:
        raise InvalidParameterError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(SCENARIOS))}"
        )
    ov = dict(overrides or {})
    bad = set(ov) - _ALLOWED_OVERRIDES
    if bad:
        raise InvalidParameterError(
            f"overrides may not change physics parameters: {sorted(bad)}"
        )
    if workers is None and "workers" in ov:
        workers = int(ov["workers"])

    scenario = SCENARIOS[name]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    grid = TemporalGrid(
        int(ov.get("n_points", 4096)),
        float(ov.get("tau_min", -20.0)),
        float(ov.get("tau_max", 20.0)),
    )
    f0 = scenario.build_initial(grid)
    profile = scenario.build_profile()
    n_steps = int(ov["n_steps"]) if "n_steps" in ov else None

    metrics: dict = {"scenario": name}
    traj = nlse.propagate_classical(f0, profile, n_steps)
    energies = traj.energies()
    metrics["energy_in"] = float(energies[0])
    metrics["energy_out"] = float(energies[-1])
    metrics["energy_drift_rel"] = float(np.max(np.abs(energies / energies[0] - 1.0)))
    metrics["n_steps"] = traj.n_steps

    zeta, rows = traj.intensity_map(int(ov.get("max_map_rows", 400)))
    emit_intensity_map(rows, out / "intensity_map.ppm",
                       meta={"zeta_max": float(zeta[-1]), "tau_min": grid.tau_min,
                             "tau_max": grid.tau_max, "scenario": name})
    if "component_maps" in scenario.outputs:
        for comp, label in ((0, "x"), (1, "y")):
            comp_rows = np.stack([np.abs(traj.snapshot_array(k)[comp]) ** 2
                                  for k in np.unique(np.linspace(0, traj.n_steps, 200).astype(int))])
            emit_intensity_map(comp_rows, out / f"intensity_map_{label}.ppm",
                               meta={"component": label, "scenario": name})
    np.savetxt(out / "output_intensity.csv",
               np.column_stack([grid.tau, np.sum(np.abs(traj.final_array()) ** 2, axis=0)]),
               delimiter=",", header="tau,intensity", comments="", fmt="%.12e")

    theta_opt = ms.optimize_theta(traj)
    metrics["theta_opt"] = theta_opt.theta
    metrics["r_min"] = theta_opt.r_min
    metrics["theta_flat"] = theta_opt.flat

    if "spectrum" in scenario.outputs or "split_spectrum" in scenario.outputs:
        spec = nlse.output_spectrum(traj)
        cols = [grid.omega_monotone, spec]
        header = "omega,i_sum"
        if "split_spectrum" in scenario.outputs:
            i1, i2 = nlse.split_spectra(traj, 0.0)
            cols += [i1, i2]
            header += ",i_first,i_second"
        np.savetxt(out / "spectrum.csv", np.column_stack(cols),
                   delimiter=",", header=header, comments="", fmt="%.12e")
        peaks, _ = find_peaks(spec, prominence=0.01 * float(spec.max()))
        metrics["n_spectral_maxima"] = int(len(peaks))
        metrics["spectral_maxima_omega"] = " ".join(
            f"{w:.4f}" for w in grid.omega_monotone[peaks])

    if "squeeze_curve" in scenario.outputs:
        curve = ms.squeezing_distance_curve(traj, int(ov.get("curve_points", 40)))
        np.savetxt(out / "squeeze_curve.csv", curve, delimiter=",",
                   header="zeta,theta_opt,r_min", comments="", fmt="%.12e")
        metrics["r_min_final"] = float(curve[-1, 2])

    result = ScenarioResult(name=name, out_dir=out, metrics=metrics)

    slot_start = float(ov.get("slot_start", DEFAULT_SLOT_START))
    slot_count = int(ov.get("slot_count", DEFAULT_SLOT_COUNT))
    slot_width = float(ov.get("slot_width", DEFAULT_SLOT_WIDTH))
    time_slots = ms.SlotSpec.contiguous("time", slot_start, slot_count, slot_width)

    for token in scenario.outputs:
        if not token.startswith("corr:"):
            continue
        kind = token.split(":", 1)[1]
        m = ms.correlation_matrix(traj, theta_opt.theta, time_slots, kind, workers=workers)
        result.matrices[kind] = m
        ms.save_matrix_text(m, out / f"corr_{kind}.cmat")
        emit_heatmap(m, out / f"corr_{kind}.ppm", which="coefficients")
        _matrix_metrics(m, f"corr_{kind}", metrics)

    if "spectral_correlations" in scenario.outputs:
        for region in scenario.spectral_regions:
            slots = ms.SlotSpec("frequency", region.centers, region.width)
            m = ms.spectral_correlation_matrix(traj, theta_opt.theta, slots, "complete",
                                               workers=workers)
            result.matrices[f"spectral_{region.name}"] = m
            ms.save_matrix_text(m, out / f"scorr_{region.name}.cmat")
            emit_heatmap(m, out / f"scorr_{region.name}.ppm", which="coefficients")
            _matrix_metrics(m, f"scorr_{region.name}", metrics)

    with open(out / "metrics.txt", "w", encoding="utf-8") as fh:
        for key in sorted(metrics):
            fh.write(f"{key} = {_fmt(metrics[key])}\n")
    return result
