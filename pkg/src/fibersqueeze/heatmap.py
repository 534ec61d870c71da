"""Byte-stable image rendering: binary PPM heatmaps with a fixed color table.

The diverging map is a 256-entry table interpolated between fixed anchor
colors (deep blue, near-white, deep red), symmetric about zero; masked
entries render neutral gray.  The table is frozen so image files are
byte-identical across runs and platforms, which keeps image regression tests
trivial.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["DIVERGING_TABLE", "emit_heatmap", "emit_intensity_map", "write_ppm"]

_BLUE = (59, 76, 192)
_WHITE = (242, 242, 242)
_RED = (180, 4, 38)
MASK_COLOR = (128, 128, 128)


def _build_table() -> np.ndarray:
    table = np.empty((256, 3), dtype=np.uint8)
    for i in range(256):
        if i < 128:
            t = i / 127.0
            lo, hi = _BLUE, _WHITE
        else:
            t = (i - 128) / 127.0
            lo, hi = _WHITE, _RED
        for c in range(3):
            table[i, c] = int(round(lo[c] + t * (hi[c] - lo[c])))
    return table


DIVERGING_TABLE = _build_table()
DIVERGING_TABLE.flags.writeable = False


def write_ppm(pixels: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM (P6)."""
    h, w, _ = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def _upscale(pixels: np.ndarray, factor: int) -> np.ndarray:
    if factor <= 1:
        return pixels
    return np.repeat(np.repeat(pixels, factor, axis=0), factor, axis=1)


def _write_sidecar(path: Path, meta: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(meta):
            fh.write(f"{key} = {meta[key]}\n")


def emit_heatmap(matrix, path, *, which: str = "values", upscale: int | None = None) -> None:
    """Render a correlation matrix as a symmetric diverging-color PPM.

    Accepts a :class:`fibersqueeze.measure.CorrelationMatrix` or a bare
    array; ``which`` selects the stored array (values or coefficients) when a
    matrix object is given.  The color scale is centered at zero with range
    +-max|value| over unmasked entries; masked entries are neutral gray.  Row
    order puts the last slot at the top so the image reads like a plot with
    both axes increasing from the bottom-left corner.  A ``.txt`` sidecar
    records the axis metadata.
    """
    selected = getattr(matrix, which, None)
    if selected is None:
        selected = getattr(matrix, "values", matrix)
    values = np.asarray(selected, dtype=float)
    mask = getattr(matrix, "mask", None)
    if mask is None:
        mask = np.zeros(values.shape, dtype=bool)
    n = values.shape[0]
    valid = ~mask
    vmax = float(np.max(np.abs(values[valid]))) if valid.any() else 0.0

    if vmax == 0.0:
        idx = np.full(values.shape, 128, dtype=np.intp)
    else:
        unit = np.clip((values + vmax) / (2.0 * vmax), 0.0, 1.0)
        idx = np.rint(unit * 255).astype(np.intp)
    pixels = DIVERGING_TABLE[idx]
    pixels[mask] = MASK_COLOR
    pixels = pixels[::-1]  # last slot at the top row

    factor = upscale if upscale is not None else max(1, 512 // n)
    write_ppm(_upscale(pixels, factor), path)

    meta = {
        "shape": f"{n}x{n}",
        "vmax": f"{vmax:.12g}",
        "upscale": factor,
        "colormap": "diverging-blue-white-red-v1",
        "mask_color": "128,128,128",
        "orientation": "row 0 (top) = last center; columns left-to-right ascending",
    }
    slots = getattr(matrix, "slots", None)
    if slots is not None:
        meta["domain"] = slots.domain
        meta["width"] = f"{slots.width!r}"
        meta["centers_first_last"] = f"{slots.centers[0]!r} {slots.centers[-1]!r}"
        meta["kind"] = getattr(matrix, "kind", "?")
        meta["array"] = which
        meta["theta"] = f"{getattr(matrix, 'theta', 0.0)!r}"
    _write_sidecar(Path(str(path) + ".txt"), meta)


def emit_intensity_map(rows: np.ndarray, path, *, meta: dict | None = None) -> None:
    """Render a (zeta, tau) intensity history as a grayscale PPM (white = 0)."""
    arr = np.asarray(rows, dtype=float)
    peak = float(arr.max())
    if peak <= 0:
        gray = np.full(arr.shape, 255, dtype=np.uint8)
    else:
        gray = (255 - np.rint(np.clip(arr / peak, 0, 1) * 255)).astype(np.uint8)
    # earliest propagation step at the bottom row
    pixels = np.repeat(gray[::-1, :, None], 3, axis=2)
    h, w = pixels.shape[:2]
    col_step = max(1, w // 1024)
    pixels = pixels[:, ::col_step]
    row_factor = max(1, min(512 // max(h, 1), 8))
    write_ppm(np.repeat(pixels, row_factor, axis=0), path)
    side = {"peak_intensity": f"{peak:.12g}", "rows": h, "columns_kept_every": col_step}
    side.update(meta or {})
    _write_sidecar(Path(str(path) + ".txt"), side)
