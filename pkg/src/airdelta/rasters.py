"""ESRI ASCII grid reading/writing, map naming, summaries, PNG rendering.

Raster coordinates are the package's planar km system; the georeferencing
sidecar records the projection needed to map them back to lon/lat.
"""

from __future__ import annotations

import calendar as _calendar
import csv
import json
from pathlib import Path

import numpy as np

from airdelta.errors import DataError
from airdelta.predict import ChangeMap, GridGeometry

NODATA = -9999.0
RENDER_CLAMP_PCT = 100.0  # PNG rendering only; raster files keep raw values


def month_label(month: int) -> str:
    return _calendar.month_name[month].lower()


def raster_name(pollutant: str, month: int, week: int, day_type: str, stat: str) -> str:
    return f"{pollutant}_{month_label(month)}_w{week:02d}_{day_type}_{stat}.asc"


def write_esri_ascii(
    path: str | Path, geometry: GridGeometry, values: np.ndarray, nodata: float = NODATA
) -> None:
    """Write one raster; `values` is (n_rows, n_cols) with row 0 northernmost."""
    values = np.asarray(values, dtype=float)
    if values.shape != (geometry.n_rows, geometry.n_cols):
        raise DataError(
            f"raster shape {values.shape} does not match geometry "
            f"({geometry.n_rows}, {geometry.n_cols})"
        )
    lines = [
        f"ncols {geometry.n_cols}",
        f"nrows {geometry.n_rows}",
        f"xllcorner {geometry.xll!r}",
        f"yllcorner {geometry.yll!r}",
        f"cellsize {geometry.cell_km!r}",
        f"NODATA_value {nodata!r}",
    ]
    filled = np.where(np.isfinite(values), values, nodata)
    for row in filled:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_esri_ascii(path: str | Path) -> tuple[GridGeometry, np.ndarray]:
    """Read one raster; nodata cells come back as NaN."""
    text = Path(path).read_text(encoding="utf-8").split("\n")
    header: dict[str, float] = {}
    idx = 0
    while idx < len(text):
        parts = text[idx].split()
        if len(parts) == 2 and parts[0].lower() in {
            "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value",
        }:
            header[parts[0].lower()] = float(parts[1])
            idx += 1
        else:
            break
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise DataError(f"{path}: missing raster header field {key!r}")
    geometry = GridGeometry(
        xll=header["xllcorner"],
        yll=header["yllcorner"],
        cell_km=header["cellsize"],
        n_cols=int(header["ncols"]),
        n_rows=int(header["nrows"]),
    )
    body = "\n".join(text[idx:])
    tokens = body.split()
    values = np.array(tokens, dtype=float) if tokens else np.array([])
    if values.size != geometry.n_rows * geometry.n_cols:
        raise DataError(
            f"{path}: expected {geometry.n_rows * geometry.n_cols} values, got {values.size}"
        )
    values = values.reshape(geometry.n_rows, geometry.n_cols)
    nodata = header.get("nodata_value", NODATA)
    values = np.where(values == nodata, np.nan, values)
    return geometry, values


def write_projection_sidecar(path: str | Path, projection: dict) -> None:
    """Georeferencing sidecar: projection parameters shared by all rasters."""
    payload = {
        "projection": "lambert_azimuthal_equal_area",
        "units": "km",
        **projection,
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_change_map(
    outdir: str | Path,
    pollutant: str,
    month: int,
    cm: ChangeMap,
    grid,
) -> list[Path]:
    """Emit the mean/q025/q975/significance rasters of one weekly map."""
    outdir = Path(outdir)
    written = []
    stats = {
        "mean": cm.mean,
        "q025": cm.q025,
        "q975": cm.q975,
        "signif": cm.significant.astype(float),
    }
    for stat, values in stats.items():
        path = outdir / raster_name(pollutant, month, cm.iso_week, cm.day_type, stat)
        write_esri_ascii(path, grid.geometry, grid.to_raster(values))
        written.append(path)
    return written


def write_summary_csv(path: str | Path, summaries: list[dict]) -> None:
    if not summaries:
        raise DataError("no map summaries to write")
    fields = list(summaries[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        for row in summaries:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def render_png(
    path: str | Path,
    geometry: GridGeometry,
    values_pct: np.ndarray,
    significant: np.ndarray | None = None,
    title: str = "",
) -> None:
    """Render one map with a diverging colormap, clamped to +-100% for display."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 5))
    extent = (
        geometry.xll,
        geometry.xll + geometry.n_cols * geometry.cell_km,
        geometry.yll,
        geometry.yll + geometry.n_rows * geometry.cell_km,
    )
    shown = np.clip(values_pct, -RENDER_CLAMP_PCT, RENDER_CLAMP_PCT)
    im = ax.imshow(
        shown,
        origin="upper",
        extent=extent,
        cmap="RdBu_r",
        vmin=-RENDER_CLAMP_PCT,
        vmax=RENDER_CLAMP_PCT,
    )
    if significant is not None and np.any(np.isfinite(significant)):
        ax.contour(
            np.nan_to_num(significant, nan=0.0),
            levels=[0.5],
            colors="black",
            linewidths=0.8,
            origin="upper",
            extent=extent,
        )
    ax.set_xlabel("x (km)")
    ax.set_ylabel("y (km)")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="relative change (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
