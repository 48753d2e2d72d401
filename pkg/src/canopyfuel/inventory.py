"""Per-tree species, LAI and fuel load, plus the stand report files.

Fuel per tree is ``corrected crown area * LAI_sp * alpha_geo * rho_sp``
where ``alpha_geo`` is the latitude band factor and ``rho_sp`` is read as kg
of fuel per m^2 of leaf area.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInventory, InputError, IoFailure, OutOfRange
from .io.config import PipelineConfig
from .segmentation import correct_areas

CSV_HEADER = (
    "tree_id,centroid_x_m,centroid_y_m,raw_area_m2,corrected_area_m2,"
    "max_height_m,sigma_h,species,lai_effective,fuel_kg"
)
MASS_TOLERANCE = 1e-6

BOREAL_LATITUDE = 50.0
TROPICAL_LATITUDE = 23.5


class Species(str, enum.Enum):
    BROADLEAF = "broadleaf"
    CONIFER = "conifer"


@dataclass(frozen=True)
class Crown:
    """Measured crown of one segmented tree, before fuel accounting."""

    tree_id: int
    centroid_x_m: float
    centroid_y_m: float
    raw_area_m2: float
    corrected_area_m2: float
    max_height_m: float
    sigma_h_tree: float
    species: Species


@dataclass(frozen=True)
class TreeRecord:
    tree_id: int
    centroid_x_m: float
    centroid_y_m: float
    raw_area_m2: float
    corrected_area_m2: float
    max_height_m: float
    sigma_h_tree: float
    species: Species
    lai_effective: float
    fuel_kg: float


@dataclass(frozen=True)
class StandSummary:
    n_trees: int
    footprint_m2: float
    corrected_area_m2: float
    latitude_deg: float | None
    alpha_geo: float
    lai_by_species: dict
    total_fuel_tons: float


def alpha_geo(latitude_deg):
    """Latitude band factor: 0.85 at or poleward of 50 deg, 1.15 inside 23.5 deg, else 1."""
    if latitude_deg is None:
        return 1.0
    if not (math.isfinite(latitude_deg) and -90.0 <= latitude_deg <= 90.0):
        raise OutOfRange(f"latitude {latitude_deg} outside [-90, 90]")
    lat = abs(latitude_deg)
    if lat >= BOREAL_LATITUDE:
        return 0.85
    if lat < TROPICAL_LATITUDE:
        return 1.15
    return 1.0


def classify_species(sigma_h_tree, threshold=0.2):
    return Species.CONIFER if sigma_h_tree > threshold else Species.BROADLEAF


def effective_lai(species, alpha, config=None):
    config = config or PipelineConfig()
    base = config.lai_conifer if species is Species.CONIFER else config.lai_broadleaf
    return base * alpha


def _rho(species, config):
    return config.rho_conifer if species is Species.CONIFER else config.rho_broadleaf


def measure_crowns(labels, normalized, height, z_ground, footprint_m2, config=None):
    """Turn a label raster into :class:`Crown` records.

    Heights in metres come from ``height`` (the unnormalised raster) minus
    ``z_ground``; the per-tree spread ``sigma_h_tree`` is taken over the
    normalized heights of the tree's cells and drives the species call.
    """
    config = config or PipelineConfig()
    spec = labels.spec
    lab = labels.labels.ravel()
    areas = correct_areas(labels, footprint_m2, spec.cell_size_m)
    ids = np.array([a[0] for a in areas])

    rows, cols = np.indices(spec.shape)
    xs, ys = spec.cell_centers(rows.ravel(), cols.ravel())
    norm = np.nan_to_num(normalized.values.ravel(), nan=0.0)
    hgt = height.values.ravel()

    sel = lab > 0
    lab_s = lab[sel]
    n = np.bincount(lab_s)
    cx = np.bincount(lab_s, xs[sel])[ids] / n[ids]
    cy = np.bincount(lab_s, ys[sel])[ids] / n[ids]
    # two-pass variance keeps sigma non-negative and stable
    mean_h = np.bincount(lab_s, norm[sel]) / np.maximum(n, 1)
    dev = norm[sel] - mean_h[lab_s]
    sigma = np.sqrt(np.bincount(lab_s, dev * dev)[ids] / n[ids])
    top = np.full(n.size, -np.inf)
    np.fmax.at(top, lab_s, hgt[sel])
    top = top[ids]

    crowns = []
    for k, (tid, raw, corr) in enumerate(areas):
        max_h = float(top[k] - z_ground) if np.isfinite(top[k]) else 0.0
        s = float(sigma[k])
        crowns.append(Crown(
            tree_id=tid,
            centroid_x_m=float(cx[k]),
            centroid_y_m=float(cy[k]),
            raw_area_m2=raw,
            corrected_area_m2=corr,
            max_height_m=max_h,
            sigma_h_tree=s,
            species=classify_species(s, config.sigma_conifer_threshold),
        ))
    return crowns


def check_mass_conservation(corrected_sum, footprint_m2):
    if footprint_m2 == 0:
        ok = corrected_sum == 0
    else:
        ok = abs(corrected_sum - footprint_m2) <= MASS_TOLERANCE * abs(footprint_m2)
    if not ok:
        raise InputError(
            f"corrected crown areas sum to {corrected_sum!r} m^2, footprint is {footprint_m2!r} m^2"
        )


def fuel_load(crowns, footprint_m2=None, config=None):
    """Apply the allometric fuel model to every crown.

    Returns ``(records, summary)``. ``footprint_m2`` defaults to the sum of
    corrected areas; when given, the corrected areas must add up to it.
    """
    if not crowns:
        raise EmptyInventory("no trees to estimate fuel for")
    config = config or PipelineConfig()
    alpha = alpha_geo(config.latitude_deg)
    crowns = sorted(crowns, key=lambda c: c.tree_id)
    corrected_sum = math.fsum(c.corrected_area_m2 for c in crowns)
    if footprint_m2 is None:
        footprint_m2 = corrected_sum
    check_mass_conservation(corrected_sum, footprint_m2)

    records = []
    total_kg = 0.0
    for c in crowns:
        if c.corrected_area_m2 < 0:
            raise InputError(f"tree {c.tree_id}: negative area")
        lai = effective_lai(c.species, alpha, config)
        fuel = c.corrected_area_m2 * lai * _rho(c.species, config)
        total_kg += fuel
        records.append(TreeRecord(
            c.tree_id, c.centroid_x_m, c.centroid_y_m, c.raw_area_m2, c.corrected_area_m2,
            c.max_height_m, c.sigma_h_tree, c.species, lai, fuel,
        ))
    summary = StandSummary(
        n_trees=len(records),
        footprint_m2=float(footprint_m2),
        corrected_area_m2=corrected_sum,
        latitude_deg=config.latitude_deg,
        alpha_geo=alpha,
        lai_by_species={s.value: effective_lai(s, alpha, config) for s in Species},
        total_fuel_tons=total_kg / 1000.0,
    )
    return records, summary


def _fmt(x):
    return f"{x:.6f}"


def _json_value(v, indent):
    pad = "  " * (indent + 1)
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(float(v))
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(val, indent + 1)}" for k, val in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    raise TypeError(f"cannot serialise {type(v).__name__}")


def summary_json(summary):
    """JSON text with every float printed to 6 decimals."""
    fields = {
        "n_trees": summary.n_trees,
        "footprint_m2": summary.footprint_m2,
        "corrected_area_m2": summary.corrected_area_m2,
        "latitude_deg": summary.latitude_deg,
        "alpha_geo": summary.alpha_geo,
        "lai_by_species": summary.lai_by_species,
        "total_fuel_tons": summary.total_fuel_tons,
    }
    return _json_value(fields, 0) + "\n"


def inventory_csv(records):
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([
            str(r.tree_id), _fmt(r.centroid_x_m), _fmt(r.centroid_y_m), _fmt(r.raw_area_m2),
            _fmt(r.corrected_area_m2), _fmt(r.max_height_m), _fmt(r.sigma_h_tree),
            r.species.value, _fmt(r.lai_effective), _fmt(r.fuel_kg),
        ]))
    return "\n".join(lines) + "\n"


def write_reports(records, summary, out_dir):
    """Write ``inventory.csv`` and ``summary.json``; returns the two paths."""
    if not records:
        raise EmptyInventory("refusing to write an empty inventory")
    check_mass_conservation(
        math.fsum(r.corrected_area_m2 for r in records), summary.footprint_m2
    )
    out = Path(out_dir)
    paths = out / "inventory.csv", out / "summary.json"
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths[0].write_text(inventory_csv(records), encoding="utf-8")
        paths[1].write_text(summary_json(summary), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{out}: {exc.strerror or exc}") from None
    return paths
