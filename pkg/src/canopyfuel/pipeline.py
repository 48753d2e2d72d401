"""File-to-file pipeline stages.

Each stage reads the previous stage's files and writes its own, so running
the stages one by one gives byte-identical output to :func:`run`.
"""
from __future__ import annotations

import functools
import hashlib
import json
import logging
import time
from pathlib import Path

from scipy.spatial.transform import Rotation

from . import __version__
from .bev import canopy_mask, footprint_area, normalize_height, rasterize
from .errors import CanopyError, DegenerateData, EmptyMask, InputError, IoFailure
from .geometry import align_trajectories, apply_sim3, pca_level
from .inventory import fuel_load, measure_crowns, write_reports
from .io.config import PipelineConfig
from .io.ply import read_ply, write_ply
from .io.rasters import (
    read_bev,
    read_labels,
    read_mask,
    write_bev,
    write_height_preview,
    write_label_preview,
    write_labels,
    write_mask,
)
from .io.trajectory import read_trajectory
from .segmentation import segment

log = logging.getLogger(__name__)

METRIC_PLY = "metric.ply"
ALIGN_JSON = "align.json"
HEIGHT = "height.bevr1"
DENSITY = "density.bevr1"
CANOPY = "canopy.mask1"
LABELS = "labels.lblr1"
HEIGHT_PGM = "height.pgm"
LABELS_PGM = "labels.pgm"
MANIFEST = "manifest.json"


class StageError(CanopyError):
    """Wraps a library error with the name of the stage that raised it."""

    def __init__(self, stage, err):
        super().__init__(f"{stage}: {err}")
        self.stage = stage
        self.cause = err
        self.exit_code = err.exit_code


def _stage(name):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except CanopyError as err:
                raise StageError(name, err) from err
        return inner
    return wrap


def _write_json(obj, path):
    try:
        Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None


def alignment_dict(report):
    t = report.transform
    x, y, z, w = Rotation.from_matrix(t.rotation).as_quat()
    return {
        "scale": t.scale,
        "rotation_wxyz": [w, x, y, z],
        "rotation_matrix": t.rotation.tolist(),
        "translation": t.translation.tolist(),
        "rmse_m": report.rmse_m,
        "n_points": report.n_points,
    }


@_stage("align")
def align(recon_path, gt_path, cloud_path, out_ply, report_path=None):
    """Recover metric scale and write the metric cloud; returns the report dict."""
    recon = read_trajectory(recon_path)
    truth = read_trajectory(gt_path)
    cloud = read_ply(cloud_path)
    try:
        report = align_trajectories(recon, truth)
    except DegenerateData as err:
        raise type(err)(f"{recon_path} vs {gt_path}: {err}") from err
    log.info("sim3: scale %.6f rmse %.4f m over %d frames",
             report.transform.scale, report.rmse_m, report.n_points)
    write_ply(apply_sim3(cloud, report.transform), out_ply)
    info = alignment_dict(report)
    if report_path is not None:
        _write_json(info, report_path)
    return info


@_stage("rasterize")
def rasterize_stage(cloud_path, gt_path, config, out_dir, threads=None):
    """Level the metric cloud, project it and extract the canopy mask."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cloud = read_ply(cloud_path)
    cameras = read_trajectory(gt_path)
    leveled, _ = pca_level(cloud, cameras.positions.mean(axis=0))
    height, density = rasterize(leveled, config.cell_size_m, threads=threads)
    normalized, z_ground, z_top = normalize_height(
        height, config.ground_percentile, config.top_percentile
    )
    mask = canopy_mask(normalized, config.h_min)
    log.info("raster %dx%d, ground %.2f m, top %.2f m, footprint %.1f m^2",
             height.spec.width, height.spec.height, z_ground, z_top, footprint_area(mask))
    write_bev(height, out / HEIGHT)
    write_bev(density, out / DENSITY)
    write_mask(mask, out / CANOPY)
    write_height_preview(normalized, out / HEIGHT_PGM)
    return out / HEIGHT, out / DENSITY, out / CANOPY


def _load_surface(height_path, mask_path, config):
    height = read_bev(height_path)
    mask = read_mask(mask_path)
    if height.spec != mask.spec:
        raise InputError(f"{mask_path}: grid does not match {height_path}")
    normalized, z_ground, _ = normalize_height(
        height, config.ground_percentile, config.top_percentile
    )
    return height, normalized, z_ground, mask


@_stage("segment")
def segment_stage(height_path, mask_path, config, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, normalized, _, mask = _load_surface(height_path, mask_path, config)
    if not mask.mask.any():
        raise EmptyMask("no canopy cells above h_min")
    labels, stats, markers = segment(
        normalized, mask, config.core_alpha, config.min_peak_distance_m
    )
    log.info("core threshold %.3f (mean %.3f, std %.3f); %d trees",
             stats.t_core, stats.mu_h, stats.sigma_h, len(markers))
    write_labels(labels, out / LABELS)
    write_label_preview(labels, out / LABELS_PGM)
    return out / LABELS


@_stage("inventory")
def inventory_stage(height_path, mask_path, labels_path, config, out_dir):
    height, normalized, z_ground, mask = _load_surface(height_path, mask_path, config)
    labels = read_labels(labels_path)
    if labels.spec != mask.spec:
        raise InputError(f"{labels_path}: grid does not match {mask_path}")
    footprint = footprint_area(mask)
    crowns = measure_crowns(labels, normalized, height, z_ground, footprint, config)
    records, summary = fuel_load(crowns, footprint, config)
    log.info("%d trees, footprint %.1f m^2, fuel %.2f t",
             summary.n_trees, summary.footprint_m2, summary.total_fuel_tons)
    write_reports(records, summary, out_dir)
    return records, summary


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def run(cloud_path, recon_path, gt_path, out_dir, config=None, threads=None):
    """Whole pipeline; writes every artifact plus ``manifest.json`` into ``out_dir``."""
    config = config or PipelineConfig()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"{out}: {exc.strerror or exc}") from None
    timings = {}

    t0 = time.perf_counter()
    align(recon_path, gt_path, cloud_path, out / METRIC_PLY, out / ALIGN_JSON)
    timings["align"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    height, _, mask = rasterize_stage(out / METRIC_PLY, gt_path, config, out, threads)
    timings["rasterize"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    labels = segment_stage(height, mask, config, out)
    timings["segment"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    _, summary = inventory_stage(height, mask, labels, config, out)
    timings["inventory"] = (time.perf_counter() - t0) * 1e3

    outputs = sorted(p for p in out.iterdir() if p.is_file() and p.name != MANIFEST)
    manifest = {
        "tool": "canopyfuel",
        "version": __version__,
        "inputs": {
            "cloud": str(Path(cloud_path).resolve()),
            "recon": str(Path(recon_path).resolve()),
            "gt": str(Path(gt_path).resolve()),
        },
        "config": config.to_dict(),
        "timings_ms": {k: round(v, 3) for k, v in timings.items()},
        "outputs": [{"path": p.name, "sha256": sha256(p)} for p in outputs],
    }
    _write_json(manifest, out / MANIFEST)
    return summary, manifest


def verify_manifest(out_dir):
    """Names of files whose hash no longer matches the manifest."""
    out = Path(out_dir)
    manifest = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
    return [e["path"] for e in manifest["outputs"] if sha256(out / e["path"]) != e["sha256"]]
