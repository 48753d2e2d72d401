"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 input/parse error, 3 degenerate data,
4 I/O failure. Logs go to stderr; ``--json`` prints a machine-readable
result on stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import __version__, pipeline, synth
from .bev import thread_count
from .errors import CanopyError, InputError
from .geometry import PointCloud, Sim3Transform
from .inventory import summary_json
from .io.config import PipelineConfig, config_from_mapping, read_config
from .io.ply import write_ply
from .io.trajectory import write_trajectory_csv

log = logging.getLogger("canopyfuel")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _config_args(p):
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--latitude", type=float, help="stand latitude in degrees")


def _load_config(args):
    config = read_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            overrides[key.strip()] = float(value)
        except ValueError:
            raise InputError(f"{key.strip()}: expected a number, got {value!r}") from None
    if args.latitude is not None:
        overrides["latitude_deg"] = args.latitude
    return config_from_mapping(overrides, base=config)


def build_parser():
    parser = _Parser(prog="canopyfuel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("align", help="recover metric scale from camera trajectories")
    p.add_argument("--recon", required=True, type=Path, help="reconstructed trajectory (.csv)")
    p.add_argument("--gt", required=True, type=Path, help="ground-truth trajectory (.csv or .json)")
    p.add_argument("--cloud", required=True, type=Path, help="reconstructed cloud (.ply)")
    p.add_argument("--out", required=True, type=Path, help="metric cloud to write (.ply)")
    p.add_argument("--report", type=Path, help="alignment report to write (.json)")
    p.add_argument("--json", action="store_true", help="print the report on stdout")

    p = sub.add_parser("rasterize", help="level and project a metric cloud")
    p.add_argument("--cloud", required=True, type=Path, help="metric cloud (.ply)")
    p.add_argument("--gt", required=True, type=Path, help="ground-truth trajectory (camera side)")
    p.add_argument("--out-dir", required=True, type=Path)
    _config_args(p)

    p = sub.add_parser("segment", help="delineate trees on the height raster")
    p.add_argument("--height", required=True, type=Path, help="height raster (.bevr1)")
    p.add_argument("--mask", required=True, type=Path, help="canopy mask (.mask1)")
    p.add_argument("--out-dir", required=True, type=Path)
    _config_args(p)

    p = sub.add_parser("inventory", help="species, LAI and fuel load per tree")
    p.add_argument("--height", required=True, type=Path)
    p.add_argument("--mask", required=True, type=Path)
    p.add_argument("--labels", required=True, type=Path, help="label raster (.lblr1)")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--json", action="store_true", help="print the stand summary on stdout")
    _config_args(p)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--cloud", required=True, type=Path)
    p.add_argument("--recon", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--json", action="store_true", help="print the stand summary on stdout")
    _config_args(p)

    p = sub.add_parser("synth", help="write a synthetic stand with known ground truth")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--n-trees", type=int, default=20)
    p.add_argument("--shape", choices=["cone", "hemisphere", "mixed"], default="cone")
    p.add_argument("--extent", type=float, nargs=2, default=(40.0, 40.0), metavar=("W", "D"))
    p.add_argument("--radius", type=float, nargs=2, default=(1.0, 2.0), metavar=("MIN", "MAX"))
    p.add_argument("--spacing", type=float, default=1.5, help="min spacing factor")
    p.add_argument("--density", type=float, default=16.0, help="points per m^2")
    p.add_argument("--noise", type=float, default=0.01, help="noise sigma in metres")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=36)
    p.add_argument("--orbit-radius", type=float, default=60.0)
    p.add_argument("--altitude", type=float, default=80.0)
    p.add_argument("--scale", type=float, default=0.37,
                   help="scale of the fake reconstruction frame")
    p.add_argument("--euler-deg", type=float, nargs=3, default=(12.0, -7.0, 35.0),
                   metavar=("X", "Y", "Z"), help="rotation of the fake reconstruction frame")
    p.add_argument("--translate", type=float, nargs=3, default=(4.0, -3.0, 1.5),
                   metavar=("X", "Y", "Z"))
    return parser


def _cmd_align(args):
    info = pipeline.align(args.recon, args.gt, args.cloud, args.out, args.report)
    if args.json:
        print(json.dumps(info, sort_keys=True))


def _cmd_rasterize(args):
    pipeline.rasterize_stage(args.cloud, args.gt, _load_config(args), args.out_dir)


def _cmd_segment(args):
    pipeline.segment_stage(args.height, args.mask, _load_config(args), args.out_dir)


def _cmd_inventory(args):
    _, summary = pipeline.inventory_stage(
        args.height, args.mask, args.labels, _load_config(args), args.out_dir
    )
    if args.json:
        sys.stdout.write(summary_json(summary))


def _cmd_run(args):
    summary, _ = pipeline.run(args.cloud, args.recon, args.gt, args.out_dir, _load_config(args))
    if args.json:
        sys.stdout.write(summary_json(summary))


def _cmd_synth(args):
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    stand = synth.generate_stand(
        args.n_trees, tuple(args.extent), tuple(args.radius), args.shape, args.spacing, args.seed
    )
    cloud = synth.sample_cloud(stand, args.density, args.noise, args.seed + 1)
    gt = synth.synth_trajectory(stand, args.orbit_radius, args.altitude, args.frames)
    rot = Rotation.from_euler("ZYX", args.euler_deg[::-1], degrees=True).as_matrix()
    fake = Sim3Transform(args.scale, rot, np.asarray(args.translate))
    recon = synth.perturb_sim3(gt, fake.scale, fake.rotation, fake.translation)
    write_ply(PointCloud(fake.apply(cloud.points), cloud.colors), out / "cloud.ply")
    write_trajectory_csv(recon, out / "recon.csv")
    write_trajectory_csv(gt, out / "gt.csv")
    synth.write_truth(stand, out / "truth.json")
    log.info("wrote %d trees, %d points; expected recovered scale %.9f",
             len(stand.trees), len(cloud), fake.inverse().scale)


_COMMANDS = {
    "align": _cmd_align,
    "rasterize": _cmd_rasterize,
    "segment": _cmd_segment,
    "inventory": _cmd_inventory,
    "run": _cmd_run,
    "synth": _cmd_synth,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        thread_count()
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"canopyfuel: {exc}", file=sys.stderr)
        return 1
    except CanopyError as exc:
        print(f"canopyfuel {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"canopyfuel {args.command}: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
