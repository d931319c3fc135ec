"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver or
observability error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats, synthetic
from .dataset import build_frame_pairs, load_manifest
from .errors import DataError, SolverError
from .evaluation import line_reprojection_error, render_overlay, stereo_consistency
from .geometry import RigidTransform, rotation_angle
from .solver import CalibrationProblem, SolverConfig, calibrate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("lidarcam_calib")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser():
    p = _Parser(prog="lidarcam-calib", description="LIDAR-camera extrinsic calibration from a planar target")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--config", required=True, help="scene config JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--cloud-format", choices=("csv", "bin"), default="csv")
    s.add_argument("--no-ground-truth", action="store_true", help="omit ground truth from the manifest")

    c = sub.add_parser("calibrate", help="estimate the LIDAR-to-camera transform")
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--init", help="initial transform JSON")
    c.add_argument("--skip-stage2", action="store_true", help="point-to-plane stage only")
    c.add_argument("--seed", type=int, default=0, help="RANSAC seed")

    e = sub.add_parser("evaluate", help="line re-projection error of a calibration")
    e.add_argument("--manifest", required=True)
    e.add_argument("--calib", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--seed", type=int, default=0)

    o = sub.add_parser("project", help="render an SVG overlay for one frame")
    o.add_argument("--manifest", required=True)
    o.add_argument("--calib", required=True)
    o.add_argument("--frame", required=True)
    o.add_argument("--out", required=True)
    o.add_argument("--seed", type=int, default=0)

    st = sub.add_parser("stereo-check", help="compare two calibrations against a stereo reference")
    st.add_argument("--left", required=True)
    st.add_argument("--right", required=True)
    st.add_argument("--reference", required=True)
    st.add_argument("--report", help="write the report JSON here as well")
    return p


def _cmd_simulate(args):
    try:
        scene = synthetic.scene_from_config(formats.read_json(args.config))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed scene config {args.config}: {exc!r}") from exc
    path = synthetic.generate_dataset(scene, args.out, not args.no_ground_truth, args.cloud_format)
    print(f"wrote {len(scene.poses)} frames, manifest {path}")


def _cmd_calibrate(args):
    ds = load_manifest(args.manifest)
    pairs = build_frame_pairs(ds, seed=args.seed)
    init = formats.transform_from_dict(formats.read_json(args.init)) if args.init else RigidTransform()
    problem = CalibrationProblem(pairs, SolverConfig(skip_stage2=args.skip_stage2), init)
    result = calibrate(problem)
    formats.write_json(args.out, result.to_dict())
    print(f"status {result.status}; wrote {args.out}")


def _cmd_evaluate(args):
    ds = load_manifest(args.manifest)
    T = formats.transform_from_dict(formats.read_json(args.calib))
    pairs = build_frame_pairs(ds, seed=args.seed)
    report = line_reprojection_error(pairs, T, ds.intrinsics).to_dict()
    if ds.ground_truth is not None:
        gt = ds.ground_truth
        report["ground_truth_error"] = {
            "rotation_deg": float(np.degrees(rotation_angle(T.rotation @ gt.rotation.T))),
            "translation_m": float(np.linalg.norm(T.t - gt.t)),
        }
    formats.write_json(args.report, report)
    print(f"average line re-projection error {report['global_average_px']} px; wrote {args.report}")


def _cmd_project(args):
    ds = load_manifest(args.manifest)
    T = formats.transform_from_dict(formats.read_json(args.calib))
    raw = ds.frame(args.frame)
    pair = build_frame_pairs(replace(ds, frames=(raw,)), seed=args.seed)[0]
    svg = render_overlay(pair, T, ds.intrinsics, ds.image_size)
    Path(args.out).write_text(svg.to_svg())
    print(f"wrote {args.out}")


def _cmd_stereo(args):
    left = formats.transform_from_dict(formats.read_json(args.left))
    right = formats.transform_from_dict(formats.read_json(args.right))
    ref = formats.transform_from_dict(formats.read_json(args.reference))
    report = stereo_consistency(left, right, ref).to_dict()
    if args.report:
        formats.write_json(args.report, report)
    print(json.dumps(report, indent=2))


COMMANDS = {
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "evaluate": _cmd_evaluate,
    "project": _cmd_project,
    "stereo-check": _cmd_stereo,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
