"""Command-line front end.

Subcommands: ``register`` (one cloud pair), ``bench`` (batch evaluation
over a cloud directory and pose file) and ``synth`` (generate synthetic
scans with exact labels and poses). Exit codes: 0 success, 1 I/O or
argument error, 2 registration failure report.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, io, pipeline, synth
from .core import QuatroConfig
from .features import SENSOR_PRESETS

JSON_SCHEMA_VERSION = 1


def _add_pipeline_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--sensor", choices=sorted(SENSOR_PRESETS), help="feature radius preset")
    parser.add_argument("--no-ground-seg", action="store_true", help="disable ground removal")
    parser.add_argument("--c2f", action="store_true", help="run the ICP fine stage")
    parser.add_argument("--ins", metavar="ROLL,PITCH", help="roll/pitch compensation in degrees")
    parser.add_argument("--clique-budget-ms", type=float, help="clique search wall-clock budget")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="use a node-expansion budget instead of wall clock in the clique search",
    )


def _build_config(args) -> QuatroConfig:
    if args.config:
        config = QuatroConfig.from_text(Path(args.config).read_text())
    else:
        config = QuatroConfig()
    if args.clique_budget_ms is not None:
        config.clique_time_budget = args.clique_budget_ms
    return config


def _build_mode(args) -> pipeline.PipelineMode:
    ins = None
    if args.ins:
        parts = args.ins.split(",")
        if len(parts) != 2:
            raise ValueError("--ins expects ROLL,PITCH in degrees")
        ins = (float(parts[0]), float(parts[1]))
    return pipeline.PipelineMode(
        ground_seg=not args.no_ground_seg,
        ins=ins,
        fine_align=args.c2f,
        sensor=args.sensor,
        deterministic=args.deterministic,
    )


def _load_cloud(path: str):
    suffix = Path(path).suffix.lower()
    if suffix == ".bin":
        return io.read_kitti_bin(path)
    if suffix == ".ply":
        return io.read_ply_ascii(path)
    raise io.FormatError(f"{path}: unsupported cloud format {suffix!r} (use .bin or .ply)")


def cmd_register(args) -> int:
    try:
        src = _load_cloud(args.src)
        tgt = _load_cloud(args.tgt)
        config = _build_config(args)
        mode = _build_mode(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.c2f:
        report = pipeline.register_c2f(src, tgt, config, mode)
    else:
        report = pipeline.register(src, tgt, config, mode)

    mat = report.motion.matrix()
    print("motion (4x4, row-major):")
    for row in mat:
        print("  " + " ".join(f"{v: .9f}" for v in row))
    print(
        f"raw={report.num_raw_pairs} pruned={report.num_pruned_pairs} "
        f"inliers={report.num_final_inliers} converged={report.converged} "
        f"degenerate={report.degenerate}"
    )
    if report.mse_fitness is not None:
        print(f"mse_fitness={report.mse_fitness:.6f}")
    for stage, ms in report.stage_timings.items():
        print(f"  {stage}: {ms:.2f} ms")
    if args.json:
        payload = {"schema_version": JSON_SCHEMA_VERSION, **report.to_json_dict()}
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n")
    return 0 if report.num_pruned_pairs > 0 else 2


def _parse_bands(band_args) -> list:
    bands = []
    for raw in band_args or []:
        lo, _, hi = raw.partition(":")
        bands.append((float(lo), float(hi)))
    return bands


def cmd_bench(args) -> int:
    try:
        config = _build_config(args)
        mode = _build_mode(args)
        traj = io.read_kitti_poses(args.poses)
        cloud_paths = sorted(Path(args.clouds).glob("*.bin")) + sorted(
            Path(args.clouds).glob("*.ply")
        )
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if len(cloud_paths) != len(traj):
        print(
            f"error: {len(cloud_paths)} clouds but {len(traj)} poses", file=sys.stderr
        )
        return 1

    cache: dict = {}

    def loader(idx: int):
        if idx not in cache:
            cache[idx] = _load_cloud(str(cloud_paths[idx]))
        return cache[idx]

    per_band: dict = {}
    if args.mode == "loop":
        bands = _parse_bands(args.band) or [(2.0, 6.0)]
        for lo, hi in bands:
            pairs = bench.sample_loop_pairs(traj, lo, hi, args.min_gap, args.n, args.seed)
            per_band[f"{lo:g}-{hi:g}m"] = bench.run_pairs(
                pairs, loader, config, mode, c2f=args.c2f
            )
    elif args.mode == "odom":
        pairs = bench.sample_odom_pairs(traj, args.delta)
        per_band[f"odom-delta{args.delta}"] = bench.run_pairs(
            pairs, loader, config, mode, c2f=args.c2f
        )
    else:  # aug
        yaws = [float(v) for v in args.yaws.split(",")] if args.yaws else [0.0]
        pairs = bench.sample_augmented_pairs(traj, args.delta, yaws)
        per_band[f"aug-delta{args.delta}"] = bench.run_pairs(
            pairs, loader, config, mode, c2f=args.c2f
        )

    all_rows = [row for rows in per_band.values() for row in rows]
    if args.csv:
        bench.write_csv(all_rows, args.csv)
    if args.json:
        bench.write_summary_json(per_band, config, args.seed, args.json)
    for label, rows in per_band.items():
        if rows:
            m = bench.compute_metrics(rows)
            print(
                f"{label}: n={m['n']} success={m['success_rate']:.1%} "
                f"t_rmse={m['t_rmse']:.3f}m r_avg={m['r_avg_deg']:.3f}deg"
            )
        else:
            print(f"{label}: no pairs sampled")
    return 0


def cmd_synth(args) -> int:
    try:
        if args.spec:
            spec = synth.SceneSpec.from_json(Path(args.spec).read_text())
        else:
            spec = synth.SceneSpec()
        if args.buildings is not None:
            spec.n_buildings = args.buildings
        if args.poles is not None:
            spec.n_poles = args.poles
        if args.extent is not None:
            spec.extent = args.extent
        if args.noise is not None:
            spec.noise_sigma = args.noise
        if spec.extent <= 0 or spec.n_buildings < 0 or spec.n_poles < 0:
            raise ValueError("invalid scene spec")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "labels").mkdir(exist_ok=True)
        traj = synth.make_path(args.path, args.frames, args.spacing, args.loop_offset)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    pose_lines = []
    n_ground = 0
    n_total = 0
    for frame, (cloud, labels) in enumerate(synth.generate_sequence(spec, traj, args.seed)):
        io.write_kitti_bin(cloud, out / f"{frame:06d}.bin")
        np.savetxt(out / "labels" / f"{frame:06d}.txt", labels.astype(np.int8), fmt="%d")
        pose = traj.poses[frame]
        mat = np.hstack([pose.rotation, pose.translation.reshape(3, 1)])
        pose_lines.append(" ".join(f"{v:.9f}" for v in mat.reshape(-1)))
        n_ground += int(labels.sum())
        n_total += len(labels)
    (out / "poses.txt").write_text("\n".join(pose_lines) + "\n")
    (out / "scene.json").write_text(spec.to_json() + "\n")
    share = n_ground / max(n_total, 1)
    print(f"wrote {len(traj)} frames to {out} ({n_total} points, {share:.0%} ground)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="quatropp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_reg = sub.add_parser("register", help="register one source/target cloud pair")
    p_reg.add_argument("src")
    p_reg.add_argument("tgt")
    _add_pipeline_flags(p_reg)
    p_reg.add_argument("--json", help="write the report as JSON")
    p_reg.set_defaults(func=cmd_register)

    p_bench = sub.add_parser("bench", help="batch benchmark over a scan directory")
    p_bench.add_argument("clouds", help="directory of .bin/.ply scans")
    p_bench.add_argument("poses", help="pose file, 12 reals per line")
    _add_pipeline_flags(p_bench)
    p_bench.add_argument("--mode", choices=("loop", "odom", "aug"), default="loop")
    p_bench.add_argument("--band", action="append", metavar="LO:HI", help="loop distance band")
    p_bench.add_argument("--min-gap", type=int, default=50, help="minimum frame gap of loop pairs")
    p_bench.add_argument("--n", type=int, default=1000, help="loop pairs to sample")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--delta", type=int, default=5, help="odometry frame interval")
    p_bench.add_argument("--yaws", help="comma-separated augmentation yaws in degrees")
    p_bench.add_argument("--csv", help="write per-pair rows as CSV")
    p_bench.add_argument("--json", help="write the summary as JSON")
    p_bench.set_defaults(func=cmd_bench)

    p_synth = sub.add_parser("synth", help="generate synthetic scans + poses + labels")
    p_synth.add_argument("out", help="output directory")
    p_synth.add_argument("--frames", type=int, default=8)
    p_synth.add_argument("--spacing", type=float, default=1.0)
    p_synth.add_argument("--path", choices=("line", "loop"), default="line")
    p_synth.add_argument("--loop-offset", type=float, default=4.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--spec", help="scene spec JSON file")
    p_synth.add_argument("--buildings", type=int)
    p_synth.add_argument("--poles", type=int)
    p_synth.add_argument("--extent", type=float)
    p_synth.add_argument("--noise", type=float)
    p_synth.set_defaults(func=cmd_synth)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except io.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
