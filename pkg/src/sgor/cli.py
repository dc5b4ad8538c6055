"""Command-line front end: ``sgor register | generate | eval | ablate``.

Reports go to standard output (or ``--output``) as JSON or CSV;
diagnostics go to standard error.

Exit codes
----------
0  success
2  usage or configuration error
3  unreadable or malformed input (MalformedFile, LengthMismatch, ...)
4  semantic overlap is empty (EmptyOverlap)
5  no candidate transform survived (NoCandidates)
6  a local group could not be formed (GroupTooSmall, TooFewPoints)
7  degenerate geometry in a solve (DegenerateConfiguration)
8  no ground plane could be found (NoGroundPoints)
10 any other pipeline error
"""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli_w

from . import __version__
from . import io
from .config import VARIANTS, PipelineConfig, tomllib
from .core import RigidTransform
from .correspond import DescriptorSet
from .errors import EXIT_CODES, InputError, SGORError
from .harness import ROW_FIELDS, PRESETS, TrialCondition, gt_guided_correspondences, recall, run_trial
from .metrics import THRESHOLDS, evaluate
from .pipeline import register, run_report
from .synth import SceneSpec, generate_scene_pair, make_rng

log = logging.getLogger("sgor")

_DESC_STREAM = 6


class UsageError(Exception):
    pass


def _parse_value(text: str):
    """A ``--set`` value as TOML, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def build_config(args) -> PipelineConfig:
    """Defaults, then the config file, then ``--set`` overrides, then the variant."""
    data: dict[str, object] = {}
    if getattr(args, "config", None):
        try:
            data.update(tomllib.loads(Path(args.config).read_text(encoding="utf-8")))
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc.strerror}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"config {args.config}: {exc}") from exc
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        data[key.strip()] = _parse_value(value.strip())
    try:
        config = PipelineConfig.from_dict(data)
        if getattr(args, "variant", None):
            config = config.with_variant(args.variant)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return config


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
        log.info("wrote %s", output)
    else:
        sys.stdout.write(text)


def cmd_register(args) -> int:
    config = build_config(args)
    src = io.load_point_cloud(args.source, args.source_labels)
    tgt = io.load_point_cloud(args.target, args.target_labels)
    gt = io.read_pose(args.gt) if args.gt else None
    log.info("source %d points, target %d points", len(src), len(tgt))
    if args.synthetic_match:
        if gt is None:
            raise UsageError("--synthetic-match needs --gt")
        g, _ = gt_guided_correspondences(src, tgt, gt, args.matches, args.inlier_ratio,
                                         args.seed, config.sigma_d, config.ground_labels)
        result = register(src, tgt, config, correspondences=g)
    elif args.descriptors:
        d_src, d_tgt = (io.read_descriptors(p) for p in args.descriptors)
        try:
            descs = (DescriptorSet(d_src), DescriptorSet(d_tgt))
        except ValueError as exc:
            raise InputError(f"descriptors: {exc}") from exc
        result = register(src, tgt, config, descriptors=descs)
    else:
        raise UsageError("pass --descriptors SRC TGT or --synthetic-match")
    report = run_report(result, src, tgt, gt, args.variant or None, include_timing=not args.no_timing)
    report["seed"] = args.seed
    _emit(json.dumps(report, indent=2) + "\n", args.output)
    if report["metrics"] is not None:
        m = report["metrics"]
        log.info("RE %.3f deg, TE %.2f cm, easy success %s", m["re_deg"], m["te_cm"], m["success"]["easy"])
    return 0


def _synthetic_descriptors(pair, dim: int, noise: float, seed: int):
    """Random source descriptors; each target point copies its counterpart's plus noise."""
    rng = make_rng(seed, _DESC_STREAM)
    d_src = rng.normal(size=(len(pair.source), dim))
    d_tgt = rng.normal(size=(len(pair.target), dim))
    has = pair.counterpart >= 0
    d_tgt[pair.counterpart[has]] = d_src[has] + rng.normal(0.0, noise, size=(int(has.sum()), dim))
    return d_src, d_tgt


def cmd_generate(args) -> int:
    if not args.output:
        raise UsageError("generate needs --output DIR")
    if args.scene:
        try:
            data = tomllib.loads(Path(args.scene).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read scene spec {args.scene}: {exc.strerror}") from exc
        data.setdefault("rng_seed", args.seed)
        spec = SceneSpec.from_dict(data)
    else:
        spec = PRESETS[args.preset](args.seed)
    pair = generate_scene_pair(spec, (args.rotation, args.translation))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    precision = "float" if args.single_precision else "double"
    io.write_ply(out / "source.ply", pair.source, binary=not args.ascii, precision=precision)
    io.write_ply(out / "target.ply", pair.target, binary=not args.ascii, precision=precision)
    io.write_pose(out / "gt_pose.txt", pair.gt)
    (out / "scene.toml").write_text(tomli_w.dumps(_toml_ready(spec.to_dict())), encoding="utf-8")
    written = ["source.ply", "target.ply", "gt_pose.txt", "scene.toml"]
    if args.descriptor_dim:
        d_src, d_tgt = _synthetic_descriptors(pair, args.descriptor_dim, args.descriptor_noise, args.seed)
        io.write_descriptors(out / "source.desc", d_src)
        io.write_descriptors(out / "target.desc", d_tgt)
        written += ["source.desc", "target.desc"]
    summary = {"schema": "sgor.generate/1", "directory": str(out), "files": written,
               "source_points": len(pair.source), "target_points": len(pair.target),
               "gt": pair.gt.as_matrix().tolist()}
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return 0


def _toml_ready(obj):
    if isinstance(obj, dict):
        return {k: _toml_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_toml_ready(v) for v in obj]
    return obj


def _load_estimate(path: str) -> RigidTransform:
    if Path(path).suffix.lower() == ".json":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            return RigidTransform.from_matrix(np.array(data["transform"], dtype=np.float64))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise InputError(f"cannot read a transform from report {path}: {exc}") from exc
    return io.read_pose(path)


def cmd_eval(args) -> int:
    est = _load_estimate(args.estimate)
    gt = io.read_pose(args.gt)
    report = {"schema": "sgor.eval/1", **evaluate(est, gt, THRESHOLDS).to_dict()}
    _emit(json.dumps(report, indent=2) + "\n", args.output)
    return 0


def load_sweep(path: str):
    """Parse a sweep spec into (conditions, variants, seeds, base config)."""
    try:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read sweep spec {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"sweep spec {path}: {exc}") from exc
    unknown = set(data) - {"variants", "seeds", "seed_count", "seed_start", "config", "condition"}
    if unknown:
        raise UsageError(f"unknown sweep keys {sorted(unknown)}")
    try:
        conditions = [TrialCondition.from_dict(c) for c in data.get("condition", [{}])]
        base = PipelineConfig.from_dict(data.get("config", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    names = [c.name for c in conditions]
    if len(set(names)) != len(names):
        raise UsageError("condition names must be unique")
    variants = list(data.get("variants", ["full"]))
    for v in variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}; choose from {sorted(VARIANTS)}")
    if "seeds" in data:
        seeds = [int(s) for s in data["seeds"]]
    else:
        start = int(data.get("seed_start", 0))
        seeds = list(range(start, start + int(data.get("seed_count", 1))))
    return conditions, variants, seeds, base


def _row_job(job):
    cond, variant, seed, base = job
    return run_trial(cond, variant, seed, base)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def cmd_ablate(args) -> int:
    conditions, variants, seeds, base = load_sweep(args.sweep)
    if args.config or args.set:
        base = build_config(argparse.Namespace(config=args.config, set=args.set, variant=None))
    if args.variant:
        variants = [args.variant]
    if args.seed_given:
        seeds = [args.seed]
    jobs = [(c, v, s, base) for c in conditions for v in variants for s in seeds]
    log.info("%d runs: %d conditions x %d variants x %d seeds",
             len(jobs), len(conditions), len(variants), len(seeds))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_row_job, jobs))  # map keeps the job order
    else:
        rows = [_row_job(j) for j in jobs]
    buf = _stdio.StringIO()
    writer = csv.DictWriter(buf, fieldnames=ROW_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in ROW_FIELDS})
    _emit(buf.getvalue(), args.output)
    for c in conditions:
        for v in variants:
            sel = [r for r in rows if r["condition"] == c.name and r["variant"] == v]
            failed = sum(r["status"] != "ok" for r in sel)
            print(f"{c.name:<16} {v:<18} RR easy {recall(sel):.3f}  hard {recall(sel, 'rr_hard'):.3f}"
                  f"  ({len(sel)} runs, {failed} failed)", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="TOML pipeline configuration")
    shared.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    shared.add_argument("--seed", type=int, default=None, metavar="U64", help="random seed (default 0)")
    shared.add_argument("--variant", choices=sorted(VARIANTS), help="ablation variant")
    shared.add_argument("--output", metavar="PATH", help="write the report here instead of stdout")
    shared.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="sgor", description="Semantic-geometric outlier removal and registration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", parents=[shared], help="register a source cloud onto a target cloud")
    p.add_argument("source", help="source cloud (.ply or KITTI .bin)")
    p.add_argument("target", help="target cloud (.ply or KITTI .bin)")
    p.add_argument("--source-labels", metavar="PATH", help="KITTI .label file for the source")
    p.add_argument("--target-labels", metavar="PATH", help="KITTI .label file for the target")
    p.add_argument("--descriptors", nargs=2, metavar=("SRC", "TGT"), help="binary descriptor files")
    p.add_argument("--synthetic-match", action="store_true",
                   help="draw correspondences from the ground-truth pose instead of descriptors")
    p.add_argument("--matches", type=int, default=1000, help="synthetic correspondence count")
    p.add_argument("--inlier-ratio", type=float, default=0.1, help="synthetic inlier ratio")
    p.add_argument("--gt", metavar="PATH", help="ground-truth pose (adds a metric block)")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock timings from the report")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("generate", parents=[shared], help="write a synthetic scene pair")
    p.add_argument("--preset", choices=sorted(PRESETS), default="urban")
    p.add_argument("--scene", metavar="PATH", help="TOML scene spec (overrides --preset)")
    p.add_argument("--rotation", type=float, default=180.0, help="max rotation, degrees")
    p.add_argument("--translation", type=float, default=10.0, help="max translation, meters")
    p.add_argument("--ascii", action="store_true", help="ascii PLY instead of binary")
    p.add_argument("--single-precision", action="store_true", help="store coordinates as float32")
    p.add_argument("--descriptor-dim", type=int, default=0, help="also write synthetic descriptors")
    p.add_argument("--descriptor-noise", type=float, default=1.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", parents=[shared], help="score an estimated pose against ground truth")
    p.add_argument("--estimate", required=True, metavar="PATH", help="pose file or register report (.json)")
    p.add_argument("--gt", required=True, metavar="PATH", help="ground-truth pose")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[shared], help="run a seeded sweep and write CSV rows")
    p.add_argument("sweep", help="TOML sweep spec")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sgor: error: {exc}", file=sys.stderr)
        return EXIT_CODES["usage"]
    except SGORError as exc:
        print(f"sgor: {exc.stage} stage failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
