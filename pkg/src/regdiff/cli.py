"""Command line entry point: generate, detect, eval and warp-debug.

Exit status is 0 on success, 1 on bad input and 2 when registration fails.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import io
from .detect import DetectConfig, run_detection
from .dfrm import (
    GroundTruthPose, HomographyEstimated, HomographySupplied, Identity, Transform3DEstimated,
    Transform3DSupplied, build_plan, warp_and_difference,
)
from .errors import GenerationFailure, InputDomainError, RegdiffError, RegistrationFailure
from .evaluate import evaluate_pairs
from .featgrid import RenderConfig
from .features import FeatureConfig, extract_pair
from .geometry import Homography2D, RansacConfig, Transform3D
from .synthgen import GeneratorConfig, easy_suite_config, make_change_pair, planar_suite_config

log = logging.getLogger("regdiff")

STRATEGIES = ("identity", "homography_supplied", "homography_estimated", "transform3d_supplied",
              "transform3d_estimated", "ground_truth_pose")
PRESETS = {"default": GeneratorConfig, "easy": easy_suite_config, "planar": planar_suite_config}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _section(cls, table: dict, name: str):
    known = {f.name for f in fields(cls)}
    extra = set(table) - known
    if extra:
        raise InputDomainError(f"[{name}] has unknown keys: {sorted(extra)}")
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in table.items()})


class RunConfig:
    """Settings read from a TOML file; every section is optional."""

    def __init__(self, doc: dict | None = None):
        doc = dict(doc or {})
        unknown = set(doc) - {"strategy", "features", "render", "detect", "generator"}
        if unknown:
            raise InputDomainError(f"unknown config sections: {sorted(unknown)}")
        strat = dict(doc.get("strategy", {}))
        self.strategy = strat.pop("name", "ground_truth_pose")
        if self.strategy not in STRATEGIES:
            raise InputDomainError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        self.matrix = strat.pop("matrix", None)
        self.ransac = _section(RansacConfig, strat.pop("ransac", {}), "strategy.ransac")
        if strat:
            raise InputDomainError(f"[strategy] has unknown keys: {sorted(strat)}")
        self.features = _section(FeatureConfig, doc.get("features", {}), "features")
        self.render = _section(RenderConfig, doc.get("render", {}), "render")
        self.detect = _section(DetectConfig, doc.get("detect", {}), "detect")
        gen = dict(doc.get("generator", {}))
        preset = gen.pop("preset", "default")
        if preset not in PRESETS:
            raise InputDomainError(f"unknown generator preset {preset!r}")
        base = PRESETS[preset]()
        self.generator = GeneratorConfig.from_dict({**_asdict(base), **gen})

    @classmethod
    def load(cls, path) -> "RunConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise InputDomainError(f"config file {path} does not exist")
        try:
            return cls(tomllib.loads(path.read_text()))
        except tomllib.TOMLDecodeError as e:
            raise InputDomainError(f"{path}: {e}") from None
        except TypeError as e:
            raise InputDomainError(f"{path}: {e}") from None

    @property
    def needs_depth(self) -> bool:
        return self.strategy in ("transform3d_supplied", "transform3d_estimated", "ground_truth_pose")

    @property
    def needs_cameras(self) -> bool:
        return self.strategy == "ground_truth_pose"

    @property
    def needs_correspondences(self) -> bool:
        return self.strategy.endswith("_estimated")

    def make_strategy(self, pair: io.PairInputs):
        name = self.strategy
        if name == "identity":
            return Identity()
        if name.endswith("_supplied"):
            n = 3 if name.startswith("homography") else 4
            if self.matrix is None or len(self.matrix) != n * n:
                raise InputDomainError(f"{name} needs [strategy] matrix with {n * n} row-major values")
            m = np.asarray(self.matrix, dtype=np.float64).reshape(n, n)
            return HomographySupplied(Homography2D(m)) if n == 3 else Transform3DSupplied(Transform3D(m))
        if name == "ground_truth_pose":
            if pair.cam1 is None or pair.cam2 is None:
                raise InputDomainError("ground_truth_pose strategy needs cameras (--cameras)")
            return GroundTruthPose(pair.cam1, pair.cam2)
        if pair.correspondences is None:
            raise InputDomainError(f"{name} strategy needs correspondences (--correspondences)")
        if name == "homography_estimated":
            return HomographyEstimated(pair.correspondences)
        return Transform3DEstimated(pair.correspondences, self.ransac)


def _asdict(cfg) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def _threads() -> int:
    raw = os.environ.get("REGDIFF_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise InputDomainError(f"REGDIFF_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _map(fn, items):
    items = list(items)
    workers = min(_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN and inf to None, floats to 6 decimals."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer, bool, int)):
        return obj if isinstance(obj, bool) else int(obj)
    if isinstance(obj, (float, np.floating)):
        return round(float(obj), 6) if math.isfinite(obj) else None
    return obj


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def _generate_one(job):
    cfg, seed, out = job
    try:
        return str(io.write_sample(make_change_pair(cfg, seed), out))
    except GenerationFailure as e:
        log.warning("skipping seed %d: %s", seed, e)
        return None


def cmd_generate(args) -> int:
    cfg = RunConfig.load(args.config)
    if args.count < 0:
        raise InputDomainError("--count must be non-negative")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    made: list[str] = []
    seed = args.seed
    # failed seeds are replaced by the next ones so that exactly --count samples appear
    while len(made) < args.count and seed < args.seed + 10 * max(args.count, 1):
        batch = range(seed, seed + args.count - len(made))
        seed = batch.stop
        made += [d for d in _map(_generate_one, [(cfg.generator, s, out) for s in batch]) if d]
    if len(made) < args.count:
        raise GenerationFailure(f"only {len(made)} of {args.count} samples could be generated")
    io.write_json(out / "index.json", {"config_digest": cfg.generator.digest(),
                                       "samples": [Path(d).name for d in made]})
    print(f"wrote {len(made)} samples to {out}")
    return 0


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def _detect_pair(pair: io.PairInputs, cfg: RunConfig, out: Path, overlays: bool) -> dict:
    res = run_detection(pair.rgb1, pair.rgb2, pair.depth1, pair.depth2, cfg.make_strategy(pair),
                        cfg.features, cfg.render, cfg.detect)
    out.mkdir(parents=True, exist_ok=True)
    io.save_predictions(out / "predictions.json", res.boxes1, res.boxes2)
    if overlays:
        io.draw_overlay(out / "overlay1.png", pair.rgb1, res.boxes1)
        io.draw_overlay(out / "overlay2.png", pair.rgb2, res.boxes2)
    diag = res.plan.diagnostics if res.plan is not None else {"registration": "failed"}
    return _clean({"name": pair.name, "boxes1": len(res.boxes1), "boxes2": len(res.boxes2), "diagnostics": diag})


def _detect_dir(job):
    path, cfg, out, overlays = job
    pair = io.load_pair(path, cfg.needs_depth, cfg.needs_cameras, cfg.needs_correspondences)
    return _detect_pair(pair, cfg, out, overlays)


def cmd_detect(args) -> int:
    cfg = RunConfig.load(args.config)
    out = Path(args.out)
    overlays = not args.no_overlays
    if args.pair is not None:
        if args.img1 or args.img2:
            raise InputDomainError("give either --pair or --img1/--img2, not both")
        dirs = io.sample_dirs(args.pair)
        single = io.is_sample_dir(args.pair)
        jobs = [(d, cfg, out if single else out / d.name, overlays) for d in dirs]
        entries = _map(_detect_dir, jobs)
    else:
        if not (args.img1 and args.img2):
            raise InputDomainError("detect needs --pair DIR or both --img1 and --img2")
        pair = io.PairInputs(io.load_image(args.img1), io.load_image(args.img2))
        if cfg.needs_depth:
            missing = [f"--{n}" for n in ("depth1", "depth2") if getattr(args, n) is None]
            if missing:
                raise InputDomainError(f"{cfg.strategy} strategy needs {' and '.join(missing)}")
        if args.depth1 and args.depth2 and cfg.needs_depth:
            pair.depth1, pair.depth2 = io.load_depth(args.depth1), io.load_depth(args.depth2)
        if args.cameras:
            pair.cam1, pair.cam2, _ = io.load_cameras(args.cameras)
        if args.correspondences:
            pair.correspondences = io.load_correspondences(args.correspondences)
        entries = [_detect_pair(pair, cfg, out, overlays)]
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "index.json", {"strategy": cfg.strategy, "pairs": entries})
    print(f"wrote predictions for {len(entries)} pair(s) to {out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    gt_dirs = io.sample_dirs(args.gt)
    pred_root = Path(args.pred)
    preds, gts = [], []
    for d in gt_dirs:
        candidates = [pred_root / d.name / "predictions.json"]
        if len(gt_dirs) == 1:
            candidates.insert(0, pred_root / "predictions.json")
        found = next((c for c in candidates if c.exists()), None)
        if found is None:
            raise InputDomainError(f"no predictions for {d.name} under {pred_root}")
        preds.append(io.load_predictions(found))
        gts.append(io.load_gt_boxes(d / "gt_boxes.json"))
    res = evaluate_pairs(preds, gts, args.iou)
    out = Path(args.out) if args.out else pred_root / "eval.json"
    io.write_json(out, res.to_dict())
    print(f"AP@{args.iou:g}: {res.ap:.4f}")
    for t, ap in res.per_iou.items():
        if t != args.iou:
            print(f"AP@{t:g}: {ap:.4f}")
    return 0


# ---------------------------------------------------------------------------
# warp-debug
# ---------------------------------------------------------------------------

def cmd_warp_debug(args) -> int:
    cfg = RunConfig.load(args.config)
    if not io.is_sample_dir(args.pair):
        raise InputDomainError(f"{args.pair} is not a sample directory")
    pair = io.load_pair(args.pair, cfg.needs_depth, cfg.needs_cameras, cfg.needs_correspondences)
    strategy = cfg.make_strategy(pair)
    plan = build_plan(strategy, pair.depth1, pair.depth2)
    p1, p2 = extract_pair(pair.rgb1, pair.rgb2, cfg.features)
    if not 0 <= args.level < len(p1):
        raise InputDomainError(f"--level must lie in [0, {len(p1) - 1}]")
    d1, d2 = (pair.depth1, pair.depth2) if strategy.needs_depth else (None, None)
    h1, h2 = warp_and_difference(p1, p2, d1, d2, plan, cfg.render)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lv = args.level
    for tag, lev, pyr in (("2to1", h1[lv], p1), ("1to2", h2[lv], p2)):
        target = "1" if tag == "2to1" else "2"
        top = float(np.linalg.norm(pyr[lv].data, axis=0).max())
        io.save_gray(out / f"level{lv}_warped_{tag}.png", np.linalg.norm(lev.rendered.data, axis=0), top)
        io.save_gray(out / f"level{lv}_target_{target}.png", np.linalg.norm(pyr[lv].data, axis=0), top)
        io.save_gray(out / f"level{lv}_mask_{tag}.png", lev.mask, 1.0)
        io.save_gray(out / f"level{lv}_diff_{target}.png", np.linalg.norm(lev.diff.data, axis=0))
    io.write_json(out / "plan.json", _clean(plan.diagnostics))
    print(f"wrote level {lv} warp images to {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="regdiff", description="Two-view change detection by registering and differencing features.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic change pairs")
    g.add_argument("--config", help="TOML run configuration")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0, help="first seed (default 0)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", help="predict change boxes for one pair or a directory of pairs")
    d.add_argument("--config", help="TOML run configuration")
    d.add_argument("--pair", help="sample directory, or a directory of sample directories")
    d.add_argument("--img1")
    d.add_argument("--img2")
    d.add_argument("--depth1")
    d.add_argument("--depth2")
    d.add_argument("--cameras", help="JSON with image_size, cam1 and cam2")
    d.add_argument("--correspondences", help='JSON {"pairs": [[x1, y1, x2, y2], ...]}')
    d.add_argument("--out", required=True)
    d.add_argument("--no-overlays", action="store_true", help="skip the overlay PNGs")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="average precision of predictions against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--iou", type=float, default=0.5)
    e.add_argument("--out", help="EvalResult JSON path (default PRED/eval.json)")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("warp-debug", help="write warped features and visibility masks of one level")
    w.add_argument("--config", help="TOML run configuration")
    w.add_argument("--pair", required=True)
    w.add_argument("--level", type=int, default=0)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_warp_debug)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RegistrationFailure as e:
        print(f"registration failed: {e}", file=sys.stderr)
        return 2
    except (RegdiffError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
