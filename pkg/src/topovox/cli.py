"""Command-line surface tying the modules into reproducible runs.

Exit codes: 0 on success, 1 on a domain error (invalid data, solver failure,
bad sample), 2 on usage errors. Runs with identical argv, inputs, seed and
deterministic mode produce byte-identical outputs.

A config file of ``key = value`` lines (keys matching the long option names,
``#`` comments allowed) can pre-set any option; explicit flags win. When the
environment variable TOPOVOX_DATA_DIR is set, relative input paths that do
not exist locally are resolved against it.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import evaluate as ev
from . import io as tio
from . import preproc, predictors, simp, symmetry
from .elasticity import assemble_loads, compliance, solve_displacements, von_mises
from .errors import TopovoxError
from .grid import binarize, validate_problem


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.is_absolute() and not p.exists():
        base = os.environ.get("TOPOVOX_DATA_DIR")
        if base and (Path(base) / p).exists():
            return Path(base) / p
    return p


def _load_config(path: str) -> dict:
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TopovoxError(f"config line without '=': {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value.strip("\"'")
    return values


def _build_cfg(args) -> preproc.PreprocConfig:
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    kinds = tuple("convex_hull" if k == "hull" else k for k in kinds)
    cfg = preproc.PreprocConfig(kinds=kinds, pde_output=args.pde_output)
    if args.cfg:
        saved = json.loads(_resolve(args.cfg).read_text())
        return preproc.PreprocConfig(
            kinds=kinds,
            pde_output=args.pde_output,
            force_norm=saved.get("force_norm"),
            stress_norm=saved.get("stress_norm"),
        )
    fit_dirs = [d for spec in args.fit for d in spec.split(",") if d]
    if not fit_dirs:
        fit_dirs = [args.sample]  # fit on the sample itself by default
    training = [tio.read_sample(_resolve(d))[0] for d in fit_dirs]
    return preproc.fit_normalization(training, cfg)


def _cmd_validate(args) -> int:
    problem, _ = tio.read_sample(_resolve(args.sample))
    report = validate_problem(problem)
    if report.ok:
        print("valid")
        return 0
    for code, message in report.violations:
        print(f"violation {code}: {message}", file=sys.stderr)
    return 1


def _cmd_convert(args) -> int:
    src, dst = _resolve(args.src), Path(args.dst)
    if src.is_dir():
        problem, gt = tio.read_sample(src)
        payload = {
            "dims": np.asarray(problem.dims),
            "voxel_size": np.asarray(problem.voxel_size),
            "material": np.asarray(
                [
                    problem.material.young_modulus,
                    problem.material.poisson_ratio,
                    problem.material.yield_stress,
                    problem.material.penalization_p,
                    problem.material.rho_min,
                ]
            ),
            "volume_fraction_max": np.asarray(problem.volume_fraction_max),
            "dirichlet": problem.dirichlet,
            "forces": problem.forces,
            "design": problem.design,
        }
        if gt is not None:
            payload["density"] = gt
        np.savez(dst, **payload)
    else:
        from .grid import Material, Problem

        with np.load(src) as data:
            mat = data["material"]
            problem = Problem(
                dims=tuple(int(d) for d in data["dims"]),
                voxel_size=tuple(float(s) for s in data["voxel_size"]),
                material=Material(*(float(v) for v in mat)),
                dirichlet=data["dirichlet"],
                forces=data["forces"],
                design=data["design"],
                volume_fraction_max=float(data["volume_fraction_max"]),
            )
            gt = data["density"] if "density" in data else None
        tio.write_sample(dst, problem, gt)
    return 0


def _cmd_solve(args) -> int:
    problem, gt = tio.read_sample(_resolve(args.sample))
    if args.density == "gt":
        if gt is None:
            raise TopovoxError("sample has no ground-truth density; use --density init")
        rho = np.asarray(gt, dtype=np.float64)
    else:
        rho = preproc.build_rho_init(problem)
    u, stats = solve_displacements(problem, rho, tol=args.tol, max_iter=args.max_iter)
    out = Path(args.out)
    tio.write_tensor_dir(out / "displacements", u.astype(np.float32), kind="displacements")
    tio.write_tensor_dir(out / "von_mises", von_mises(problem, rho, u).astype(np.float32), kind="von_mises")
    stats_payload = {
        "iterations": stats.iterations,
        "residual": stats.residual,
        "ndof": stats.ndof,
        "compliance": compliance(u, assemble_loads(problem)),
    }
    (out / "solve_stats.json").write_text(json.dumps(stats_payload, indent=2, sort_keys=True) + "\n")
    print(f"converged in {stats.iterations} iterations, residual {stats.residual:.3e}")
    return 0


def _cmd_optimize(args) -> int:
    problem, _ = tio.read_sample(_resolve(args.sample))
    params = simp.SimpParams(
        volume_fraction_max=args.vmax if args.vmax is not None else problem.volume_fraction_max,
        filter_radius=args.filter_radius,
        move_limit=args.move_limit,
        oc_damping=args.damping,
        max_iters=args.max_iters,
        change_tol=args.change_tol,
        filter_mode=args.filter_mode,
    )
    rho, state = simp.run_simp(problem, params)
    out = Path(args.out)
    tio.write_tensor_dir(out / "density", rho.astype(np.float32), kind="density")
    with (out / "history.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "compliance", "volume", "change"])
        rows = zip(state.compliance_history, state.volume_history, state.change_history)
        for i, (c, v, d) in enumerate(rows, start=1):
            writer.writerow([i, repr(c), repr(v), repr(d)])
    print(f"finished after {state.iteration} iterations, last change {state.last_change:.4f}")
    return 0


def _cmd_preprocess(args) -> int:
    problem, _ = tio.read_sample(_resolve(args.sample))
    cfg = _build_cfg(args)
    tensor = preproc.preprocess(problem, cfg)
    tio.write_tensor_dir(
        Path(args.out),
        tensor.channels.astype(np.float32),
        kind="input_tensor",
        channel_tags=tensor.channel_tags,
    )
    if args.save_cfg:
        Path(args.save_cfg).write_text(
            json.dumps(
                {"force_norm": cfg.force_norm, "stress_norm": cfg.stress_norm},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
    return 0


def _cmd_predict(args) -> int:
    problem, _ = tio.read_sample(_resolve(args.sample))
    if args.predictor == "rho-init":
        inner, pre = predictors.baseline_rho_init, (lambda p: p)
    elif args.predictor == "hull":
        inner, pre = predictors.baseline_hull, (lambda p: p)
    else:
        cfg = _build_cfg(args)
        spec = predictors.ExternalPredictorSpec(
            command=args.external_cmd, io_dir=args.io_dir, timeout=args.timeout
        )
        inner = lambda tensor: predictors.run_external(spec, tensor)  # noqa: E731
        pre = lambda p: preproc.preprocess(p, cfg)  # noqa: E731
    if args.group == "none":
        density = np.asarray(inner(pre(problem)), dtype=np.float64)
    else:
        wrapped = symmetry.wrap(inner, symmetry.group(args.group), pre)
        density = wrapped(problem)
    tio.write_tensor_dir(Path(args.out), density.astype(np.float32), kind="density")
    return 0


def _eval_one(task):
    sample_dir, pred_dir, threshold, tol_factor = task
    problem, gt = tio.read_sample(sample_dir)
    density, _ = tio.read_tensor_dir(pred_dir)
    mask = binarize(np.asarray(density, dtype=np.float64), threshold, problem.design)
    score = float("nan")
    if gt is not None:
        gt_mask = binarize(np.asarray(gt, dtype=np.float64), threshold, problem.design)
        score = ev.iou(mask, gt_mask, problem.design)
    report = ev.check_fail(mask, problem, tol_factor=tol_factor)
    return {
        "id": Path(sample_dir).name,
        "iou": score,
        "failed": int(report.failed),
        "reason": report.reason,
        "max_vm": report.max_von_mises,
    }


def _cmd_evaluate(args) -> int:
    pairs = []
    for spec in args.pairs:
        sample_dir, _, pred_dir = spec.partition("=")
        if not pred_dir:
            raise TopovoxError(f"expected SAMPLE_DIR=PRED_DIR, got {spec!r}")
        pairs.append((str(_resolve(sample_dir)), str(_resolve(pred_dir)), args.threshold, args.tol_factor))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_eval_one, pairs))
    else:
        rows = [_eval_one(task) for task in pairs]
    rows.sort(key=lambda r: r["id"])
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        writer = csv.writer(out)
        writer.writerow(["id", "iou", "failed", "reason", "max_vm"])
        for row in rows:
            writer.writerow([row["id"], repr(row["iou"]), row["failed"], row["reason"], repr(row["max_vm"])])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_se_curve(args) -> int:
    points = []
    with open(_resolve(args.points)) as fh:
        for row in csv.DictReader(fh):
            points.append(
                (int(row["train_size"]), float(row["iou"]), float(row["fail_pct"]))
            )
    curve = ev.SECurve(tuple(sorted(points)))
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        writer = csv.writer(out)
        writer.writerow(["train_size", "iou", "fail_pct"])
        for n, i, f in curve.points:
            writer.writerow([n, repr(i), repr(f)])
        writer.writerow(["auc150_iou", repr(ev.auc_150(curve, "iou")), ""])
        writer.writerow(["auc150_fail_pct", repr(ev.auc_150(curve, "fail_pct")), ""])
        writer.writerow(["final_iou", repr(ev.final_score(curve, "iou")), ""])
        writer.writerow(["final_fail_pct", repr(ev.final_score(curve, "fail_pct")), ""])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _add_preproc_options(parser):
    parser.add_argument("--kinds", default="trivial", help="comma list of trivial,pde,hull")
    parser.add_argument("--pde-output", default="von_mises", choices=preproc.PDE_OUTPUTS)
    parser.add_argument("--fit", action="append", default=[], help="training sample dir for normalization (repeatable / comma list; default: the sample itself)")
    parser.add_argument("--cfg", default=None, help="JSON file with fitted normalization constants")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topovox", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="seed for any stochastic component")
    parser.add_argument("--config", default=None, help="key=value file; explicit flags win")
    parser.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="fixed-order serial reductions (the only mode implemented)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a sample's content invariants")
    p.add_argument("sample")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("convert", help="convert sample dir <-> .npz archive")
    p.add_argument("src")
    p.add_argument("dst")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("solve", help="solve the elastic system for one sample")
    p.add_argument("sample")
    p.add_argument("--out", required=True)
    p.add_argument("--density", default="init", choices=("init", "gt"))
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=None)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("optimize", help="run the density optimizer on one sample")
    p.add_argument("sample")
    p.add_argument("--out", required=True)
    p.add_argument("--vmax", type=float, default=None)
    p.add_argument("--filter-radius", type=float, default=1.5)
    p.add_argument("--move-limit", type=float, default=0.2)
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--change-tol", type=float, default=0.01)
    p.add_argument("--filter-mode", default="sensitivity", choices=("sensitivity", "density"))
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("preprocess", help="build network input tensors for one sample")
    p.add_argument("sample")
    p.add_argument("--out", required=True)
    p.add_argument("--save-cfg", default=None)
    _add_preproc_options(p)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("predict", help="run a predictor, optionally group-averaged")
    p.add_argument("sample")
    p.add_argument("--out", required=True)
    p.add_argument("--group", default="none", choices=("none", "d4", "oh"))
    p.add_argument("--predictor", default="rho-init", choices=("rho-init", "hull", "external"))
    p.add_argument("--external-cmd", default=None)
    p.add_argument("--io-dir", default=None)
    p.add_argument("--timeout", type=float, default=60.0)
    _add_preproc_options(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="per-sample IoU and fail verdicts")
    p.add_argument("pairs", nargs="+", metavar="SAMPLE_DIR=PRED_DIR")
    p.add_argument("--out", default="-")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--tol-factor", type=float, default=1.10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("se-curve", help="aggregate a metric-vs-size CSV")
    p.add_argument("points", help="CSV with columns train_size,iou,fail_pct")
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_se_curve)

    return parser


def _coerce(action, raw: str):
    if isinstance(action, argparse.BooleanOptionalAction) or action.const is True:
        return raw.lower() in ("1", "true", "yes", "on")
    if callable(action.type):
        return action.type(raw)
    return raw


def _apply_config_defaults(parser: argparse.ArgumentParser, defaults: dict) -> None:
    """Install config-file values as parser defaults so explicit flags win."""
    parsers = [parser]
    for group_action in parser._subparsers._group_actions:
        parsers.extend(group_action.choices.values())
    known = set()
    for p in parsers:
        usable = {}
        for action in p._actions:
            if action.dest in defaults:
                usable[action.dest] = _coerce(action, defaults[action.dest])
                known.add(action.dest)
        if usable:
            p.set_defaults(**usable)
    unknown = set(defaults) - known
    if unknown:
        raise TopovoxError(f"unknown config keys: {sorted(unknown)}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if "--config" in argv:
            idx = argv.index("--config")
            if idx + 1 >= len(argv):
                parser.print_usage(sys.stderr)
                return 2
            _apply_config_defaults(parser, _load_config(argv[idx + 1]))
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code) if exc.code is not None else 0
        np.random.seed(args.seed % (2**32))
        return args.func(args)
    except TopovoxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
