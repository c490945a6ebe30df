"""Command-line front end: train, eval, encode, grid sweep, bench, ablate.

Single-object results are printed as JSON on stdout; sweep and series data
are written as CSV files whose first line is a provenance comment (version,
seed, full command line). Every command is deterministic for a fixed --seed,
except that bench rows contain measured wall times.

Exit codes: 0 on success, 2 on input errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import __version__
from ._parallel import worker_count
from .classify import evaluate, nn1_predictor
from .dataio import read_dataset, split
from .divergence import PARAM_FLOOR, AbldParams
from .errors import (
    CorruptFile,
    DegenerateDivergence,
    InvalidDataset,
    InvalidGradient,
    InvalidInput,
    InvalidStart,
    NotPositiveDefinite,
    NumericalBreakdown,
    SingularSystem,
    SpdKitError,
    StepOverflow,
)
from .iddl import (
    FitConfig,
    IddlModel,
    LabeledSpdDataset,
    encode_batch,
    fit,
    grad_atom,
    init_dictionary,
    load_model,
    objective,
    one_hot,
    save_model,
    _ridge_solve,
)
from .linalg import random_spd
from .manifold import RcgConfig

_INPUT_ERRORS = (InvalidInput, InvalidDataset, CorruptFile, FileNotFoundError,
                 IsADirectoryError, PermissionError)
_NUMERICAL_ERRORS = (NumericalBreakdown, NotPositiveDefinite, DegenerateDivergence,
                     SingularSystem, StepOverflow, InvalidStart, InvalidGradient)


def _provenance(argv, seed) -> str:
    cmd = "spdkit " + " ".join(argv)
    return f"spdkit {__version__} | seed {seed} | {cmd}"


def _write_csv(path, header, rows, provenance):
    with open(path, "w", newline="") as f:
        f.write(f"# {provenance}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _parse_int_list(text) -> list[int]:
    try:
        return [int(tok) for tok in str(text).replace(" ", "").split(",") if tok]
    except ValueError as exc:
        raise InvalidInput(f"expected a comma-separated integer list, got {text!r}") from exc


def _parse_grid(text) -> list[tuple[float, float]]:
    pairs = []
    for item in str(text).split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(",")
        if len(parts) != 2:
            raise InvalidInput(f"grid entries are 'alpha,beta' pairs, got {item!r}")
        pairs.append((float(parts[0]), float(parts[1])))
    if not pairs:
        raise InvalidInput("empty parameter grid")
    return pairs


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    data = read_dataset(args.data)
    config = FitConfig(
        n_atoms=args.atoms,
        variant=args.variant,
        gamma=args.gamma,
        init="grid" if args.init_grid else "burg",
        grid=_parse_grid(args.init_grid) if args.init_grid else None,
        rcg=RcgConfig(max_iters=args.inner_rcg),
        outer_iters=args.outer_iters,
        param_steps=args.param_steps,
        update_atoms=args.freeze != "atoms",
        update_params=args.freeze != "params",
        seed=args.seed,
    )
    model = fit(data, config)
    save_model(model, args.out)

    hist = model.history
    rows = []
    prev = hist.initial
    for i in range(len(hist)):
        status = "skipped" if hist.params_skipped else "updated"
        rows.append([
            i + 1,
            f"{hist.after_w[i]:.12g}",
            f"{prev - hist.after_dict[i]:.12g}",
            f"{hist.after_dict[i] - hist.after_params[i]:.12g}",
            f"{hist.after_params[i] - hist.after_w[i]:.12g}",
            status,
        ])
        prev = hist.after_w[i]
    csv_path = args.convergence_csv or (args.out + ".convergence.csv")
    _write_csv(
        csv_path,
        ["outer_iter", "objective", "delta_dict", "delta_params", "delta_w", "param_block"],
        rows,
        _provenance(args._argv, args.seed),
    )

    train_acc = evaluate(model, data).accuracy
    print(json.dumps({
        "final_objective": hist.after_w[-1],
        "outer_iters": len(hist),
        "train_acc": train_acc,
        "model": args.out,
        "convergence_csv": csv_path,
    }))
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    model = load_model(args.model)
    test = read_dataset(args.data)
    if test.labels.max() > model.label_count:
        raise InvalidInput(
            f"label space mismatch: test labels reach {test.labels.max()} "
            f"but the model was trained with {model.label_count} classes"
        )
    report = evaluate(model, test)
    prov = _provenance(args._argv, args.seed)
    summary = {"accuracy": report.accuracy}
    if args.out_json:
        report.to_json(args.out_json)
        summary["report_json"] = args.out_json
    if args.out_csv:
        report.to_csv(args.out_csv, comment=prov)
        summary["report_csv"] = args.out_csv

    if args.baseline:
        if not args.train:
            raise InvalidInput("--baseline requires --train with the training set")
        train = read_dataset(args.train)
        predictor = nn1_predictor(train, args.baseline)
        base = evaluate(predictor, test, label_count=model.label_count)
        summary["baseline"] = args.baseline
        summary["baseline_accuracy"] = base.accuracy
        if args.out_json:
            path = args.out_json + ".baseline.json"
            base.to_json(path)
            summary["baseline_json"] = path
        if args.out_csv:
            path = args.out_csv + ".baseline.csv"
            base.to_csv(path, comment=prov)
            summary["baseline_csv"] = path
    print(json.dumps(summary))
    return 0


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------

def cmd_encode(args) -> int:
    model = load_model(args.model)
    data = read_dataset(args.data)
    v = encode_batch(data.samples, model.atoms, model.params)
    header = ["index", "label"] + [f"v{k+1}" for k in range(model.n_atoms)]
    rows = [
        [i, int(data.labels[i])] + [f"{x:.17g}" for x in v[i]]
        for i in range(len(data))
    ]
    _write_csv(args.out, header, rows, _provenance(args._argv, args.seed))
    print(json.dumps({"samples": len(data), "atoms": model.n_atoms, "out": args.out}))
    return 0


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def cmd_grid(args) -> int:
    data = read_dataset(args.data)
    train, test = split(data, args.fraction, args.seed)
    atoms = init_dictionary(train, args.atoms, args.seed)
    gamma = args.gamma if args.gamma is not None else 1e-3 * len(train) / train.label_count
    h = one_hot(train.labels, train.label_count)
    alphas = np.linspace(args.alpha_min, args.alpha_max, args.alpha_steps)
    betas = np.linspace(args.beta_min, args.beta_max, args.beta_steps)
    rows = []
    for a in alphas:
        for b in betas:
            clamped = a < PARAM_FLOOR or b < PARAM_FLOOR
            aa, bb = max(a, PARAM_FLOOR), max(b, PARAM_FLOOR)
            params = AbldParams.scalar(aa, bb, args.atoms)
            v = encode_batch(train.samples, atoms, params, train.factors())
            w = _ridge_solve(v, h, gamma)
            train_acc = float(np.mean(np.argmax(v @ w.T, axis=1) + 1 == train.labels))
            vt = encode_batch(test.samples, atoms, params, test.factors())
            test_acc = float(np.mean(np.argmax(vt @ w.T, axis=1) + 1 == test.labels))
            rows.append([f"{a:.12g}", f"{b:.12g}", f"{train_acc:.6f}",
                         f"{test_acc:.6f}", int(clamped)])
    _write_csv(args.out, ["alpha", "beta", "train_acc", "test_acc", "clamped"],
               rows, _provenance(args._argv, args.seed))
    best = max(rows, key=lambda r: float(r[3]))
    print(json.dumps({
        "cells": len(rows),
        "best_alpha": float(best[0]),
        "best_beta": float(best[1]),
        "best_test_acc": float(best[3]),
        "out": args.out,
    }))
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _bench_problem(d, n_samples, n_atoms, seed):
    rng = np.random.default_rng(seed)
    samples = np.stack([random_spd(d, rng) for _ in range(n_samples)])
    labels = rng.integers(1, 3, size=n_samples)
    labels[0], labels[1] = 1, 2
    data = LabeledSpdDataset(samples, labels)
    atoms = np.stack([random_spd(d, rng) for _ in range(n_atoms)])
    params = AbldParams.scalar(1.0, 1.0, n_atoms)
    w = rng.standard_normal((2, n_atoms))
    model = IddlModel(atoms, params, w, gamma=1e-3, label_count=2)
    data.factors()  # offline precompute is excluded from the timings
    return data, model


def _median_ms(fn, reps) -> float:
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        times.append((time.perf_counter() - start) * 1e3)
    return float(np.median(times))


def _loglog_slope(xs, ys) -> float:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


def cmd_bench(args) -> int:
    sweeps = []
    if args.d:
        sweeps.append(("d", _parse_int_list(args.d)))
    if args.samples:
        sweeps.append(("samples", _parse_int_list(args.samples)))
    if args.atoms:
        sweeps.append(("atoms", _parse_int_list(args.atoms)))
    if not sweeps:
        sweeps.append(("d", [8, 16, 32, 64]))
    if args.reps < 1:
        raise InvalidInput("--reps must be at least 1")

    rows = []
    slopes = {}
    for sweep, values in sweeps:
        grad_ms = []
        for value in values:
            d = value if sweep == "d" else args.bench_dim
            n_samples = value if sweep == "samples" else args.bench_samples
            n_atoms = value if sweep == "atoms" else args.bench_atoms
            data, model = _bench_problem(d, n_samples, n_atoms, args.seed)
            g = _median_ms(lambda: grad_atom(data, model, 0), args.reps)
            o = _median_ms(lambda: objective(data, model), args.reps)
            grad_ms.append(g)
            rows.append([sweep, value, f"{g:.6f}", f"{o:.6f}"])
        if len(values) >= 2:
            slopes[f"{sweep}_slope"] = _loglog_slope(values, grad_ms)
    _write_csv(args.out, ["sweep", "value", "grad_ms", "objective_ms"],
               rows, _provenance(args._argv, args.seed))
    print(json.dumps({"out": args.out, "reps": args.reps,
                      "workers": worker_count(), **slopes}))
    return 0


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

def cmd_ablate(args) -> int:
    data = read_dataset(args.data)
    train, test = split(data, args.fraction, args.seed)
    methods = (
        ("fix_alpha_beta", dict(update_params=False)),
        ("fix_dictionary", dict(update_atoms=False)),
        ("joint", {}),
    )
    rows = []
    summary = {}
    for n_atoms in _parse_int_list(args.atoms):
        for name, overrides in methods:
            config = FitConfig(
                n_atoms=n_atoms, variant=args.variant, gamma=args.gamma,
                outer_iters=args.outer_iters, seed=args.seed, **overrides,
            )
            model = fit(train, config)
            train_acc = evaluate(model, train).accuracy
            test_acc = evaluate(model, test).accuracy
            rows.append([n_atoms, name, f"{train_acc:.6f}", f"{test_acc:.6f}"])
            summary[f"{name}@{n_atoms}"] = test_acc
    _write_csv(args.out, ["atoms", "method", "train_acc", "test_acc"],
               rows, _provenance(args._argv, args.seed))
    print(json.dumps({"out": args.out, **summary}))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdkit",
        description="SPD dictionary learning with learned log-det divergences",
    )
    parser.add_argument("--version", action="version", version=f"spdkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--atoms", type=int, required=True)
    p.add_argument("--variant", choices=["S", "V", "N", "A", "B"], default="N")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outer-iters", type=int, default=30)
    p.add_argument("--inner-rcg", type=int, default=5)
    p.add_argument("--param-steps", type=int, default=5)
    p.add_argument("--init-grid", default=None,
                   help="semicolon-separated alpha,beta pairs for the grid start")
    p.add_argument("--freeze", choices=["none", "atoms", "params"], default="none")
    p.add_argument("--convergence-csv", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model (and optional 1-NN baseline)")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--baseline", choices=["le", "airm", "jbld"], default=None)
    p.add_argument("--train", default=None, help="training set for the baseline")
    p.add_argument("--out-json", default=None)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("encode", help="write per-sample encodings as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("grid", help="accuracy heatmap over a fixed (alpha, beta) grid")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--atoms", type=int, required=True)
    p.add_argument("--alpha-min", type=float, default=0.25)
    p.add_argument("--alpha-max", type=float, default=2.0)
    p.add_argument("--alpha-steps", type=int, default=5)
    p.add_argument("--beta-min", type=float, default=0.25)
    p.add_argument("--beta-max", type=float, default=2.0)
    p.add_argument("--beta-steps", type=int, default=5)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bench", help="time the atom gradient and the objective")
    p.add_argument("--d", default=None, help="comma list of matrix dimensions")
    p.add_argument("--samples", default=None, help="comma list of sample counts")
    p.add_argument("--atoms", default=None, help="comma list of atom counts")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--bench-dim", type=int, default=16)
    p.add_argument("--bench-samples", type=int, default=256)
    p.add_argument("--bench-atoms", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="fixed-block vs joint learning comparison")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--atoms", default="15", help="comma list of atom counts")
    p.add_argument("--variant", choices=["S", "V", "N"], default="N")
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--outer-iters", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpdKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
