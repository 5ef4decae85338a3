"""Command-line front end: simulate / reconstruct / compare / benchmark.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .acquisition import (ImageGrid, add_noise, birdcage_sensitivities,
                          radial_trajectory, shepp_logan, simulate_kspace,
                          undersample)
from .io import load_dataset, save_dataset, write_tensor, read_tensor
from .metrics import (center_profiles, masked_summary, relative_difference,
                      support_mask)
from .operators import DEFAULT_MEMORY_BUDGET
from .solver import ReconParams, admm_reconstruct, adjoint_reconstruct

PRECISION_FLAGS = {"f32": "single", "f64": "double"}


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _factor(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"undersampling factor must be >= 1, got {value}")
    return value


def _workers_list(text):
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise argparse.ArgumentTypeError("worker list must not be empty")
    return [_positive_int(s.strip()) for s in items]


def _add_solver_flags(sub):
    sub.add_argument("--lambda", dest="lam", type=float, default=1e-7,
                     help="l1 regularization weight (default 1e-7)")
    sub.add_argument("--beta", type=float, default=1.0,
                     help="augmented Lagrangian weight (default 1.0)")
    sub.add_argument("--admm-rtol", type=float, default=1e-4,
                     help="outer relative-change tolerance (default 1e-4)")
    sub.add_argument("--admm-iters", type=_positive_int, default=5,
                     help="outer iteration cap (default 5)")
    sub.add_argument("--cg-atol", type=float, default=1e-6,
                     help="inner residual tolerance (default 1e-6)")
    sub.add_argument("--cg-iters", type=_positive_int, default=20,
                     help="inner iteration cap (default 20)")


def _add_run_flags(sub):
    sub.add_argument("--precision", choices=sorted(PRECISION_FLAGS),
                     default="f64", help="arithmetic precision (default f64)")
    sub.add_argument("--op-mode", choices=("auto", "materialized", "separable"),
                     default="auto", help="DFT operator storage mode (default auto)")
    sub.add_argument("--memory-budget-gib", type=float, default=None,
                     help="per-worker byte budget for materialized operators "
                          "in GiB (default 2)")


def _memory_budget(args):
    if args.memory_budget_gib is None:
        return DEFAULT_MEMORY_BUDGET
    if args.memory_budget_gib <= 0:
        raise ValueError("memory budget must be positive")
    return int(args.memory_budget_gib * 1024**3)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="csrecon",
        description="Compressed-sensing MRI reconstruction on synthetic "
                    "radial multi-coil data")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset directory")
    sim.add_argument("--out", required=True, help="dataset directory to create")
    sim.add_argument("--nx", type=_positive_int, default=128)
    sim.add_argument("--ny", type=_positive_int, default=64)
    sim.add_argument("--coils", type=_positive_int, default=12)
    sim.add_argument("--readouts", type=_positive_int, default=101,
                     help="radial readouts before undersampling (default 101)")
    sim.add_argument("--samples", type=_positive_int, default=128,
                     help="samples per readout (default 128)")
    sim.add_argument("--undersample", type=_factor, default=1.0,
                     help="readout undersampling factor (default 1 = none)")
    sim.add_argument("--noise-snr", type=float, default=None,
                     help="add complex white noise at this SNR in dB")
    sim.add_argument("--seed", type=int, default=0,
                     help="noise RNG seed (default 0)")
    sim.set_defaults(func=cmd_simulate)

    rec = sub.add_parser("reconstruct", help="reconstruct an image from a dataset")
    rec.add_argument("--data", required=True, help="dataset directory")
    rec.add_argument("--out", required=True, help="output image file")
    rec.add_argument("--report", default=None,
                     help="report JSON path (default <out>.report.json)")
    rec.add_argument("--method", choices=("admm", "adjoint"), default="admm")
    rec.add_argument("--workers", type=_positive_int, default=1)
    _add_solver_flags(rec)
    _add_run_flags(rec)
    rec.set_defaults(func=cmd_reconstruct)

    cmp_ = sub.add_parser("compare", help="relative-difference profiles of two images")
    cmp_.add_argument("--a", required=True, help="image file under test")
    cmp_.add_argument("--b", required=True, help="reference image file")
    cmp_.add_argument("--out", required=True,
                      help="output prefix for <out>_row.csv, <out>_col.csv, "
                           "<out>_summary.json")
    cmp_.set_defaults(func=cmd_compare)

    ben = sub.add_parser("benchmark", help="strong-scaling wall-time table")
    ben.add_argument("--data", required=True, help="dataset directory")
    ben.add_argument("--out", required=True, help="output CSV path")
    ben.add_argument("--workers-list", type=_workers_list, default=[1, 2, 4],
                     help="comma-separated worker counts (default 1,2,4)")
    ben.add_argument("--repeat", type=_positive_int, default=3,
                     help="timed repeats per worker count, best kept (default 3)")
    _add_solver_flags(ben)
    _add_run_flags(ben)
    ben.set_defaults(func=cmd_benchmark)
    return parser


def cmd_simulate(args):
    grid = ImageGrid(args.nx, args.ny)
    phantom = shepp_logan(grid)
    sens = birdcage_sensitivities(grid, args.coils)
    traj = radial_trajectory(args.readouts, args.samples)
    dataset = simulate_kspace(phantom, sens, traj)
    if args.noise_snr is not None:
        dataset = add_noise(dataset, args.noise_snr, args.seed)
    if args.undersample > 1:
        dataset = undersample(dataset, args.undersample)
    meta = {
        "nx": args.nx, "ny": args.ny, "coils": args.coils,
        "readouts": args.readouts, "samples": args.samples,
        "undersample": args.undersample, "noise_snr": args.noise_snr,
        "seed": args.seed,
    }
    save_dataset(args.out, phantom, sens.maps, dataset.trajectory,
                 dataset.data, meta)
    print(f"wrote dataset {args.out}: kspace {dataset.n_samples}x"
          f"{dataset.n_coils}, grid {args.nx}x{args.ny}")
    return 0


def _params_from(args):
    return ReconParams(lam=args.lam, beta=args.beta, admm_rtol=args.admm_rtol,
                       admm_max_iters=args.admm_iters, cg_atol=args.cg_atol,
                       cg_max_iters=args.cg_iters)


def cmd_reconstruct(args):
    _, sens, dataset, _ = load_dataset(args.data)
    precision = PRECISION_FLAGS[args.precision]
    budget = _memory_budget(args)
    if args.method == "admm":
        image, report = admm_reconstruct(
            dataset, sens, _params_from(args), n_workers=args.workers,
            precision=precision, op_mode=args.op_mode, memory_budget=budget)
    else:
        image, report = adjoint_reconstruct(
            dataset, sens, n_workers=args.workers, precision=precision,
            op_mode=args.op_mode, memory_budget=budget)
    write_tensor(args.out, image)
    report_path = args.report or f"{args.out}.report.json"
    doc = report.to_dict()
    doc["dataset"] = str(args.data)
    doc["image"] = str(args.out)
    with open(report_path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    iters = len(report.iterations)
    print(f"wrote {args.out} ({report.grid[0]}x{report.grid[1]} {precision}, "
          f"{args.method}, {iters} outer iterations); report: {report_path}")
    return 0


def _write_profile(path, values):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "reldiff"])
        for i, v in enumerate(values):
            writer.writerow([i, f"{v:.9e}"])


def cmd_compare(args):
    a = read_tensor(args.a)
    b = read_tensor(args.b)
    rel = relative_difference(a, b, floor=1e-6)
    row, col = center_profiles(rel)
    summary = masked_summary(rel, support_mask(b, fraction=0.1))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    _write_profile(f"{args.out}_row.csv", row)
    _write_profile(f"{args.out}_col.csv", col)
    with open(f"{args.out}_summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def run_benchmark(dataset, sens, workers_list, repeat=3, precision="double",
                  op_mode="auto", memory_budget=DEFAULT_MEMORY_BUDGET,
                  params=None):
    """Best-of-repeat ADMM wall times per worker count.

    Returns rows of dicts: workers, best_seconds, speedup (vs the smallest
    listed worker count), ideal_speedup, note.
    """
    times = {}
    for p in workers_list:
        best = None
        for _ in range(repeat):
            t0 = time.perf_counter()
            admm_reconstruct(dataset, sens, params, n_workers=p,
                             precision=precision, op_mode=op_mode,
                             memory_budget=memory_budget,
                             compute_objectives=False)
            elapsed = time.perf_counter() - t0
            best = elapsed if best is None else min(best, elapsed)
        times[p] = best
    base = min(workers_list)
    rows = []
    prev = None
    for p in workers_list:
        note = ""
        if prev is not None and times[p] > prev:
            note = "slower than previous worker count"
        rows.append({
            "workers": p,
            "best_seconds": times[p],
            "speedup": times[base] / times[p],
            "ideal_speedup": p / base,
            "note": note,
        })
        prev = times[p]
    return rows


def cmd_benchmark(args):
    _, sens, dataset, _ = load_dataset(args.data)
    rows = run_benchmark(
        dataset, sens, args.workers_list, repeat=args.repeat,
        precision=PRECISION_FLAGS[args.precision], op_mode=args.op_mode,
        memory_budget=_memory_budget(args), params=_params_from(args))
    with open(args.out, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["workers", "best_seconds", "speedup",
                           "ideal_speedup", "note"])
        writer.writeheader()
        for row in rows:
            out = dict(row)
            out["best_seconds"] = f"{row['best_seconds']:.6f}"
            out["speedup"] = f"{row['speedup']:.3f}"
            out["ideal_speedup"] = f"{row['ideal_speedup']:.3f}"
            writer.writerow(out)
    for row in rows:
        flag = f"  [{row['note']}]" if row["note"] else ""
        print(f"workers {row['workers']:>3}: {row['best_seconds']:.3f} s  "
              f"speedup {row['speedup']:.2f} (ideal {row['ideal_speedup']:.2f})"
              f"{flag}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
