"""Command-line entry point: ``varlab <subcommand> [flags]``.

Every subcommand writes its files into ``--out`` (atomically, via a temp file
and rename) together with a ``manifest.json`` describing the run. The master
seed comes from ``--seed``, else the ``VARLAB_SEED`` environment variable,
else 0. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, svg
from .budget import width_for_depth
from .experiments import (
    PAPER_LR_GRID,
    TrainConfig,
    checkerboard_generate,
    depth_sweep_train,
    results_csv,
    split_dataset,
    summary_csv,
    train_gd,
)
from .matrices import depth_sweep, preserve_probability_closed, preserve_probability_mc, sweep_csv
from .network import Activation, InitScheme, default_scheme
from .numerics import Rng
from .variability import Grid2D, V3Config, landscape_suite, surface_csv, v3_csv, v3_measure

ACTIVATIONS = [a.value for a in Activation]


class UsageError(Exception):
    pass


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Run:
    """Collects output files and writes the manifest at the end."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out or Path("varlab_out") / args.command)
        self.files: list[str] = []
        self.extra: dict = {}
        self.t0 = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        p = self.out / name
        write_atomic(p, text)
        self.files.append(name)
        return p

    def finish(self):
        params = {k: v for k, v in vars(self.args).items() if k not in ("func", "parser")}
        manifest = {
            "subcommand": self.args.command,
            "params": params,
            "seed": self.args.seed,
            "version": __version__,
            "rng": Rng.algorithm,
            "outputs": self.files,
            **self.extra,
            "duration_s": round(time.perf_counter() - self.t0, 3),
        }
        write_atomic(self.out / "manifest.json", json.dumps(manifest, indent=2, default=str) + "\n")


def parse_int_list(text: str) -> list[int]:
    """``"3:45:3"`` (inclusive range), ``"2,12,28"`` or a mix like ``"2:20,21:31:2"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [int(b) for b in part.split(":")]
            if len(bits) not in (2, 3):
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            lo, hi = bits[0], bits[1]
            step = bits[2] if len(bits) == 3 else 1
            if step < 1:
                raise argparse.ArgumentTypeError("range step must be >= 1")
            out.extend(range(lo, hi + 1, step))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def parse_float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def parse_activations(text: str) -> list[str]:
    acts = [a.strip() for a in text.split(",") if a.strip()]
    bad = [a for a in acts if a not in ACTIVATIONS]
    if bad or not acts:
        raise argparse.ArgumentTypeError(f"unknown activation(s) {bad}; choose from {ACTIVATIONS}")
    return acts


def _scheme(act: str, init: str | None) -> InitScheme:
    if init in (None, "gaussian", "default"):
        return default_scheme(act)
    try:
        return InitScheme.parse(init)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- subcommands -------------------------------------------------------------

def cmd_landscape(args) -> None:
    if args.depth < 1 or args.samples < 1 or args.grid < 5:
        raise UsageError("need --depth >= 1, --samples >= 1, --grid >= 5")
    if args.params < 2 * args.depth:
        raise UsageError("--params too small for --depth")
    run = Run(args)
    scheme = _scheme(args.activation, args.init)
    surfaces = landscape_suite(args.depth, args.params, args.activation, scheme, args.grid,
                               args.samples, Rng(args.seed))
    for k, s in enumerate(surfaces):
        run.write(f"surface_{k}.csv", surface_csv(s))
        if args.svg:
            run.write(f"surface_{k}.svg", svg.heatmap(s.as_grid(), f"sample {k}", vmin=0, vmax=1))
    if args.svg and len(surfaces) == 9:
        run.write("surfaces_3x3.svg", svg.heatmap_grid(
            [s.as_grid() for s in surfaces],
            [f"#{k} z_max={s.z_max:.3g}" for k, s in enumerate(surfaces)]))
    plan = width_for_depth(args.params, args.depth)
    run.extra = {"L": args.depth, "d": plan.d, "activation": args.activation,
                 "scheme": scheme.label(), "samples": [s.meta for s in surfaces]}
    n_flat = sum(s.collapsed for s in surfaces)
    print(f"landscape: L={args.depth} d={plan.d} {args.activation}/{scheme.label()} "
          f"collapsed {n_flat}/{len(surfaces)} -> {run.out}")
    run.finish()


def cmd_v3(args) -> None:
    if args.samples < 1 or args.grid < 5:
        raise UsageError("need --samples >= 1 and --grid >= 5")
    if any(args.params < 2 * L for L in args.depths):
        raise UsageError("--params too small for the deepest depth")
    run = Run(args)
    scheme = (InitScheme("orthogonal") if args.init == "orthogonal"
              else _scheme(args.activation, args.init))
    cfg = V3Config(N_w=args.params, activation=args.activation, scheme=scheme,
                   grid=Grid2D(args.grid), num_samples=args.samples)
    results = v3_measure(cfg, args.depths, Rng(args.seed), jobs=args.jobs)
    run.write("v3.csv", v3_csv(results))
    if args.svg:
        run.write("v3.svg", svg.bar_chart([r.L for r in results], [r.V3 for r in results],
                                          f"V3, {args.activation}/{scheme.label()}, N_w={args.params}",
                                          "depth L", "V3"))
    peak = max(results, key=lambda r: r.V3)
    zeros = [r.L for r in results if r.V3 == 0.0]
    run.extra = {"peak_L": peak.L, "peak_V3": peak.V3, "zero_depths": zeros,
                 "scheme": scheme.label()}
    for r in results:
        print(f"L={r.L:3d} d={r.d:3d} V3={r.V3:.6g} zero_samples={r.num_zero_samples}")
    print(f"peak at L={peak.L}; V3 = 0 at depths {zeros or 'none'}")
    run.finish()


def _median_rows(sweeps):
    """Per-depth medians over seeds of log10 norms."""
    L_max = len(sweeps[0])
    rows = []
    for i in range(L_max):
        c = np.median([s[i].log10_C for s in sweeps])
        gx = np.median([s[i].log10_G_x for s in sweeps])
        gb = np.median([s[i].log10_G_xbar for s in sweeps])
        ratio = np.median([s[i].log10_C - s[i].log10_G_x for s in sweeps])
        rows.append((i + 1, c, gx, gb, ratio))
    return rows


def cmd_matrices(args) -> None:
    if args.width < 1 or args.max_depth < 1 or args.seeds < 1:
        raise UsageError("need --width, --max-depth and --seeds >= 1")
    run = Run(args)
    master = Rng(args.seed)
    medians = {}
    for act in args.activation:
        scheme = _scheme(act, args.init)
        sweeps = []
        for s in range(args.seeds):
            recs = depth_sweep(args.width, args.max_depth, act, scheme, master.child(s),
                               seed_label=s)
            run.write(f"sweep_{act}_seed{s}.csv", sweep_csv(recs))
            sweeps.append(recs)
        rows = _median_rows(sweeps)
        medians[act] = rows
        lines = ["L,median_log10_C,median_log10_G_x,median_log10_G_xbar,median_log10_C_over_G_x"]
        lines += [f"{L},{c!r},{gx!r},{gb!r},{r!r}" for L, c, gx, gb, r in
                  ((L, float(c), float(gx), float(gb), float(r)) for L, c, gx, gb, r in rows)]
        run.write(f"median_{act}.csv", "\n".join(lines) + "\n")
        if args.svg:
            Ls = [r[0] for r in rows]
            run.write(f"median_{act}.svg", svg.line_chart(
                {"C": (Ls, [r[1] for r in rows]), "G(x)": (Ls, [r[2] for r in rows]),
                 "G(xbar)": (Ls, [r[3] for r in rows])},
                f"{act}/{scheme.label()}, d={args.width}", "depth L", "log10 spectral norm"))
        last = rows[-1]
        print(f"{act}: L={last[0]} median log10 |C|={last[1]:.3f} |G_x|={last[2]:.3f} "
              f"median log10 |C|/|G_x|={last[4]:.3f}")
    if len(args.activation) == 2:
        a, b = args.activation
        lines = [f"L,median_log10_C_{a},median_log10_C_{b},log10_ratio_{a}_over_{b}"]
        for ra, rb in zip(medians[a], medians[b]):
            lines.append(f"{ra[0]},{float(ra[1])!r},{float(rb[1])!r},{float(ra[1] - rb[1])!r}")
        run.write(f"ratio_{a}_{b}.csv", "\n".join(lines) + "\n")
        if args.svg:
            Ls = [r[0] for r in medians[a]]
            run.write(f"ratio_{a}_{b}.svg", svg.line_chart(
                {f"C {a}": (Ls, [r[1] for r in medians[a]]), f"C {b}": (Ls, [r[1] for r in medians[b]])},
                "C-matrix size by activation", "depth L", "log10 spectral norm"))
        print(f"median log10 |C_{a}| - log10 |C_{b}| at L={args.max_depth}: "
              f"{float(medians[a][-1][1] - medians[b][-1][1]):.3f}")
    run.finish()


def cmd_probcheck(args) -> None:
    if args.trials < 10_000:
        raise UsageError("--trials must be at least 10000")
    if any(not 0 < p < 1 for p in args.p) or any(d < 1 for d in args.d):
        raise UsageError("need p in (0, 1) and d >= 1")
    run = Run(args)
    master = Rng(args.seed)
    lines = ["p,d,activation,closed,mc,abs_err,four_sigma,status"]
    all_ok = True
    k = 0
    for p in args.p:
        for d in args.d:
            for act in ("relu", "abs"):
                closed = preserve_probability_closed(p, d, act)
                mc = preserve_probability_mc(p, d, act, args.trials, master.child(k))
                k += 1
                err = abs(mc - closed)
                bound = 4.0 * np.sqrt(closed * (1 - closed) / args.trials)
                ok = err <= bound
                all_ok &= ok
                lines.append(f"{p!r},{d},{act},{closed!r},{mc!r},{err!r},{float(bound)!r},"
                             f"{'PASS' if ok else 'FAIL'}")
                print(f"p={p:g} d={d} {act:4s} closed={closed:.6f} mc={mc:.6f} "
                      f"{'PASS' if ok else 'FAIL'}")
    run.write("probcheck.csv", "\n".join(lines) + "\n")
    run.extra = {"all_pass": bool(all_ok)}
    run.finish()


def _train_config(args, L: int) -> TrainConfig:
    kw = {"activation": args.activation, "scheme": _scheme(args.activation, args.init),
          "loss_scale": args.loss_scale, "record_every": args.record_every}
    if args.iterations is not None:
        kw["iterations"] = args.iterations
    if args.lr_grid is not None:
        kw["lr_grid"] = tuple(args.lr_grid)
    if args.seeds is not None:
        kw["seeds"] = args.seeds
    try:
        if args.reduced:
            return TrainConfig.reduced(args.params, L, **kw)
        return TrainConfig(N_w=args.params, L=L, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args) -> None:
    if args.params < 2 * args.depth:
        raise UsageError("--params too small for --depth")
    cfg = _train_config(args, args.depth)
    run = Run(args)
    master = Rng(args.seed)
    ds = checkerboard_generate(args.flip_parity)
    results = [train_gd(cfg, ds, master.child(s), seed=s) for s in range(cfg.seeds)]
    best = max(results, key=lambda r: (r.best_train_acc if np.isfinite(r.best_train_acc) else -1))
    payload = {"config": cfg.manifest(), "plan": vars(cfg.plan),
               "per_seed": [dict(r.to_dict(), cells=[c.to_dict() for c in r.cells]) for r in results]}
    run.write("result.json", json.dumps(payload, indent=2, default=float) + "\n")
    run.write("cells.csv", results_csv(results))
    curve = ["seed,lr,iteration,loss"]
    for r in results:
        curve += [f"{r.seed},{r.lr!r},{it},{loss!r}" for it, loss in r.history]
    run.write("loss_curve.csv", "\n".join(curve) + "\n")
    for r in results:
        print(f"seed {r.seed}: lr={r.lr:g} train_loss={r.best_train_loss:.4g} "
              f"train_acc={r.best_train_acc:.4f} test_acc={r.test_acc:.4f} "
              f"{'(all lrs diverged)' if r.diverged else ''}")
    print(f"best seed train_acc={best.best_train_acc:.4f}")
    run.finish()


def cmd_trainsweep(args) -> None:
    if any(args.params < 2 * L for L in args.depths):
        raise UsageError("--params too small for the deepest depth")
    template = _train_config(args, args.depths[0])
    run = Run(args)
    summaries, per_seed = depth_sweep_train(args.params, args.depths, template, Rng(args.seed),
                                            jobs=args.jobs, ds=checkerboard_generate(args.flip_parity))
    run.write("cells.csv", results_csv(per_seed))
    run.write("summary.csv", summary_csv(summaries))
    if args.svg:
        Ls = [s.L for s in summaries]
        run.write("loss.svg", svg.line_chart(
            {"train loss": (Ls, [s.mean_train_loss for s in summaries]),
             "test loss": (Ls, [s.mean_test_loss for s in summaries])},
            f"losses, N_w={args.params}", "depth L", "sum of squared errors"))
        run.write("accuracy.svg", svg.line_chart(
            {"train acc": (Ls, [s.mean_train_acc for s in summaries]),
             "test acc": (Ls, [s.mean_test_acc for s in summaries])},
            f"accuracies, N_w={args.params}", "depth L", "accuracy"))
    for s in summaries:
        print(f"L={s.L:3d} d={s.d:3d} train_acc mean={s.mean_train_acc:.4f} "
              f"median={s.median_train_acc:.4f} test_acc={s.mean_test_acc:.4f}")
    run.finish()


def cmd_checkerboard(args) -> None:
    run = Run(args)
    ds = checkerboard_generate(args.flip_parity)
    ds = ds.with_split(*split_dataset(ds, 0.25, Rng(args.seed).child(0)))
    run.write("checkerboard.csv", ds.to_csv())
    run.extra = {"points": int(len(ds.labels)), "boundary": int(ds.boundary.sum()),
                 "train": int(len(ds.train_idx)), "test": int(len(ds.test_idx))}
    print(f"checkerboard: {len(ds.labels)} points, {int(ds.boundary.sum())} boundary, "
          f"{len(ds.train_idx)} train -> {run.out}")
    run.finish()


# -- parser ------------------------------------------------------------------

def _env_seed() -> int:
    try:
        return int(os.environ.get("VARLAB_SEED", "0"))
    except ValueError:
        return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"varlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func, parser=p)
        p.add_argument("--seed", type=int, default=_env_seed(), help="master seed (env VARLAB_SEED)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        return p

    p = add("landscape", cmd_landscape, "surfaces ||F(x)||^2 / z_max for random parameters")
    p.add_argument("--activation", choices=ACTIVATIONS, default="relu")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--params", type=int, default=10000)
    p.add_argument("--grid", type=int, default=81)
    p.add_argument("--samples", type=int, default=9)
    p.add_argument("--init", default=None, help="kaiming|xavier|orthogonal|normal:<sigma>")
    p.add_argument("--svg", action="store_true")

    p = add("v3", cmd_v3, "V3 variability versus depth at a fixed budget")
    p.add_argument("--params", type=int, default=3300)
    p.add_argument("--depths", type=parse_int_list, default=parse_int_list("3:45:3"))
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--activation", choices=ACTIVATIONS, default="relu")
    p.add_argument("--init", default="gaussian", help="gaussian|orthogonal|kaiming|xavier|normal:<sigma>")
    p.add_argument("--grid", type=int, default=81)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--svg", action="store_true")

    p = add("matrices", cmd_matrices, "spectral norms of C- and G-matrices versus depth")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--max-depth", type=int, default=1000)
    p.add_argument("--activation", "--activations", dest="activation", type=parse_activations,
                   default=["relu"])
    p.add_argument("--init", default=None)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--svg", action="store_true")

    p = add("probcheck", cmd_probcheck, "distance-preservation probabilities, closed form vs Monte Carlo")
    p.add_argument("--p", type=parse_float_list, default=[0.25, 0.5])
    p.add_argument("--d", type=parse_int_list, default=[1, 2, 3])
    p.add_argument("--trials", type=int, default=1_000_000)

    for name, func, help_ in (("train", cmd_train, "train on the checkerboard at one depth"),
                              ("trainsweep", cmd_trainsweep, "train over a range of depths")):
        p = add(name, func, help_)
        p.add_argument("--params", type=int, default=3200)
        if name == "train":
            p.add_argument("--depth", type=int, required=True)
        else:
            p.add_argument("--depths", type=parse_int_list, default=parse_int_list("2:20,21:31:2"))
            p.add_argument("--jobs", type=int, default=1)
            p.add_argument("--svg", action="store_true")
        p.add_argument("--activation", choices=ACTIVATIONS, default="relu")
        p.add_argument("--init", default=None)
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--lr-grid", type=parse_float_list, default=None,
                       help=f"comma list (default {','.join(map(str, PAPER_LR_GRID))})")
        p.add_argument("--seeds", type=int, default=None)
        p.add_argument("--reduced", action="store_true",
                       help="10000 iterations, lr grid 0.01,0.1,0.3, 3 seeds")
        p.add_argument("--loss-scale", choices=["mean", "sum"], default="mean")
        p.add_argument("--record-every", type=int, default=100)
        p.add_argument("--flip-parity", action="store_true")

    p = add("checkerboard", cmd_checkerboard, "export the checkerboard dataset and split")
    p.add_argument("--flip-parity", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        args.parser.error(str(exc))  # exits with status 2
    except Exception as exc:  # noqa: BLE001
        print(f"varlab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
