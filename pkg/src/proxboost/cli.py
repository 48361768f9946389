"""Command-line front end.

Subcommands: ``synth`` (generate data), ``fit``, ``eval``, ``grid`` (grid search
with early stopping), ``pprox-demo`` (rate check of the approximated proximal
point method) and ``replay`` (re-run a manifest).

Every command that writes files also writes a JSON manifest holding the fully
resolved arguments, so ``proxboost replay run.manifest.json`` reproduces the
outputs byte for byte.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .boosting import BoostConfig, Ensemble, LineSearchMode, Variant, early_stop_select, fit
from .data import DatasetSplit, Design, Model, SynthSpec, generate, load_csv, split, write_csv
from .errors import DataError, InvalidTargetError, NumericError, ProxBoostError
from .losses import LOSSES, Task, make_loss
from .pprox import (
    coordinate_mask_operator,
    edge_operator,
    identity_operator,
    prox_point_iterate,
    random_quadratic,
    rate_bound,
    verify_rate,
)

log = logging.getLogger("proxboost")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "PROXBOOST_SEED"
DEFAULT_DEPTHS = (1, 3, 5)
DEFAULT_NUS = (1e-4, 1e-3, 1e-2, 1e-1)
DEFAULT_LAMBDAS = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers ------------------------------------------------------------------

def _csv_floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_text(path, text: str) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _manifest_args(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}


def _write_manifest(args, primary, extra: dict, started: float) -> None:
    path = args.manifest or f"{primary}.manifest.json"
    manifest = {
        "tool": "proxboost",
        "version": __version__,
        "command": args.command,
        "args": _manifest_args(args),
        **extra,
        "duration_seconds": round(time.perf_counter() - started, 6),
    }
    _write_text(path, _dump_json(manifest))


def _loss_from_args(args):
    return make_loss(args.loss, tau=args.tau, beta=args.beta)


def _load(args, loss) -> DatasetSplit:
    return load_csv(args.data, target_column=args.target, task=loss.task)


# -- synth --------------------------------------------------------------------

def cmd_synth(args) -> int:
    started = time.perf_counter()
    try:
        spec = SynthSpec(Model(args.kind), Design(args.design), args.n, args.d, args.seed, args.noise)
    except DataError as exc:
        raise UsageError(str(exc)) from None
    ds = generate(spec)
    write_csv(ds, args.out)
    _write_manifest(args, args.out, {"dataset": {"n": ds.n, "d": ds.d, "sha256": _sha256(args.out)}},
                    started)
    return EXIT_OK


# -- fit ------------------------------------------------------------------------

def _config_from_args(args, T=None, depth=None, nu=None, lam=None) -> BoostConfig:
    variant = Variant(args.variant)
    lam = getattr(args, "lam", None) if lam is None else lam
    if not variant.proximal:
        lam = None
    elif lam is None:
        lam = 1.0
    return BoostConfig(variant=variant, T=args.T if T is None else T,
                       nu=args.nu if nu is None else nu, lam=lam,
                       max_depth=args.depth if depth is None else depth,
                       min_samples_leaf=args.min_leaf,
                       line_search=LineSearchMode(args.line_search), seed=args.seed)


def _progress(verbose):
    if not verbose:
        return None

    def report(state):
        rec = state.trace.records[-1]
        print(f"iter {rec.t}: train_loss={rec.train_loss:.6g}", file=sys.stderr)

    return report


def cmd_fit(args) -> int:
    started = time.perf_counter()
    loss = _loss_from_args(args)
    config = _config_from_args(args)
    ds = _load(args, loss)
    if args.val_fraction > 0:
        train, val, rest = split(ds, (1.0 - args.val_fraction, args.val_fraction, 0.0), seed=args.seed)
        if rest.n:  # rounding leftovers go to training
            train = DatasetSplit.concat(train, rest)
    else:
        train, val = ds, None
    ensemble, trace = fit(config, loss, train, val, callback=_progress(args.verbose))
    if trace.clamped:
        print("warning: some line-search steps hit the |gamma| <= 1e6 safeguard", file=sys.stderr)
    outputs = {}
    if args.curves:
        _write_text(args.curves, trace.to_csv())
        outputs["curves"] = args.curves
    if args.model:
        _write_text(args.model, _dump_json(ensemble.to_dict()))
        outputs["model"] = args.model
    primary = args.model or args.curves
    if primary or args.manifest:
        _write_manifest(args, primary, {
            "config": config.to_dict(), "loss": loss.to_dict(),
            "dataset": {"path": str(args.data), "sha256": _sha256(args.data),
                        "n_train": train.n, "n_val": 0 if val is None else val.n},
            "outputs": outputs,
        }, started)
    summary = {"train_loss": trace.train_loss[-1], "T": config.T}
    if val is not None:
        summary["val_loss"] = trace.val_loss[-1]
        summary["best_t"] = early_stop_select(trace)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# -- eval -----------------------------------------------------------------------

def evaluate(ensemble: Ensemble, ds: DatasetSplit) -> dict:
    pred = ensemble.predict(ds.features)
    report = {"loss": ensemble.loss.name, "n": ds.n, "risk": ensemble.loss.risk(ds.targets, pred)}
    if ensemble.loss.task is Task.CLASSIFICATION:
        report["misclassification"] = float(np.mean(np.where(pred >= 0, 1.0, -1.0) != ds.targets))
    return report


def _read_model(path) -> Ensemble:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a JSON model file ({exc})") from None
    return Ensemble.from_dict(raw)


def cmd_eval(args) -> int:
    ensemble = _read_model(args.model_file)
    try:
        ds = load_csv(args.data, target_column=args.target, task=ensemble.loss.task)
    except InvalidTargetError as exc:
        raise DataError(f"targets do not fit the model's {ensemble.loss.name} loss: {exc}") from None
    print(json.dumps(evaluate(ensemble, ds), sort_keys=True))
    return EXIT_OK


# -- grid -----------------------------------------------------------------------

@dataclass(frozen=True)
class _Cell:
    repeat: int
    depth: int
    nu: float
    lam: float | None


def _run_cell(job):
    """Fit one grid cell for T_max steps and pick T on the validation curve."""
    args, cell, train, val = job
    try:
        config = _config_from_args(args, depth=cell.depth, nu=cell.nu, lam=cell.lam)
        _, trace = fit(config, _loss_from_args(args), train, val)
        t = early_stop_select(trace)
        return {"T": t, "val_loss": float(trace.val_loss[t]), "status": "ok"}
    except (NumericError, DataError, ValueError) as exc:
        return {"T": None, "val_loss": None, "status": f"error: {exc}".replace("\n", " ")}


def cmd_grid(args) -> int:
    started = time.perf_counter()
    loss = _loss_from_args(args)
    ds = _load(args, loss)
    variant = Variant(args.variant)
    lambdas = args.lambdas if variant.proximal else [None]
    test_fraction = 1.0 - args.train_fraction - args.val_fraction
    if args.val_fraction <= 0 or test_fraction < -1e-9:
        raise UsageError("need --val-fraction > 0 and --train-fraction + --val-fraction <= 1")

    splits = [split(ds, (args.train_fraction, args.val_fraction, max(test_fraction, 0.0)),
                    seed=args.seed + r) for r in range(args.repeats)]
    cells = [_Cell(r, d, nu, lam) for r in range(args.repeats)
             for d, nu, lam in itertools.product(args.depths, args.nus, lambdas)]
    jobs = [(args, c, splits[c.repeat][0], splits[c.repeat][1]) for c in cells]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_cell, jobs))
        # map() keeps submission order, so output is independent of scheduling
    else:
        results = [_run_cell(j) for j in jobs]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["repeat,depth,nu,lambda,T,val_loss,status"]
    for c, res in zip(cells, results):
        rows.append(",".join([str(c.repeat), str(c.depth), _fmt(c.nu), _fmt(c.lam),
                              "" if res["T"] is None else str(res["T"]),
                              _fmt(res["val_loss"]), json.dumps(res["status"])]))
    _write_text(out / "grid.csv", "\n".join(rows) + "\n")

    best_rows = []
    for r in range(args.repeats):
        ok = [(c, res) for c, res in zip(cells, results) if c.repeat == r and res["status"] == "ok"]
        if not ok:
            continue

        def key(item):
            c, res = item
            return (res["val_loss"], c.depth, c.nu, -math.inf if c.lam is None else c.lam, res["T"])

        cell, res = min(ok, key=key)
        train, val, test = splits[r]
        both = DatasetSplit.concat(train, val)
        row = {"repeat": r, "depth": cell.depth, "nu": cell.nu, "lambda": cell.lam,
               "T": res["T"], "val_loss": res["val_loss"]}
        if res["T"] >= 1:
            config = _config_from_args(args, T=res["T"], depth=cell.depth, nu=cell.nu, lam=cell.lam)
            ensemble, _ = fit(config, loss, both)
        else:
            # validation prefers the constant model
            ensemble = Ensemble(loss, _config_from_args(args, T=1, depth=cell.depth, nu=cell.nu,
                                                        lam=cell.lam),
                                loss.initial_constant(both.targets), n_features=both.d)
        if test.n:
            report = evaluate(ensemble, test)
            row["test_loss"] = report["risk"]
            row["error"] = report.get("misclassification", report["risk"])
        if r == 0:
            _write_text(out / "best_model.json", _dump_json(ensemble.to_dict()))
        best_rows.append(row)
    if not best_rows:
        print("error: every grid cell failed", file=sys.stderr)
        return EXIT_NUMERIC

    table = ["repeat,depth,T,nu,lambda,error"]
    for row in best_rows:
        table.append(",".join([str(row["repeat"]), str(row["depth"]), str(row["T"]),
                               _fmt(row["nu"]), _fmt(row["lambda"]), _fmt(row.get("error"))]))
    _write_text(out / "best.csv", "\n".join(table) + "\n")
    _write_text(out / "best.json", _dump_json({"loss": loss.to_dict(), "variant": variant.value,
                                               "best": best_rows}))
    _write_manifest(args, out / "grid.csv", {
        "loss": loss.to_dict(),
        "dataset": {"path": str(args.data), "sha256": _sha256(args.data)},
        "cells": len(cells),
        "failed_cells": sum(r["status"] != "ok" for r in results),
    }, started)
    print(json.dumps({"best": best_rows[0]}, sort_keys=True))
    return EXIT_OK


# -- pprox demo ---------------------------------------------------------------

def cmd_pprox_demo(args) -> int:
    started = time.perf_counter()
    if args.T < 1:
        raise UsageError("--T must be at least 1")
    if not 0 < args.kappa <= args.L:
        raise UsageError("need 0 < --kappa <= --L")
    if not 0 < args.zeta <= 1:
        raise UsageError("--zeta must lie in (0, 1]")
    rng = np.random.default_rng(args.seed)
    obj = random_quadratic(args.dim, args.kappa, args.L, rng)
    if args.operator == "identity":
        P = identity_operator()
    elif args.operator == "mask":
        P = coordinate_mask_operator(args.zeta ** 2, args.seed)
    else:
        P = edge_operator(args.zeta)
    lam = args.lam if args.lam is not None else args.zeta ** 2 / (8 * args.L)
    if not lam > 0:
        raise UsageError("--lambda must be positive")
    edges = []
    _, losses = prox_point_iterate(obj, P, rng.normal(size=args.dim), lam, args.T, edges)
    bound = rate_bound(losses[0], args.T, args.zeta, args.L, args.kappa, obj.minimum)
    rows = ["t,loss,bound,edge"]
    for t in range(args.T + 1):
        rows.append(f"{t},{_fmt(losses[t])},{_fmt(bound[t])},{_fmt(edges[t] if t < args.T else None)}")
    _write_text(args.out, "\n".join(rows) + "\n")
    holds = verify_rate(losses, args.zeta, args.L, args.kappa, obj.minimum)
    _write_manifest(args, args.out, {"lambda": lam, "bound_holds": holds,
                                     "min_edge": min(edges)}, started)
    print(json.dumps({"bound_holds": holds, "final_loss": losses[-1], "min_edge": min(edges)},
                     sort_keys=True))
    return EXIT_OK


# -- replay ---------------------------------------------------------------------

def cmd_replay(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest_file).read_text(encoding="utf-8"))
        recorded = manifest["args"]
        command = manifest["command"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{args.manifest_file}: not a proxboost manifest ({exc})") from None
    if command == "replay":
        raise UsageError("cannot replay a replay")
    if manifest.get("version") != __version__:
        print(f"warning: manifest written by version {manifest.get('version')}, running {__version__}",
              file=sys.stderr)
    ns = argparse.Namespace(**recorded, verbose=args.verbose)
    ns.func = COMMANDS[command]
    return ns.func(ns)


# -- parser -------------------------------------------------------------------

def _add_loss_args(p):
    p.add_argument("--loss", default="least_squares", choices=sorted(LOSSES) + ["ls", "quantile"])
    p.add_argument("--tau", type=float, default=None, help="pinball quantile level")
    p.add_argument("--beta", type=float, default=None, help="exponential loss scale")


def _add_boost_args(p, grid=False):
    p.add_argument("data", help="CSV file with a header row")
    p.add_argument("--target", default="y", help="target column name")
    _add_loss_args(p)
    p.add_argument("--variant", default="proximal", choices=[v.value for v in Variant])
    p.add_argument("--T", type=int, default=500 if grid else 100,
                   help="maximal number of iterations" if grid else "number of iterations")
    p.add_argument("--min-leaf", dest="min_leaf", type=int, default=1)
    p.add_argument("--line-search", dest="line_search", default="leaf", choices=["global", "leaf"])
    p.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV}, then 0")
    if not grid:
        p.add_argument("--nu", type=float, default=0.1)
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="proximal step (proximal variants; default 1)")
        p.add_argument("--depth", type=int, default=3)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxboost", description="Proximal and gradient boosting with trees.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="per-iteration progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("kind", choices=[m.value for m in Model])
    p.add_argument("--design", default="correlated", choices=[d.value for d in Design])
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--noise", type=float, default=None,
                   help="noise variance (noise std for the sine model)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a boosting model")
    _add_boost_args(p)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=0.0)
    p.add_argument("--curves", default=None, help="write the loss trace CSV here")
    p.add_argument("--model", default=None, help="write the model JSON here")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("model_file")
    p.add_argument("data")
    p.add_argument("--target", default="y")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="grid search with early stopping")
    _add_boost_args(p, grid=True)
    p.add_argument("--depths", type=_csv_ints, default=list(DEFAULT_DEPTHS))
    p.add_argument("--nus", type=_csv_floats, default=list(DEFAULT_NUS))
    p.add_argument("--lambdas", type=_csv_floats, default=list(DEFAULT_LAMBDAS))
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=0.5)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=0.25)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("pprox-demo", help="linear-rate check of the approximated proximal point method")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--kappa", type=float, default=0.1)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--zeta", type=float, default=1.0)
    p.add_argument("--operator", default="edge", choices=["edge", "mask", "identity"])
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="proximal step (default zeta^2 / (8 L))")
    p.add_argument("--T", type=int, default=200)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_pprox_demo)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest_file")
    p.set_defaults(func=cmd_replay)
    return parser


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "eval": cmd_eval, "grid": cmd_grid,
            "pprox-demo": cmd_pprox_demo}


def _validate(args) -> None:
    if hasattr(args, "seed"):
        args.seed = _resolve_seed(args.seed)
    for name in ("depths", "nus", "lambdas"):
        if hasattr(args, name) and not getattr(args, name):
            raise UsageError(f"--{name} grid is empty")
    if getattr(args, "repeats", 1) < 1 or getattr(args, "jobs", 1) < 1:
        raise UsageError("--repeats and --jobs must be >= 1")
    if hasattr(args, "val_fraction") and not 0 <= args.val_fraction < 1:
        raise UsageError("--val-fraction must lie in [0, 1)")
    if hasattr(args, "variant") and hasattr(args, "loss"):
        if args.command == "fit":
            _config_from_args(args)  # surfaces invalid combinations as usage errors
        _loss_from_args(args)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        return args.func(args)
    except (UsageError, InvalidTargetError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProxBoostError, OSError) as exc:
        if isinstance(exc, NumericError):
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
