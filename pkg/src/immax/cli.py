"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Options may also come from a flat ``key=value`` file given with --config;
explicit flags override file entries, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import consistency as cons
from . import experiments as exp
from . import margins as mg
from . import rademacher as rad
from .data import (
    CsvSchema,
    DataError,
    ImbalanceProfile,
    InvalidProfileError,
    class_stats,
    default_generators,
    generate_imbalanced,
    generate_split,
    load_csv,
    save_csv,
)
from .losses import COUNT_KINDS, InvalidMarginError, LossConfigError, LossKind, LossSpec
from .models import ScorerFormatError, load_scorer
from .reporting import OutputDir, RunManifest, dumps_json
from .training import (
    BASELINE_GRIDS,
    StratificationError,
    TrainConfig,
    TrainingDiverged,
    build_candidates,
    cross_validate,
    evaluate,
    immax_alpha_grid,
    immax_rho_grid,
    train,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


def floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def read_config(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key] = value
    return entries


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file with option defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")


def _loss_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", default="immax", choices=[k.value for k in LossKind])
    p.add_argument("--rho", type=floats)
    p.add_argument("--alpha", type=float)
    p.add_argument("--psi", choices=["hinge", "logistic", "exponential"])
    p.add_argument("--tau", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--C", type=float, dest="C")
    p.add_argument("--p", type=float)
    p.add_argument("--eq-lambda", type=float)
    p.add_argument("--cplus", type=float)
    p.add_argument("--cminus", type=float)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="immax", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    g = sub.add_parser("generate", help="synthetic imbalanced Gaussian data")
    _common(g)
    g.add_argument("--kind", default="long-tailed", choices=["long-tailed", "step"])
    g.add_argument("--ratio", type=float, default=10.0)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--max", type=int, default=100, dest="max_class_size")
    g.add_argument("--step-fraction", type=float, default=0.5)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--separation", type=float, default=3.0)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--test-max", type=int, help="also write a test split with this max class size")
    g.set_defaults(func=cmd_generate)
    subs["generate"] = g

    t = sub.add_parser("train", help="regularized ERM with any loss")
    _common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--test")
    _loss_options(t)
    t.add_argument("--lam", type=float, default=1e-3)
    t.add_argument("--optimizer", default="gd", choices=["gd", "sgd"])
    t.add_argument("--batch-size", type=int)
    t.add_argument("--schedule", default="constant", choices=["constant", "cosine"])
    t.add_argument("--lr", type=float, default=1.0)
    t.add_argument("--epochs", type=int, default=500)
    t.add_argument("--model", default="linear", choices=["linear", "mlp"])
    t.add_argument("--hidden", type=int, default=16)
    t.add_argument("--norm-cap", type=float)
    t.add_argument("--no-bias", action="store_true")
    t.add_argument("--solver", default="auto", choices=["auto", "gd", "dual"])
    t.add_argument("--cv", type=int, default=0, help="number of CV folds (0 = off)")
    t.add_argument("--lam-grid", type=floats)
    t.add_argument("--grid-size", type=int, default=10)
    t.add_argument("--grid-width", type=float, default=0.8)
    t.set_defaults(func=cmd_train)
    subs["train"] = t

    e = sub.add_parser("eval", help="zero-one error of a saved scorer")
    _common(e)
    e.add_argument("--scorer", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_eval)
    subs["eval"] = e

    a = sub.add_parser("analyze", help="margins, bounds, Rademacher complexity, consistency")
    asub = a.add_subparsers(dest="target", required=True)

    am = asub.add_parser("margins")
    _common(am)
    am.add_argument("--mplus", type=float, required=True)
    am.add_argument("--mminus", type=float, required=True)
    am.add_argument("--rplus", type=float, default=1.0)
    am.add_argument("--rminus", type=float, default=1.0)
    am.add_argument("--rho-geom", type=float, default=1.0)
    am.set_defaults(func=cmd_margins)
    subs["analyze margins"] = am

    ah = asub.add_parser("heuristic")
    _common(ah)
    ah.add_argument("--counts", type=floats, required=True)
    ah.add_argument("--radii", type=floats)
    ah.add_argument("--rho", type=floats)
    ah.set_defaults(func=cmd_heuristic)
    subs["analyze heuristic"] = ah

    ab = asub.add_parser("bound")
    _common(ab)
    ab.add_argument("--kind", default="binary", choices=["binary", "multi"])
    ab.add_argument("--emp-loss", type=float, default=0.0)
    ab.add_argument("--rad", type=float, default=0.0)
    ab.add_argument("--m", type=int, required=True)
    ab.add_argument("--delta", type=float, default=0.05)
    ab.add_argument("--classes", type=int, default=2)
    ab.add_argument("--uniform", action="store_true")
    ab.add_argument("--empirical", action="store_true")
    ab.add_argument("--r", type=floats)
    ab.add_argument("--rho", type=floats)
    ab.set_defaults(func=cmd_bound)
    subs["analyze bound"] = ab

    ar = asub.add_parser("rademacher")
    _common(ar)
    ar.add_argument("--data", required=True)
    ar.add_argument("--rho", type=floats, required=True)
    ar.add_argument("--Lambda", type=float, default=1.0, dest="Lambda")
    ar.add_argument("--mode", default="auto", choices=["auto", "exact", "mc"])
    ar.add_argument("--trials", type=int, default=1000)
    ar.set_defaults(func=cmd_rademacher)
    subs["analyze rademacher"] = ar

    ac = asub.add_parser("consistency")
    _common(ac)
    mode = ac.add_mutually_exclusive_group(required=True)
    mode.add_argument("--demo", action="store_true", help="cost-sensitive inconsistency demo")
    mode.add_argument("--verify", choices=["binary", "multi"])
    ac.add_argument("--cplus", type=float, default=2.0)
    ac.add_argument("--cminus", type=float, default=1.0)
    ac.add_argument("--eps", type=float, default=0.1)
    ac.add_argument("--trials", type=int, default=1000)
    ac.add_argument("--max-support", type=int, default=10)
    ac.add_argument("--max-classes", type=int, default=5)
    ac.set_defaults(func=cmd_consistency)
    subs["analyze consistency"] = ac

    f = sub.add_parser("figure1", help="three boundaries on separable imbalanced data")
    _common(f)
    f.add_argument("--ratio", type=float, default=exp.FIGURE1_SETUP.ratio)
    f.add_argument("--max", type=int, default=exp.FIGURE1_SETUP.max_class_size, dest="max_class_size")
    f.add_argument("--separation", type=float, default=exp.FIGURE1_SETUP.separation)
    f.add_argument("--scale", type=float, default=exp.FIGURE1_SETUP.scale)
    f.add_argument("--test-multiplier", type=int, default=exp.FIGURE1_SETUP.test_multiplier)
    f.add_argument("--lam", type=float, default=1e-3)
    f.set_defaults(func=cmd_figure1)
    subs["figure1"] = f

    b = sub.add_parser("bench", help="desk-scale benchmark sweeps")
    _common(b)
    b.add_argument("--suite", default="binary", choices=["binary", "multi", "all"])
    b.add_argument("--seeds", type=int, default=20)
    b.add_argument("--lam", type=float, default=1e-3)
    b.add_argument("--folds", type=int, default=5)
    b.add_argument("--ratio", type=float, default=100.0)
    b.add_argument("--max", type=int, default=1980, dest="max_class_size")
    b.add_argument("--separation", type=float, default=3.0)
    b.set_defaults(func=cmd_bench)
    subs["bench"] = b
    return parser, subs


def _apply_config(sub: argparse.ArgumentParser, entries: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    for opt in sub._option_string_actions:
        actions.setdefault(opt.lstrip("-").replace("-", "_"), sub._option_string_actions[opt])
    values: dict[str, Any] = {}
    for key, raw in entries.items():
        action = actions.get(key.replace("-", "_"))
        if action is None or action.dest in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            value: Any = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as err:
                raise ConfigError(f"config key {key!r}: {err}") from None
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
        values[action.dest] = value
    for action in sub._actions:
        if action.dest in values:
            action.required = False
    sub.set_defaults(**values)


def _command_name(args) -> str:
    return args.command if args.command != "analyze" else f"analyze {args.target}"


def _manifest(args) -> RunManifest:
    skip = {"func", "out", "config", "no_plots"}
    config = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return RunManifest(_command_name(args), config, getattr(args, "seed", None))


def _emit(out: OutputDir, name: str, report: dict) -> None:
    out.json(name, report)
    out.finish()
    sys.stdout.write(dumps_json({"manifest_hash": out.manifest.hash, **report}))


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    profile = ImbalanceProfile(args.kind, args.ratio, args.classes, args.max_class_size,
                               args.step_fraction)
    gens = default_generators(args.classes, args.dim, args.separation, args.scale)
    out = OutputDir(args.out, _manifest(args))
    tag = f"manifest {out.manifest.hash}"
    if args.test_max:
        train_set, test_set = generate_split(profile, gens, args.seed, args.test_max)
        save_csv(test_set, out.path("test.csv"), header_comment=tag)
    else:
        train_set, test_set = generate_imbalanced(profile, gens, args.seed), None
    save_csv(train_set, out.path("train.csv"), header_comment=tag)
    stats = class_stats(train_set)
    report = {
        "profile": {"kind": profile.kind.value, "ratio": profile.ratio,
                    "num_classes": profile.num_classes, "max_class_size": profile.max_class_size,
                    "step_fraction": profile.step_fraction, "num_minority": profile.num_minority},
        "counts": [int(c) for c in train_set.counts],
        "achieved_ratio": stats.imbalance_ratio,
        "radii": stats.radii,
    }
    if test_set is not None:
        report["test_counts"] = [int(c) for c in test_set.counts]
    _emit(out, "generate.json", report)
    return EXIT_OK


def _loss_spec(args, counts, allow_missing: bool) -> LossSpec:
    entries = {"loss": args.loss}
    for key in ("alpha", "psi", "tau", "gamma", "C", "p", "eq_lambda", "cplus", "cminus"):
        v = getattr(args, key)
        if v is not None:
            entries[key] = str(v)
    if args.rho is not None:
        entries["rho"] = ",".join(repr(r) for r in args.rho)
    kind = LossKind(args.loss)
    if allow_missing:
        # placeholders for the searched parameters; the grid replaces them
        c = len(counts)
        if kind is LossKind.IMMAX_MULTI and "rho" not in entries:
            entries["rho"] = ",".join(["1"] * c)
        if kind is LossKind.IMMAX_BINARY and "rho" not in entries and "alpha" not in entries:
            entries["alpha"] = "0.5"
        placeholders = {"la": {"tau": "1"}, "cb": {"gamma": "0.9"}, "focal": {"gamma": "0"},
                        "ldam": {"C": "1"}, "equal": {"p": "0.5", "eq_lambda": "0.001"}}
        for key, val in placeholders.get(kind.value, {}).items():
            entries.setdefault(key, val)
    spec = LossSpec.from_config(entries)
    return spec.with_counts(counts) if kind in COUNT_KINDS else spec


def _search_grid(kind: LossKind, counts, size: int, width: float) -> dict[str, list]:
    if kind is LossKind.IMMAX_BINARY:
        return {"alpha": immax_alpha_grid(counts, rel_width=width, n_values=size)}
    if kind is LossKind.IMMAX_MULTI:
        return {"rho": immax_rho_grid(counts, rel_width=width, n_values=size)}
    return dict(BASELINE_GRIDS.get(kind.value, {}))


def cmd_train(args) -> int:
    data = load_csv(args.data)
    test = load_csv(args.test, CsvSchema(num_classes=data.num_classes)) if args.test else None
    spec = _loss_spec(args, data.counts, allow_missing=args.cv > 0)
    config = TrainConfig(
        loss=spec, lam=args.lam, optimizer=args.optimizer, batch_size=args.batch_size,
        schedule=args.schedule, lr=args.lr, epochs=args.epochs, seed=args.seed,
        norm_cap=args.norm_cap, model=args.model, hidden=args.hidden,
        fit_bias=not args.no_bias, solver=args.solver,
    )
    out = OutputDir(args.out, _manifest(args))
    report: dict[str, Any] = {}
    chosen = {"lam": args.lam}
    if args.cv:
        grid = _search_grid(spec.kind, data.counts, args.grid_size, args.grid_width)
        cands = build_candidates(config, grid, args.lam_grid or [args.lam])
        cv = cross_validate(data, cands, folds=args.cv, seed=args.seed)
        config = cv.best_config
        chosen = dict(cv.best.params)
        report["cv_table"] = [
            {"params": r.params, "mean_error": r.mean_error, "std_error": r.std_error}
            for r in cv.table
        ]
        out.csv("cv.csv", ["params", "mean_error", "std_error"],
                [[";".join(f"{k}={v}" for k, v in r.params.items()), r.mean_error, r.std_error]
                 for r in cv.table])
    else:
        for key in ("rho", "alpha", "tau", "gamma", "C", "p", "eq_lambda"):
            if key in spec.params:
                chosen[key] = spec.params[key]
    try:
        result = train(data, config)
    except TrainingDiverged as err:
        err.scorer.save(out.path("scorer_last_finite.txt"))
        raise
    result.scorer.save(out.path("scorer.txt"))
    out.csv("trace.csv", ["epoch", "objective", "train_error"],
            [[r.epoch, r.objective, r.train_error] for r in result.trace])
    train_rep = evaluate(result.scorer, data)
    report.update({
        "loss": config.loss.to_config(),
        "chosen": chosen,
        "converged": result.converged,
        "stop_reason": result.reason,
        "epochs_run": result.trace[-1].epoch,
        "final_objective": result.final_objective,
        "train_error": train_rep.zero_one_error,
        "counts": [int(c) for c in data.counts],
    })
    final = evaluate(result.scorer, test) if test is not None else train_rep
    report["test_error"] = final.zero_one_error if test is not None else None
    report["per_class_errors"] = final.per_class_errors
    report["confusion"] = final.confusion
    if not args.no_plots:
        from .plotting import plot_trace
        plot_trace(result.trace, out.path("trace.png"))
    _emit(out, "train.json", report)
    return EXIT_OK


def cmd_eval(args) -> int:
    scorer = load_scorer(args.scorer)
    data = load_csv(args.data, CsvSchema(num_classes=scorer.num_classes))
    first = next(iter(scorer.arrays().values()))
    dim = first.shape[-1]
    if data.dim != dim:
        raise DataError(f"data has {data.dim} features, scorer expects {dim}")
    out = OutputDir(args.out, _manifest(args))
    _emit(out, "eval.json", evaluate(scorer, data).to_dict())
    return EXIT_OK


def cmd_margins(args) -> int:
    out = OutputDir(args.out, _manifest(args))
    _emit(out, "margins.json", mg.compare_margins(args.mplus, args.mminus, args.rplus,
                                                  args.rminus, args.rho_geom))
    return EXIT_OK


def cmd_heuristic(args) -> int:
    radii = args.radii or [1.0] * len(args.counts)
    heur = mg.rho_heuristic(args.counts, radii)
    report: dict[str, Any] = {"direction": heur.direction, "r_bar": heur.r_bar}
    if args.rho is not None:
        report["identity"] = mg.lemma_d3_identity_check(args.counts, radii, args.rho)
        total = sum(args.rho)
        report["d3"] = mg.renyi_d3(heur.direction, np.asarray(args.rho) / total)
    out = OutputDir(args.out, _manifest(args))
    _emit(out, "heuristic.json", report)
    return EXIT_OK


def cmd_bound(args) -> int:
    if args.kind == "binary":
        value = mg.margin_bound_binary(args.emp_loss, args.rad, args.m, args.delta, args.uniform,
                                       args.r, args.rho, args.empirical)
    else:
        value = mg.margin_bound_multi(args.emp_loss, args.rad, args.classes, args.m, args.delta,
                                      args.uniform, args.r, args.rho, args.empirical)
    out = OutputDir(args.out, _manifest(args))
    _emit(out, "bound.json", {"bound": value})
    return EXIT_OK


def cmd_rademacher(args) -> int:
    data = load_csv(args.data)
    exact = {"auto": None, "exact": True, "mc": False}[args.mode]
    report: dict[str, Any]
    if data.is_binary:
        est = rad.empirical_binary_complexity(data, args.rho, args.Lambda, args.trials, exact, args.seed)
        b = rad.bound_linear_binary(data.counts, data.radii, args.rho, args.Lambda)
        report = {"tight_bound": b.tight, "loose_bound": b.loose}
    else:
        est = rad.empirical_multi_complexity(data, args.rho, args.Lambda, args.trials, exact, args.seed)
        report = {"l2_bound": rad.bound_kernel_l2(data.counts, data.radii, args.rho, args.Lambda,
                                                  data.num_classes)}
    report.update({"estimate": est.value, "std_error": est.std_error, "trials": est.trials,
                   "method": est.method.value})
    out = OutputDir(args.out, _manifest(args))
    _emit(out, "rademacher.json", report)
    return EXIT_OK


def cmd_consistency(args) -> int:
    if args.demo:
        report = cons.bayes_inconsistency_demo(args.cplus, args.cminus, args.eps)
        report["brute_force_threshold"] = cons.brute_force_threshold(args.cplus, args.cminus)
        report["scan"] = cons.scan_threshold(args.cplus, args.cminus)
        name = "consistency_demo.json"
    else:
        report = cons.run_trials(args.verify, args.trials, args.seed, args.max_support,
                                 args.max_classes)
        name = f"consistency_{args.verify}.json"
    out = OutputDir(args.out, _manifest(args))
    _emit(out, name, report)
    return EXIT_OK


def cmd_figure1(args) -> int:
    setup = exp.BinarySetup(args.ratio, args.max_class_size, args.separation, args.scale,
                            test_multiplier=args.test_multiplier)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", exp.NonSeparableWarning)
        result = exp.figure1(setup, args.seed, args.lam)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = OutputDir(args.out, _manifest(args))
    tr = result.train
    out.csv("figure1_points.csv", ["label", "x1", "x2"],
            [[int(lbl), *row[:2]] for lbl, row in zip(tr.signed_labels(), tr.X)])
    out.csv("figure1_boundaries.csv",
            ["name", "alpha", "w1", "w2", "b", "offset", "train_error", "test_error", "population_error"],
            [[b.name, b.alpha, b.w[0], b.w[1], b.b, b.offset, b.train_error, b.test_error,
              b.population_error] for b in result.boundaries])
    if not args.no_plots:
        from .plotting import plot_figure1
        plot_figure1(result, out.path("figure1.png"))
    _emit(out, "figure1.json", result.to_dict())
    return EXIT_OK


def cmd_bench(args) -> int:
    out = OutputDir(args.out, _manifest(args))
    report: dict[str, Any] = {}
    if args.suite in ("binary", "all"):
        setup = exp.BinarySetup(args.ratio, args.max_class_size, args.separation)
        res = exp.bench_binary(setup, range(args.seeds), args.lam, args.folds)
        out.csv("bench_binary.csv",
                ["seed", "alpha_cv", "error_svm", "error_cv", "error_immax_center", "error_ldam"],
                [[r.seed, r.alpha_cv, r.error_svm, r.error_cv, r.error_immax_center, r.error_ldam]
                 for r in res["rows"]])
        report["binary"] = res["summary"]
        if not args.no_plots:
            from .plotting import plot_bench_binary
            plot_bench_binary(res["summary"], out.path("bench_binary.png"))
    if args.suite in ("multi", "all"):
        res = exp.bench_multi(seeds=range(min(args.seeds, 3)), lam=args.lam)
        out.csv("bench_multi.csv", ["seed", "loss", "test_error"],
                [[r["seed"], r["loss"], r["test_error"]] for r in res["rows"]])
        report["multi"] = {"summary": res["summary"], "counts": res["counts"]}
        if not args.no_plots:
            from .plotting import plot_bench_multi
            plot_bench_multi(res["summary"], out.path("bench_multi.png"))
    _emit(out, "bench.json", report)
    return EXIT_OK


# ---------------------------------------------------------------------------

_CONFIG_ERRORS = (ConfigError, LossConfigError, InvalidMarginError, InvalidProfileError, DataError,
                  ScorerFormatError, StratificationError, mg.BoundDomainError,
                  rad.EnumerationTooLarge, cons.ConsistentRegimeError, OSError, ValueError)


def main(argv: list[str] | None = None) -> int:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.config:
            _apply_config(subs[_command_name(args)], read_config(args.config))
            args = parser.parse_args(argv)
        func: Callable[[Any], int] = args.func
        with np.errstate(over="ignore"):
            return func(args)
    except TrainingDiverged as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as err:
        print(f"error: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except _CONFIG_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
