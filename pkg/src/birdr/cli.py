"""Command-line entry point: single-shot DR runs, GP fitting, and studies.

Studies are described by a TOML config with sections mirroring the
library modules; unknown keys are rejected with the offending key path
and a suggestion.  Exit codes: 0 success, 2 config/usage error, 3
numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import difflib
import json
import logging
import sys

import numpy as np
import tomli

from . import bench
from .bench import (
    KIND_MRRE,
    KIND_R2,
    METHOD_NONE,
    ExperimentConfig,
    run_mrre_study,
    run_r2_study,
)
from . import dr as dr_mod
from .data import (
    Dataset,
    FunctionId,
    SyntheticSpec,
    fit_whitener,
    gen_synthetic,
    load_csv,
    unwhiten_direction,
    whiten,
)
from .dr import (
    METHOD_BAVE,
    METHOD_BIR,
    METHOD_SAVE,
    METHOD_SIR,
    SAMPLER_IS,
    SAMPLER_MCMC,
    default_n_slices,
)
from .errors import BirdrError, ConfigError
from .gp import fit_gp
from .inference import StandardNormalPrior, fit_gaussian_prior

log = logging.getLogger("birdr")

_METHODS = (METHOD_SIR, METHOD_SAVE, METHOD_BIR, METHOD_BAVE)

# section -> key -> (default, description); the single source for both
# config validation and the --help key listing.
CONFIG_SCHEMA = {
    "study": {
        "kind": (None, f"study kind: {KIND_R2} or {KIND_MRRE} (required)"),
        "methods": (None, "list of methods: SIR, SAVE, BIR, BAVE, NONE (required)"),
        "k": (1, "number of DR directions"),
        "trials": (20, "repetitions per setting"),
        "base_seed": (0, "root seed; trial seeds derive from (seed, setting, trial)"),
        "sampler": (SAMPLER_MCMC, f"posterior sampler: {SAMPLER_MCMC} or {SAMPLER_IS}"),
        "n_mc": (10000, "posterior samples per conditioning value"),
        "h": (None, "slice count for SIR/SAVE (default: method-specific rule)"),
    },
    "synthetic": {
        "function_id": (None, "fun1, fun2, fun3_banana, fun4_banana, or quad"),
        "dimension": (None, "predictor dimension"),
        "n": (None, "sample size (fixed)"),
        "n_per_dim": (None, "sample size rule n = n_per_dim * dimension"),
        "banana_b": (0.0, "curvature of the banana transform"),
        "noise_sd": (None, "noise coefficient (default: function-specific)"),
        "banana_literal": (False, "use the curving transform exactly as printed"),
        "sweep_param": (None, "sweep over: dimension, banana_b, or n"),
        "sweep_values": ((), "values of the swept parameter"),
    },
    "dataset": {
        "path": (None, "CSV file with one header row"),
        "response": (None, "response column name or zero-based index"),
        "train_sizes": ((), "training-set sizes to sweep"),
        "test_size": (20, "held-out test points per trial"),
    },
    "gp": {
        "restarts": (10, "random restarts for hyperparameter MLE"),
        "max_iters": (200, "optimizer iterations per restart"),
    },
    "prior": {
        "kind": (
            bench.PRIOR_GAUSSIAN_FIT,
            f"{bench.PRIOR_GAUSSIAN_FIT} or {bench.PRIOR_ANALYTIC}",
        ),
    },
    "output": {
        "json": (None, "report JSON path"),
        "csv": (None, "report CSV path"),
        "raw_csv": (None, "optional per-trial values CSV path"),
    },
}


def config_help_text() -> str:
    lines = ["config keys and defaults:"]
    for section, keys in CONFIG_SCHEMA.items():
        for key, (default, desc) in keys.items():
            lines.append(f"  {section}.{key} (default {default!r}): {desc}")
    return "\n".join(lines)


def _reject_unknown(doc: dict):
    for section, body in doc.items():
        if section not in CONFIG_SCHEMA:
            hint = difflib.get_close_matches(section, CONFIG_SCHEMA, n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"unknown config section {section!r}{extra}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a table")
        for key in body:
            if key not in CONFIG_SCHEMA[section]:
                hint = difflib.get_close_matches(key, CONFIG_SCHEMA[section], n=1)
                extra = f"; did you mean {section}.{hint[0]!r}?" if hint else ""
                raise ConfigError(f"unknown config key {section}.{key}{extra}")


def load_config(
    path,
    full: bool = False,
    base_seed: int | None = None,
    trials: int | None = None,
) -> ExperimentConfig:
    """Parse and validate a TOML study config into an ExperimentConfig."""
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    _reject_unknown(doc)

    def get(section, key):
        return doc.get(section, {}).get(key, CONFIG_SCHEMA[section][key][0])

    kind = get("study", "kind")
    methods = get("study", "methods")
    if kind is None or methods is None:
        raise ConfigError("study.kind and study.methods are required")
    for m in methods:
        if m not in _METHODS + (METHOD_NONE,):
            raise ConfigError(f"unknown method {m!r} in study.methods")
    if trials is None:
        trials = 100 if full else get("study", "trials")
    try:
        return ExperimentConfig(
            kind=kind,
            methods=tuple(methods),
            K=get("study", "k"),
            trials=trials,
            base_seed=base_seed if base_seed is not None else get("study", "base_seed"),
            sampler=get("study", "sampler"),
            n_mc=get("study", "n_mc"),
            H=get("study", "h"),
            prior=get("prior", "kind"),
            gp_restarts=get("gp", "restarts"),
            gp_max_iters=get("gp", "max_iters"),
            function_id=get("synthetic", "function_id"),
            dimension=get("synthetic", "dimension"),
            n=get("synthetic", "n"),
            n_per_dim=get("synthetic", "n_per_dim"),
            banana_b=get("synthetic", "banana_b"),
            noise_sd=get("synthetic", "noise_sd"),
            banana_literal=get("synthetic", "banana_literal"),
            sweep_param=get("synthetic", "sweep_param"),
            sweep_values=tuple(get("synthetic", "sweep_values")),
            dataset_path=get("dataset", "path"),
            response_column=get("dataset", "response"),
            train_sizes=tuple(get("dataset", "train_sizes")),
            test_size=get("dataset", "test_size"),
        )
    except BirdrError as e:
        raise ConfigError(str(e)) from e


def _emit(doc: dict, out_path):
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_dr(args) -> int:
    if args.data:
        dataset = load_csv(args.data, _response_arg(args.response), drop_rows_with_missing=True)
    elif args.synthetic:
        spec = SyntheticSpec(
            function_id=FunctionId(args.synthetic),
            dimension=args.d,
            banana_b=args.b,
            noise_sd=args.noise_sd,
            banana_literal=args.banana_literal,
        )
        dataset, _ = gen_synthetic(spec, args.n, seed=args.seed)
    else:
        raise ConfigError("either --data or --synthetic is required")

    whitener = fit_whitener(dataset.X)
    Z = whiten(whitener, dataset.X)
    y = dataset.y
    n = Z.shape[0]
    if args.method == METHOD_SIR:
        result = dr_mod.sir(Z, y, H=args.h or default_n_slices(METHOD_SIR, n), K=args.k)
    elif args.method == METHOD_SAVE:
        # an explicit --h is a hard demand, not a hint
        result = dr_mod.save(
            Z,
            y,
            H=args.h or default_n_slices(METHOD_SAVE, n),
            K=args.k,
            allow_h_reduction=args.h is None,
        )
    else:
        model = fit_gp(Z, y, n_restarts=args.gp_restarts, seed=args.seed)
        if args.prior == bench.PRIOR_ANALYTIC:
            prior = StandardNormalPrior(Z.shape[1])
        else:
            prior = fit_gaussian_prior(Z)
        fn = dr_mod.bir if args.method == METHOD_BIR else dr_mod.bave
        result = fn(
            Dataset(X=Z, y=y),
            model,
            prior,
            n_mc=args.n_mc,
            K=args.k,
            sampler=args.sampler,
            seed=args.seed,
        )
    B = np.column_stack(
        [unwhiten_direction(whitener, result.directions[:, k]) for k in range(args.k)]
    )
    doc = result.to_json_dict()
    doc["directions"] = [col.tolist() for col in B.T]
    doc["seed"] = args.seed
    _emit(doc, args.out)
    return 0


def _cmd_fit_gp(args) -> int:
    dataset = load_csv(args.data, _response_arg(args.response), drop_rows_with_missing=True)
    whitener = fit_whitener(dataset.X)
    Z = whiten(whitener, dataset.X) if args.whiten else dataset.X
    model = fit_gp(Z, dataset.y, n_restarts=args.restarts, seed=args.seed)
    text = model.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_bench(args) -> int:
    config = load_config(
        args.config, full=args.full, base_seed=args.seed, trials=args.trials
    )
    if config.kind == KIND_R2:
        report = run_r2_study(config, jobs=args.jobs)
    else:
        report = run_mrre_study(config, jobs=args.jobs)

    with open(args.config, "rb") as fh:
        doc = tomli.load(fh)
    out = doc.get("output", {})
    json_path = args.out_json or out.get("json")
    csv_path = args.out_csv or out.get("csv")
    if json_path:
        _emit(report.to_json_dict(), json_path)
    if csv_path:
        report.to_csv(csv_path, raw_path=out.get("raw_csv"))
    print(report.format_table())
    return 0


def _response_arg(value):
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="birdr",
        description="Supervised dimension reduction: SIR/SAVE and their "
        "Bayesian posterior-sampling counterparts BIR/BAVE.",
        epilog=config_help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", default="warning", help="stderr log level")
    sub = parser.add_subparsers(dest="command", required=True)

    p_dr = sub.add_parser("dr", help="run one estimator and print directions as JSON")
    p_dr.add_argument("--data", help="CSV dataset path")
    p_dr.add_argument("--response", help="response column name or index")
    p_dr.add_argument(
        "--synthetic", choices=[f.value for f in FunctionId], help="generate data instead"
    )
    p_dr.add_argument("--d", type=int, default=10, help="synthetic dimension")
    p_dr.add_argument("--n", type=int, default=50, help="synthetic sample size")
    p_dr.add_argument("--b", type=float, default=0.0, help="banana curvature")
    p_dr.add_argument("--noise-sd", type=float, default=None)
    p_dr.add_argument("--banana-literal", action="store_true")
    p_dr.add_argument("--method", required=True, choices=_METHODS)
    p_dr.add_argument("--k", type=int, default=1, help="number of directions")
    p_dr.add_argument("--h", type=int, default=None, help="slice count (SIR/SAVE)")
    p_dr.add_argument("--sampler", default=SAMPLER_MCMC, choices=[SAMPLER_MCMC, SAMPLER_IS])
    p_dr.add_argument("--n-mc", type=int, default=10000)
    p_dr.add_argument(
        "--prior", default=bench.PRIOR_GAUSSIAN_FIT,
        choices=[bench.PRIOR_GAUSSIAN_FIT, bench.PRIOR_ANALYTIC],
    )
    p_dr.add_argument("--gp-restarts", type=int, default=10)
    p_dr.add_argument("--seed", type=int, default=0)
    p_dr.add_argument("--out", help="write result JSON here instead of stdout")
    p_dr.set_defaults(fn=_cmd_dr)

    p_fit = sub.add_parser("fit-gp", help="fit a GP model and write it as JSON")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--response", required=True)
    p_fit.add_argument("--restarts", type=int, default=10)
    p_fit.add_argument("--whiten", action="store_true", help="whiten predictors first")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out")
    p_fit.set_defaults(fn=_cmd_fit_gp)

    p_bench = sub.add_parser(
        "bench",
        help="run a study described by a TOML config",
        epilog=config_help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_bench.add_argument("config", help="TOML study config")
    p_bench.add_argument(
        "--full", action="store_true", help="raise trials to 100 (full reproduction)"
    )
    p_bench.add_argument(
        "--trials", type=int, default=None, help="override the config's trial count"
    )
    p_bench.add_argument("--jobs", type=int, default=1, help="worker pool size")
    p_bench.add_argument("--seed", type=int, default=None, help="override base seed")
    p_bench.add_argument("--out-json", help="override output.json path")
    p_bench.add_argument("--out-csv", help="override output.csv path")
    p_bench.set_defaults(fn=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.WARNING),
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except ConfigError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}))
        return 2
    except (FileNotFoundError, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}))
        return 4
    except BirdrError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}))
        return 3


if __name__ == "__main__":
    sys.exit(main())
