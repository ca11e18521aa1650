"""
ZeroBench command line.

    zerobench impute --input counts.csv --method lr_em --out imputed.csv
    zerobench bench-sparsity --input truth.csv --methods lr_em,add1 --m 50 --p 0.05,0.4 --out runs/a
    zerobench bench-dimension --alpha 6,3,1 --depth 1000 --m 2,3 --p 0.2,0.5 --out runs/b
    zerobench simulate-dm --alpha 6,3,1 --depths 100,1000 --n 100 --out sims/
    zerobench quantize-demo --alpha 6,3,1 --depth 1000 --n 100 --scales 1,0.1,0.01,0.001 --seed 7
    zerobench gen-nozero --synthetic --out nozero.csv

Exit codes: 0 success, 1 usage or contract error, 2 I/O error, 3 every run failed.
"""
import argparse
import os
import sys
from datetime import datetime, timezone
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from bench.ingest import ingest_csv
from bench.plotdata import emit_plot_data
from bench.sweeps import ced_basis_counts, run_dimension_sweep, run_sparsity_sweep
from core.config import RESULTS_DIR, config, get_logger
from core.countlab import (
    depth_resolution,
    logratio_shift_experiment,
    make_zero_free,
    simulate_dm,
    synthetic_sparse_counts,
)
from core.errors import ContractError, IngestError, StorageError, ZeroBenchError
from core.imputers import apply_ceiling, impute
from core.schemas import METHOD_IDS, DimensionSweep, DMSpec, ExperimentConfig, RunManifest, SparsitySweep
from core.storage_service import ResultStore, get_storage_config

logger = get_logger("cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_ALL_FAILED = 3


class UsageError(ContractError):
    pass


class ZeroBenchParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 is reserved for I/O errors here."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _parse_value(text: str):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _parse_params(items: Optional[List[str]]) -> Dict[str, object]:
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--param expects key=value, got {item!r}")
        params[key.strip()] = _parse_value(value.strip())
    return params


def _method_params(items: Optional[List[str]]) -> Dict[str, Dict[str, object]]:
    """``method.key=value`` pairs grouped by method."""
    grouped: Dict[str, Dict[str, object]] = {}
    for key, value in _parse_params(items).items():
        method, dot, name = key.partition(".")
        if not dot:
            raise UsageError(f"bench --param expects method.key=value, got {key!r}")
        grouped.setdefault(method, {})[name] = value
    return grouped


def _detection_limits(arg: Optional[str], x: np.ndarray) -> np.ndarray:
    """Scalar, a CSV of per-column limits, or each column's smallest positive value."""
    D = x.shape[1]
    if arg is None:
        positive = np.where(x > 0, x, np.inf)
        limits = positive.min(axis=0)
        if not np.all(np.isfinite(limits)):
            raise ContractError("a column has no positive value to derive its detection limit from")
        return limits
    try:
        return np.full(D, float(arg))
    except ValueError:
        pass
    if not os.path.exists(arg):
        raise FileNotFoundError(arg)
    limits = pd.read_csv(arg, header=None).to_numpy(dtype=float).ravel()
    if limits.size != D:
        raise ContractError(f"{arg} holds {limits.size} detection limit(s) for {D} columns")
    return limits


def _write_frame(frame: pd.DataFrame, path: str, index_label: Optional[str] = None):
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        frame.to_csv(path, index=index_label is not None, index_label=index_label, lineterminator="\n")
    except OSError as e:
        raise StorageError(f"could not write {path}: {e}") from e
    logger.info(f"Wrote {path}")


def cmd_impute(args) -> int:
    counts = ingest_csv(args.input)
    x = np.array(counts.values, dtype=float)
    params = _parse_params(args.param)
    if args.ref is not None:
        params["reference"] = args.ref - 1
    dl = _detection_limits(args.dl, x)
    rng = np.random.default_rng(args.seed)
    try:
        outcome = impute(args.method, x, dl, rng=rng, **params)
    except TypeError as e:
        raise UsageError(f"{args.method} rejected the given parameters: {e}") from None
    if args.ceil and not outcome.is_failed:
        outcome = apply_ceiling(outcome)
    logger.info(f"{args.method}: status {outcome.status.value} {outcome.reason}".rstrip())
    if outcome.is_failed:
        print(f"{args.method} failed: {outcome.reason}", file=sys.stderr)
        return EXIT_ALL_FAILED
    _write_frame(outcome.to_frame(counts.row_labels, counts.col_labels), args.out, index_label="sample")
    print(args.out)
    return EXIT_OK


def _bench_input(args):
    if args.input and args.alpha:
        raise UsageError("give either --input or --alpha/--depth, not both")
    if args.input:
        if not os.path.exists(args.input):
            raise FileNotFoundError(args.input)
        return args.input
    if args.alpha and args.depth:
        return DMSpec(alpha=args.alpha, depth=args.depth, n=args.n)
    raise UsageError("benchmark input missing: --input or --alpha with --depth")


def _experiment(args, kind: str) -> ExperimentConfig:
    design_args = {}
    if args.m:
        design_args["m_list"] = args.m
    if kind == "sparsity":
        if args.p:
            design_args["p_list"] = args.p
        design = SparsitySweep(**design_args)
    else:
        if args.p:
            design_args["p_fixed"] = args.p
        design = DimensionSweep(**design_args)
    fields = dict(
        input=_bench_input(args),
        design=design,
        methods=args.methods,
        variants=args.variants,
        out_dir=args.out or os.path.join(RESULTS_DIR, f"{kind}-seed{args.seed}"),
        zero_columns=args.columns,
        parity=args.parity,
        omit_runtime=args.omit_runtime,
        method_params=_method_params(args.param),
    )
    for name, value in (("reps", args.reps), ("base_seed", args.seed), ("jobs", args.jobs), ("timeout_s", args.timeout_s)):
        if value is not None:
            fields[name] = value
    return ExperimentConfig(**fields)


def _versions() -> Dict[str, str]:
    import pydantic
    import scipy
    import sklearn

    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "scikit-learn": sklearn.__version__,
        "pydantic": pydantic.VERSION,
    }


def cmd_bench(args) -> int:
    kind = args.design
    cfg = _experiment(args, kind)
    store = ResultStore(cfg.out_dir, omit_runtime=cfg.omit_runtime)
    logger.info(f"Starting {kind} sweep: {len(cfg.grid)} cell(s) x {cfg.reps} rep(s), methods {cfg.methods}")
    logger.debug(f"Storage: {get_storage_config(cfg.out_dir)}")
    started = datetime.now(timezone.utc)

    sweep = run_sparsity_sweep if kind == "sparsity" else run_dimension_sweep
    records = sweep(cfg, store)

    store.finalize(records)
    if records:
        emit_plot_data(records, cfg.out_dir)
    n_failed = sum(r.status == "failed" for r in records)
    bases = ced_basis_counts(records)
    if len(bases) > 1:
        logger.warning(f"CED normalisation differs across cells: {bases} (see ced_basis in manifest.json)")
    store.write_manifest(
        RunManifest(
            run_id=os.path.basename(os.path.abspath(cfg.out_dir)),
            command=" ".join(["zerobench"] + list(args.argv)),
            config=cfg.model_dump(mode="json"),
            base_seed=cfg.base_seed,
            versions=_versions(),
            started=started,
            finished=datetime.now(timezone.utc),
            n_records=len(records),
            n_failed=n_failed,
            ced_basis=bases,
        )
    )
    store.mirror()
    print(store.path("results.csv"))
    if records and not any(r.status == "ok" for r in records):
        logger.error("Every run failed")
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_simulate_dm(args) -> int:
    rng = np.random.default_rng(args.seed)
    depths = args.depths or [args.depth]
    if not all(depths):
        raise UsageError("simulate-dm needs --depth or --depths")
    for depth in depths:
        counts = simulate_dm(DMSpec(alpha=args.alpha, depth=depth, n=args.n), rng)
        name = "counts.csv" if len(depths) == 1 else f"counts_depth{depth}.csv"
        counts.save(os.path.join(args.out, name))
    if len(depths) > 1:
        summary, coords = depth_resolution(args.alpha, depths, args.n, rng)
        _write_frame(summary, os.path.join(args.out, "depth_resolution.csv"))
        _write_frame(coords, os.path.join(args.out, "depth_clr.csv"))
    print(args.out)
    return EXIT_OK


def cmd_quantize_demo(args) -> int:
    rng = np.random.default_rng(args.seed)
    shifts, means = logratio_shift_experiment(DMSpec(alpha=args.alpha, depth=args.depth, n=args.n), args.scales, rng)
    if args.out:
        _write_frame(shifts, os.path.join(args.out, "lr_shift.csv"))
        _write_frame(means, os.path.join(args.out, "mean_lr.csv"))
    print(means.to_string(index=False))
    return EXIT_OK


def cmd_gen_nozero(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.synthetic:
        counts = synthetic_sparse_counts(rng=rng)
    elif args.input:
        counts = ingest_csv(args.input)
    else:
        raise UsageError("gen-nozero needs --input or --synthetic")
    zero_free = make_zero_free(counts, args.depth, rng)
    zero_free.save(args.out)
    print(args.out)
    return EXIT_OK


def _add_bench_arguments(p: argparse.ArgumentParser):
    p.add_argument("--input", help="Zero-free count matrix CSV (ground truth)")
    p.add_argument("--alpha", type=_float_list, help="Dirichlet parameters for a simulated truth")
    p.add_argument("--depth", type=int, help="Sequencing depth for a simulated truth")
    p.add_argument("--n", type=int, default=100, help="Samples for a simulated truth (default: 100)")
    p.add_argument(
        "--methods",
        type=lambda s: [m.strip() for m in s.split(",") if m.strip()],
        default=list(METHOD_IDS),
        help=f"Comma-separated method ids (default: all of {','.join(METHOD_IDS)})",
    )
    p.add_argument("--m", type=_int_list, help="Column counts to sample")
    p.add_argument("--p", type=_float_list, help="Zero proportions (quantile levels)")
    p.add_argument("--reps", type=int, help=f"Replicates per cell (default: {config.BENCH_REPS})")
    p.add_argument("--seed", type=int, default=config.BASE_SEED, help="Base seed")
    p.add_argument(
        "--variants",
        type=lambda s: [v.strip() for v in s.split(",") if v.strip()],
        default=["raw", "ceil"],
        help="raw, ceil or both (default: raw,ceil)",
    )
    p.add_argument("--out", help="Run directory")
    p.add_argument("--jobs", type=int, help=f"Worker processes (default: {config.JOBS})")
    p.add_argument("--timeout-s", type=float, help=f"Per-method timeout (default: {config.TIMEOUT_S})")
    p.add_argument("--columns", choices=["every_second", "random_half"], default="every_second")
    p.add_argument("--parity", choices=["even", "odd"], default="even")
    p.add_argument("--omit-runtime", action="store_true", help="Leave runtime_s empty for byte-identical output")
    p.add_argument("--param", action="append", metavar="METHOD.KEY=VALUE", help="Method parameter, repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = ZeroBenchParser(
        prog="zerobench",
        description="Zero imputation for compositional count data and its benchmark harness",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ZeroBenchParser)

    p = sub.add_parser("impute", help="Impute the zeros of one count matrix")
    p.add_argument("--input", required=True)
    p.add_argument("--method", required=True, help=f"One of {', '.join(METHOD_IDS)}")
    p.add_argument("--out", required=True)
    p.add_argument("--dl", help="Detection limit: a number or a CSV of per-column limits")
    p.add_argument("--seed", type=int, default=config.BASE_SEED)
    p.add_argument("--ceil", action="store_true", help="Round the imputed matrix up to integers")
    p.add_argument("--ref", type=int, help="1-based reference column for lr_em and lr_da")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="Method parameter, repeatable")
    p.set_defaults(func=cmd_impute)

    for name, design in (("bench-sparsity", "sparsity"), ("bench-dimension", "dimension")):
        p = sub.add_parser(name, help=f"{design.capitalize()} sweep")
        _add_bench_arguments(p)
        p.set_defaults(func=cmd_bench, design=design)

    p = sub.add_parser("bench", help="Either sweep, chosen with --design")
    _add_bench_arguments(p)
    p.add_argument("--design", choices=["sparsity", "dimension"], required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate-dm", help="Dirichlet-multinomial count matrices")
    p.add_argument("--alpha", type=_float_list, required=True)
    p.add_argument("--depth", type=int)
    p.add_argument("--depths", type=_int_list)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=config.BASE_SEED)
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(func=cmd_simulate_dm)

    p = sub.add_parser("quantize-demo", help="Log-ratio drift under scale quantization")
    p.add_argument("--alpha", type=_float_list, default=[6.0, 3.0, 1.0])
    p.add_argument("--depth", type=int, default=1000)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--scales", type=_float_list, default=[1.0, 0.1, 0.01, 0.001])
    p.add_argument("--seed", type=int, default=config.BASE_SEED)
    p.add_argument("--out", help="Output directory for lr_shift.csv and mean_lr.csv")
    p.set_defaults(func=cmd_quantize_demo)

    p = sub.add_parser("gen-nozero", help="Zero-free matrix from a sparse count matrix")
    p.add_argument("--input")
    p.add_argument("--synthetic", action="store_true", help="Use the 56x985 sparse stand-in")
    p.add_argument("--depth", type=int, default=config.ZERO_FREE_DEPTH)
    p.add_argument("--seed", type=int, default=config.BASE_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_nozero)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        logger.debug(f"Environment {config.ENVIRONMENT}, command {args.command}")
        return args.func(args)
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except IngestError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (StorageError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ZeroBenchError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
