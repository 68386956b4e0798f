"""Command-line entry point: explain samples, run studies, fit models.

Exit codes: 0 success, 1 usage, 2 ingestion, 3 computation. Identical
flags and inputs always produce identical output bytes; SHAPDEC_THREADS
caps internal parallelism (0 = auto) and never changes results.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .core import FeatureMatrix, RngStream
from .distributions import (
    CopulaSampler,
    DiscreteJoint,
    DiscreteSampler,
    GaussianSampler,
    MarginalSampler,
    fit_copula,
    fit_gaussian,
)
from .engine import decompose
from .errors import IngestionError, ShapdecError
from .experiments import (
    run_correlation_study,
    run_fire_study,
    run_imputation_study,
    run_toy,
    write_json,
)
from .models import fit_forest, fit_ols, model_from_json
from .synthetic import synthetic_fire, synthetic_housing
from .viz import ForceFeature, ForcePlotSpec, render_force_plot

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INGESTION = 2
EXIT_COMPUTATION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def max_threads() -> int:
    """Parallelism cap from SHAPDEC_THREADS (0 = auto)."""
    raw = os.environ.get("SHAPDEC_THREADS", "0")
    try:
        value = int(raw)
    except ValueError as err:
        raise IngestionError(f"SHAPDEC_THREADS must be an integer, got {raw!r}") from err
    if value < 0:
        raise IngestionError("SHAPDEC_THREADS must be >= 0")
    return value or (os.cpu_count() or 1)


def read_csv(path, target: str | None = None):
    """Read a header-plus-numerics CSV into a FeatureMatrix (and target)."""
    path = Path(path)
    try:
        with path.open(newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if not header:
                raise IngestionError(f"{path}: empty file")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError as err:
                    raise IngestionError(f"{path}:{lineno}: {err}") from err
    except OSError as err:
        raise IngestionError(f"cannot read {path}: {err}") from err
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    values = np.array(rows)
    if values.shape[1] != len(header):
        raise IngestionError(f"{path}: ragged rows")
    if target is None:
        return FeatureMatrix(tuple(header), values), None
    if target not in header:
        raise IngestionError(f"{path}: no column named {target!r}")
    t = header.index(target)
    names = tuple(n for i, n in enumerate(header) if i != t)
    keep = [i for i in range(len(header)) if i != t]
    return FeatureMatrix(names, values[:, keep]), values[:, t]


def _build_sampler(kind: str, data: FeatureMatrix):
    if kind == "gaussian":
        return GaussianSampler(fit_gaussian(data))
    if kind == "copula":
        return CopulaSampler(fit_copula(data))
    if kind == "marginal":
        return MarginalSampler(data)
    if kind == "discrete":
        rows, counts = np.unique(data.values, axis=0, return_counts=True)
        return DiscreteSampler(DiscreteJoint(rows, counts / counts.sum()))
    raise IngestionError(f"unknown sampler kind {kind!r}")


def _resolve_sample(args, data: FeatureMatrix) -> np.ndarray:
    if args.sample is not None:
        try:
            x = np.array([float(v) for v in args.sample.split(",")])
        except ValueError as err:
            raise IngestionError(f"bad --sample value: {err}") from err
    else:
        if not 0 <= args.row < data.n_rows:
            raise IngestionError(f"--row {args.row} out of range")
        x = data.values[args.row]
    if len(x) != data.n_features:
        raise IngestionError(f"sample has {len(x)} values, data has {data.n_features} features")
    return x


def _load_or_fit_model(args, data: FeatureMatrix):
    if args.model:
        try:
            doc = json.loads(Path(args.model).read_text())
        except OSError as err:
            raise IngestionError(f"cannot read model: {err}") from err
        except json.JSONDecodeError as err:
            raise IngestionError(f"bad model JSON: {err}") from err
        return model_from_json(doc)
    if args.fit:
        if args.target is None:
            raise IngestionError("--fit requires --target")
        features, target = read_csv(args.data, args.target)
        if args.fit == "linear":
            return fit_ols(features, target)
        return fit_forest(
            features,
            target,
            {"trees": args.trees, "max_depth": args.max_depth, "min_leaf": args.min_leaf},
            RngStream(args.seed, 77),
        )
    raise IngestionError("need either --model or --fit")


def _cmd_explain(args) -> int:
    target = args.target if args.fit else None
    data, _ = read_csv(args.data, target)
    model = _load_or_fit_model(args, data)
    sampler = _build_sampler(args.sampler, data)
    x = _resolve_sample(args, data)
    dec = decompose(model, sampler, x, args.k1, args.k2, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "decomposition.json", dec.to_json_dict(data.names))
    if args.plot:
        spec = ForcePlotSpec(
            base=dec.base,
            features=tuple(
                ForceFeature(data.names[i], x[i], dec.phi_int[i], dec.phi_dep[i])
                for i in range(data.n_features)
            ),
        )
        (out / "force.svg").write_text(render_force_plot(spec))
    return EXIT_OK


def _cmd_experiment(args) -> int:
    out = Path(args.out)
    if args.name == "toy":
        run_toy(args.k1, args.k2, args.seed, out)
    elif args.name == "correlation":
        alphas = tuple(float(v) for v in args.alphas.split(","))
        run_correlation_study(args.a12, alphas, args.k1, args.k2, args.seed, out)
    elif args.name == "housing":
        if args.synthetic:
            data, target = synthetic_housing(seed=args.seed)
        else:
            if not args.data or not args.target:
                raise IngestionError("housing needs --data and --target (or --synthetic)")
            data, target = read_csv(args.data, args.target)
        towns = min(args.towns, data.n_rows)
        run_imputation_study(
            data, target, args.model_kind, towns, args.k1, args.k2, args.seed, out
        )
    elif args.name == "fire":
        if args.synthetic:
            data, labels = synthetic_fire(seed=args.seed)
        else:
            if not args.data or not args.target:
                raise IngestionError("fire needs --data and --target (or --synthetic)")
            data, labels = read_csv(args.data, args.target)
        run_fire_study(data, labels, args.k1, args.k2, args.seed, args.sample_index, out)
    else:  # pragma: no cover - argparse restricts choices
        raise IngestionError(f"unknown experiment {args.name!r}")
    return EXIT_OK


def _cmd_fit_model(args) -> int:
    data, target = read_csv(args.data, args.target)
    if args.kind == "linear":
        model = fit_ols(data, target)
    else:
        model = fit_forest(
            data,
            target,
            {"trees": args.trees, "max_depth": args.max_depth, "min_leaf": args.min_leaf},
            RngStream(args.seed, 77),
            task=args.task,
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, model.to_json_dict())
    return EXIT_OK


def _add_budget_flags(p, k1_default=1000, k2_default=4000):
    p.add_argument("--k1", type=int, default=k1_default, help="draws per value-function call")
    p.add_argument("--k2", type=int, default=k2_default, help="sampled permutations per feature")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="shapdec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="decompose one sample's prediction")
    p.add_argument("--data", required=True)
    p.add_argument("--target", help="target column (used with --fit)")
    p.add_argument("--model", help="model JSON file")
    p.add_argument("--fit", choices=["linear", "forest"], help="fit a model on --data instead")
    p.add_argument(
        "--sampler",
        choices=["gaussian", "copula", "discrete", "marginal"],
        default="gaussian",
    )
    p.add_argument("--sample", help="inline sample, comma-separated")
    p.add_argument("--row", type=int, default=0, help="row of --data to explain")
    _add_budget_flags(p)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--out", default=".")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("experiment", help="run a bundled study")
    p.add_argument("name", choices=["toy", "correlation", "housing", "fire"])
    p.add_argument("--data")
    p.add_argument("--target")
    p.add_argument("--synthetic", action="store_true", help="use the bundled generator")
    p.add_argument("--a12", type=float, default=2.0)
    p.add_argument("--alphas", default="0,0.25,0.5,0.75")
    p.add_argument("--towns", type=int, default=200)
    p.add_argument("--model-kind", choices=["linear", "forest"], default="linear")
    p.add_argument("--sample-index", type=int, default=0)
    _add_budget_flags(p, k1_default=200, k2_default=400)
    p.add_argument("--out", default="experiment_out")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("fit-model", help="fit and save a model JSON")
    p.add_argument("kind", choices=["linear", "forest"])
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--task", choices=["regression", "binary-probability"], default="regression")
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=_cmd_fit_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        max_threads()  # validate the env var before doing any work
        return args.func(args)
    except IngestionError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INGESTION
    except ShapdecError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
