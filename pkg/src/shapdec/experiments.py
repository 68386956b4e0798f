"""Scripted studies: toy oracle check, correlation sweep, imputation
benchmark, and the fire-dataset combined explanation.

Each run returns a plain-dict result and, when an output directory is
given, writes results.json plus SVG/DOT figures. Runs are bit-for-bit
reproducible from (inputs, seed, budgets).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Coalition, FeatureMatrix, RngStream, as_vector
from .distributions import (
    CopulaSampler,
    DiscreteJoint,
    DiscreteSampler,
    GaussianModel,
    GaussianSampler,
    MarginalSampler,
    fit_copula,
    fit_gaussian,
)
from .engine import (
    ExactValueFunction,
    conditional_value_function,
    decompose,
    exact_decomposition,
    interventional_parts,
    interventional_value_function,
    kernel_shap,
    shapley_residuals,
)
from .errors import IngestionError
from .models import (
    CallableModel,
    LogOddsModel,
    fit_forest,
    fit_ols,
    toy_risk_model,
)
from .stats import partial_correlation_graph, spearman, to_dot
from .viz import Band, ForceFeature, ForcePlotSpec, Series, render_force_plot, render_line_chart

SELECTIONS = ("interventional-shap", "interventional-part", "conditional-shap")
IMPUTATIONS = ("marginal-mean", "conditional-mean")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def toy_joint() -> DiscreteJoint:
    """Two fair binary features agreeing with probability 0.7."""
    support = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    return DiscreteJoint(support, np.array([0.35, 0.15, 0.15, 0.35]))


def _decomposition_dict(dec, names):
    return dec.to_json_dict(names)


def run_toy(k1: int = 10_000, k2: int = 10_000, seed: int = 0, out_dir=None) -> dict:
    """Explain x=(1,1) of the two-binary-feature toy problem with both the
    exact oracle and the sampled pipeline."""
    joint = toy_joint()
    model = toy_risk_model()
    x = np.array([1.0, 1.0])
    names = ["X1", "X2"]
    exact = exact_decomposition(model, joint, x)
    sampled = decompose(model, DiscreteSampler(joint), x, k1, k2, seed)
    result = {
        "exact": _decomposition_dict(exact, names),
        "sampled": _decomposition_dict(sampled, names),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "results.json", result)
        spec = ForcePlotSpec(
            base=exact.base,
            features=tuple(
                ForceFeature(names[i], x[i], exact.phi_int[i], exact.phi_dep[i])
                for i in range(2)
            ),
        )
        (out_dir / "force.svg").write_text(render_force_plot(spec))
    return result


@dataclass(frozen=True)
class CorrelationStudyRow:
    alpha: float
    estimated_phi_dep: float
    analytic_phi_dep: float
    estimated_residual_norm: float
    analytic_residual_norm: float


def interaction_model(a12: float) -> CallableModel:
    return CallableModel(
        lambda rows: rows[:, 0] + rows[:, 1] + a12 * rows[:, 0] * rows[:, 1],
        2,
        name=f"interaction(a12={a12:g})",
    )


def exact_interaction_value_function(a12: float, alpha: float, x) -> ExactValueFunction:
    """Closed-form conditional value function of the interaction model
    under the standard bivariate Gaussian with correlation alpha."""
    x = as_vector(x)

    def v(coalition: Coalition) -> float:
        if coalition.is_full():
            return x[0] + x[1] + a12 * x[0] * x[1]
        if coalition.is_empty():
            return a12 * alpha
        (i,) = coalition.members
        xi = x[i]
        return xi + alpha * xi + a12 * xi * alpha * xi

    return ExactValueFunction(v, 2)


def run_correlation_study(
    a12: float = 2.0,
    alphas=(0.0, 0.25, 0.5, 0.75),
    k1: int = 20_000,
    k2: int = 40_000,
    seed: int = 0,
    out_dir=None,
) -> dict:
    """Estimated vs analytic dependency attributions as the correlation
    between the two Gaussian features sweeps over ``alphas``."""
    x = np.array([1.0, 1.0])
    model = interaction_model(a12)
    rows = []
    for j, alpha in enumerate(alphas):
        if not -0.99 < alpha < 0.99:
            raise IngestionError(f"alpha {alpha} outside (-0.99, 0.99)")
        sampler = GaussianSampler(
            GaussianModel(np.zeros(2), np.array([[1.0, alpha], [alpha, 1.0]]))
        )
        dec = decompose(model, sampler, x, k1, k2, seed + j)
        table = shapley_residuals(exact_interaction_value_function(a12, alpha, x), x)
        rows.append(
            CorrelationStudyRow(
                alpha=float(alpha),
                estimated_phi_dep=float(dec.phi_dep.mean()),
                analytic_phi_dep=0.5 * (1.0 + a12) * alpha,
                estimated_residual_norm=table.norm(0),
                analytic_residual_norm=math.sqrt(2.0)
                * abs(0.5 * a12 - (1.0 + 0.5 * a12) * alpha),
            )
        )
    result = {
        "a12": float(a12),
        "rows": [row.__dict__ for row in rows],
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "results.json", result)
        al = np.array([r.alpha for r in rows])
        chart = render_line_chart(
            [
                Series("dependent part (estimated)", al, [r.estimated_phi_dep for r in rows]),
                Series("dependent part (analytic)", al, [r.analytic_phi_dep for r in rows]),
                Series("residual norm (exact)", al, [r.estimated_residual_norm for r in rows]),
                Series("residual norm (analytic)", al, [r.analytic_residual_norm for r in rows]),
            ],
            x_label="correlation",
            y_label="dependency attribution",
        )
        (out_dir / "correlation.svg").write_text(chart)
    return result


@dataclass(frozen=True)
class ImputationCurve:
    method: str
    imputation: str
    values: np.ndarray  # length M+1; entry k is the mean change after k imputations

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v[0] != 0.0:
            raise IngestionError("imputation curve must start at zero")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _select_order(attribution: np.ndarray) -> np.ndarray:
    # ascending by value, ties broken by feature index
    return np.argsort(attribution, kind="stable")


def run_imputation_study(
    data: FeatureMatrix,
    target,
    model_kind: str = "linear",
    towns: int = 200,
    k1: int = 200,
    k2: int = 400,
    seed: int = 0,
    out_dir=None,
    forest_params: dict | None = None,
) -> dict:
    """Rank features by each attribution flavor, impute the most negative
    ones, and track the model-output change, averaged over random rows."""
    if towns > data.n_rows:
        raise IngestionError(f"towns={towns} exceeds n={data.n_rows}")
    y = np.asarray(target, dtype=float)
    if model_kind == "linear":
        model = fit_ols(data, y)
    elif model_kind == "forest":
        params = {"trees": 100, "max_depth": 6}
        params.update(forest_params or {})
        model = fit_forest(data, y, params, RngStream(seed, 77))
    else:
        raise IngestionError(f"unknown model kind {model_kind!r}")
    gauss = GaussianSampler(fit_gaussian(data))
    marginal = MarginalSampler(data)
    col_means = data.values.mean(axis=0)
    m = data.n_features
    root = RngStream(seed)
    gen = root.substream(0).generator()
    town_idx = np.sort(gen.choice(data.n_rows, size=towns, replace=False))

    changes = {
        (sel, imp): np.zeros((towns, m + 1)) for sel in SELECTIONS for imp in IMPUTATIONS
    }
    vf_int = interventional_value_function(model, marginal, k1)
    vf_cond = conditional_value_function(model, gauss, k1)
    for t, row_i in enumerate(town_idx):
        x = data.values[row_i]
        sub = root.substream(1000 + t)
        attributions = {
            "interventional-shap": kernel_shap(vf_int, x, sub.substream(1)).phi,
            "conditional-shap": kernel_shap(vf_cond, x, sub.substream(2)).phi,
            "interventional-part": interventional_parts(model, gauss, x, k2, sub.substream(3)),
        }
        rows = []
        slots = []
        for sel in SELECTIONS:
            order = _select_order(attributions[sel])
            for imp in IMPUTATIONS:
                for k in range(1, m + 1):
                    imputed = np.array(order[:k])
                    x_imp = x.copy()
                    if imp == "marginal-mean":
                        x_imp[imputed] = col_means[imputed]
                    else:
                        untouched = Coalition.from_indices(
                            [i for i in range(m) if i not in set(imputed)], m
                        )
                        cond = gauss.conditional_mean(untouched, x)
                        # conditional_mean orders columns by ascending index
                        pos = {j: c for c, j in enumerate(untouched.complement_members)}
                        x_imp[imputed] = cond[[pos[j] for j in imputed]]
                    rows.append(x_imp)
                    slots.append((sel, imp, k))
        rows.append(x)
        outputs = model.predict(np.array(rows))
        fx = outputs[-1]
        for out_val, (sel, imp, k) in zip(outputs[:-1], slots):
            changes[(sel, imp)][t, k] = out_val - fx

    curves = {
        key: ImputationCurve(key[0], key[1], arr.mean(axis=0))
        for key, arr in changes.items()
    }
    ks = np.arange(m + 1, dtype=float)
    diff_traces = {}
    for imp in IMPUTATIONS:
        base = changes[("conditional-shap", imp)]
        for sel in ("interventional-shap", "interventional-part"):
            d = changes[(sel, imp)] - base
            diff_traces[f"{sel}|{imp}"] = {
                "mean": d.mean(axis=0).tolist(),
                "towns": d[:10].tolist(),
            }
    result = {
        "model": model.describe(),
        "towns": int(towns),
        "curves": {
            f"{sel}|{imp}": curves[(sel, imp)].values.tolist()
            for sel in SELECTIONS
            for imp in IMPUTATIONS
        },
        "differences_vs_conditional": diff_traces,
        "meta": {"k1": int(k1), "k2": int(k2), "seed": int(seed)},
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "results.json", result)
        for imp in IMPUTATIONS:
            chart = render_line_chart(
                [Series(sel, ks, curves[(sel, imp)].values) for sel in SELECTIONS],
                x_label="features imputed",
                y_label="mean output change",
            )
            (out_dir / f"imputation_{imp}.svg").write_text(chart)
            overlays = []
            mean_series = []
            for sel in ("interventional-shap", "interventional-part"):
                d = diff_traces[f"{sel}|{imp}"]
                mean_series.append(Series(f"{sel} - conditional", ks, d["mean"]))
                overlays.extend(Series(sel, ks, town) for town in d["towns"])
            (out_dir / f"difference_{imp}.svg").write_text(
                render_line_chart(
                    mean_series,
                    x_label="features imputed",
                    y_label="per-town output change difference",
                    overlays=overlays,
                )
            )
        # mean +/- one standard deviation, marginal-mean variant
        sel = "interventional-shap"
        arr = changes[(sel, "marginal-mean")]
        band = Band(ks, arr.mean(axis=0) - arr.std(axis=0), arr.mean(axis=0) + arr.std(axis=0))
        (out_dir / "imputation_marginal-mean_std.svg").write_text(
            render_line_chart(
                [Series(sel, ks, arr.mean(axis=0))],
                x_label="features imputed",
                y_label="mean output change",
                band=band,
            )
        )
    return result


def _probability_axis():
    def to_prob(log_odds):
        return 1.0 / (1.0 + math.exp(-log_odds))

    def from_prob(p):
        p = min(max(p, 1e-9), 1 - 1e-9)
        return math.log(p / (1.0 - p))

    return ("probability", to_prob, from_prob)


def run_fire_study(
    data: FeatureMatrix,
    labels,
    k1: int = 200,
    k2: int = 400,
    seed: int = 0,
    sample_index: int = 0,
    out_dir=None,
    forest_params: dict | None = None,
) -> dict:
    """Binary forest on the fire features, explained on the log-odds scale
    with a Gaussian copula sampler; emits force plots, the feature/SHAP
    correlation table, and the partial-correlation graph."""
    labels = np.asarray(labels, dtype=float)
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise IngestionError("fire label must be binary 0/1")
    params = {"trees": 100, "max_depth": 6}
    params.update(forest_params or {})
    forest = fit_forest(data, labels, params, RngStream(seed, 99), task="binary-probability")
    model = LogOddsModel(forest)
    sampler = CopulaSampler(fit_copula(data))
    m = data.n_features
    n = data.n_rows
    phi_int = np.zeros((n, m))
    phi_dep = np.zeros((n, m))
    bases = np.zeros(n)
    for i in range(n):
        row_seed = (seed * 1_000_003 + i) % (1 << 63)
        dec = decompose(model, sampler, data.values[i], k1, k2, row_seed)
        phi_int[i] = dec.phi_int
        phi_dep[i] = dec.phi_dep
        bases[i] = dec.base
    corr_int = [spearman(data.values[:, j], phi_int[:, j]) for j in range(m)]
    corr_dep = [spearman(data.values[:, j], phi_dep[:, j]) for j in range(m)]
    log_out = model.predict(data.values)
    graph = partial_correlation_graph(
        np.column_stack([data.values, log_out]), list(data.names) + ["f"]
    )
    result = {
        "names": list(data.names),
        "spearman_phi_int": [float(c) for c in corr_int],
        "spearman_phi_dep": [float(c) for c in corr_dep],
        "base_mean": float(bases.mean()),
        "phi_int": phi_int.tolist(),
        "phi_dep": phi_dep.tolist(),
        "meta": {"k1": int(k1), "k2": int(k2), "seed": int(seed), "sample_index": int(sample_index)},
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "results.json", result)
        x = data.values[sample_index]
        spec = ForcePlotSpec(
            base=bases[sample_index],
            features=tuple(
                ForceFeature(data.names[j], x[j], phi_int[sample_index, j], phi_dep[sample_index, j])
                for j in range(m)
            ),
            secondary_axis=_probability_axis(),
        )
        (out_dir / "force_decomposition.svg").write_text(render_force_plot(spec))
        vf = interventional_value_function(model, MarginalSampler(data), k1)
        classic = kernel_shap(vf, x, RngStream(seed, 5))
        spec_classic = ForcePlotSpec(
            base=classic.base,
            features=tuple(
                ForceFeature(data.names[j], x[j], classic.phi[j], 0.0) for j in range(m)
            ),
            secondary_axis=_probability_axis(),
        )
        (out_dir / "force_classic.svg").write_text(render_force_plot(spec_classic))
        (out_dir / "graph.dot").write_text(to_dot(graph))
    return result
