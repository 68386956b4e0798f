"""Rank statistics: Spearman correlation and partial-correlation graphs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import IngestionError, SingularityError

_JITTER_ATTEMPTS = 10


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(self.names), len(self.names)):
            raise IngestionError("matrix shape does not match names")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "names", tuple(self.names))

    def value(self, a: str, b: str) -> float:
        i, j = self.names.index(a), self.names.index(b)
        return float(self.matrix[i, j])


def spearman(x, y) -> float:
    """Pearson correlation of mid-ranks (ties get average ranks)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise IngestionError("need two equal-length vectors with >= 3 entries")
    rx = rankdata(x)
    ry = rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise IngestionError("rank variance is zero; correlation undefined")
    return float(np.corrcoef(rx, ry)[0, 1])


def partial_correlation_graph(columns, names) -> CorrelationMatrix:
    """Partial rank correlations via the precision matrix of rank data.

    Every column is rank-transformed and standardized; the inverse of the
    resulting correlation matrix (jitter-regularized when needed) gives
    rho_{ij.rest} = -P_ij / sqrt(P_ii P_jj).
    """
    cols = np.asarray(columns, dtype=float)
    if cols.ndim != 2 or cols.shape[1] != len(names):
        raise IngestionError("columns must be an n x p matrix matching names")
    n, p = cols.shape
    if n < p + 2:
        raise IngestionError(f"need at least p+2={p + 2} rows, got {n}")
    ranks = np.column_stack([rankdata(cols[:, j]) for j in range(p)])
    if np.any(np.ptp(ranks, axis=0) == 0):
        raise IngestionError("a column has zero rank variance")
    ranks = (ranks - ranks.mean(axis=0)) / ranks.std(axis=0)
    corr = np.corrcoef(ranks, rowvar=False)
    eps = 1e-9
    precision = None
    target = corr
    for _ in range(_JITTER_ATTEMPTS + 1):
        try:
            precision = np.linalg.inv(target)
            break
        except np.linalg.LinAlgError:
            target = corr + eps * np.eye(p)
            eps *= 2.0
    if precision is None:
        raise SingularityError("rank covariance stayed singular after jitter")
    d = np.sqrt(np.diag(precision))
    partial = -precision / np.outer(d, d)
    partial = np.clip(0.5 * (partial + partial.T), -1.0, 1.0)
    np.fill_diagonal(partial, 1.0)
    return CorrelationMatrix(tuple(names), partial)


def to_dot(graph: CorrelationMatrix, threshold: float = 0.05) -> str:
    """Render the graph as DOT: labels carry the rounded correlation, pen
    width scales linearly with |rho|, red for positive and blue for
    negative edges."""
    lines = ["graph partial_correlations {", "  layout=neato;"]
    for name in graph.names:
        lines.append(f'  "{name}";')
    p = len(graph.names)
    for i in range(p):
        for j in range(i + 1, p):
            rho = float(graph.matrix[i, j])
            if abs(rho) < threshold:
                continue
            color = "red" if rho > 0 else "blue"
            width = max(0.1, 2.0 * abs(rho))
            lines.append(
                f'  "{graph.names[i]}" -- "{graph.names[j]}" '
                f'[label="{rho:.2f}", color={color}, penwidth={width:.2f}];'
            )
    lines.append("}")
    return "\n".join(lines) + "\n"
