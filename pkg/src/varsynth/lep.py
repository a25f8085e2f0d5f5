"""Localized linear projections between embedding spaces.

A projection ``W`` is fitted by ridge-regularized least squares on a small
set of anchor pairs, then applied to row vectors as ``v @ W``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Above this condition number the normal-equation matrix is treated as singular.
MAX_CONDITION = 1e12
DEFAULT_RIDGE_SCALE = 1e-6


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class AnchorPairs:
    source: np.ndarray  # (p, d)
    target: np.ndarray  # (p, d_out)

    def __post_init__(self):
        src = np.atleast_2d(np.asarray(self.source, dtype=np.float64))
        tgt = np.atleast_2d(np.asarray(self.target, dtype=np.float64))
        if src.shape[0] != tgt.shape[0]:
            raise ValueError(f"{src.shape[0]} source rows vs {tgt.shape[0]} target rows")
        if src.shape[0] < 1 or src.shape[1] < 1:
            raise ValueError("need at least one anchor pair of positive dimension")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)

    @property
    def p(self) -> int:
        return self.source.shape[0]


@dataclass(frozen=True)
class ProjectionMatrix:
    W: np.ndarray
    residual_norm: float
    ridge: float


def default_ridge(source: np.ndarray) -> float:
    """``1e-6 * trace(F^T F) / d``; keeps rank-deficient local systems solvable."""
    d = source.shape[1]
    return DEFAULT_RIDGE_SCALE * float(np.sum(source * source)) / d


def fit(pairs: AnchorPairs, ridge: float | None = None) -> ProjectionMatrix:
    """Solve ``(F^T F + ridge I) W = F^T E`` for ``W``.

    ``ridge=None`` selects :func:`default_ridge`. Raises
    :class:`SingularSystemError` when the system is too ill-conditioned,
    in which case a larger ridge is needed.
    """
    F, E = pairs.source, pairs.target
    if ridge is None:
        ridge = default_ridge(F)
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    d = F.shape[1]
    gram = F.T @ F
    if ridge:
        gram[np.diag_indices(d)] += ridge
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystemError(
            f"normal equations are singular (condition {cond:.3g} with ridge {ridge:g}, "
            f"{pairs.p} anchors in {d} dimensions); use a larger ridge"
        )
    W = np.linalg.solve(gram, F.T @ E)
    residual = float(np.linalg.norm(F @ W - E))
    return ProjectionMatrix(W=W, residual_norm=residual, ridge=float(ridge))


def project(v, proj: ProjectionMatrix) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != proj.W.shape[0]:
        raise ValueError(f"vector dimension {v.shape[-1]} != projection input {proj.W.shape[0]}")
    return v @ proj.W
