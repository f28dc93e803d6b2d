"""Histogram estimators of interventional probabilities.

All estimators read a :class:`ProbModel`, a normalized table over named
discrete variables, built either from sample counts (:func:`fit`) or from an
exact joint (:meth:`ProbModel.from_joint`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from .dgp import Dataset, JointTable
from .errors import EmptyData, EmptyStratum, RankDeficient, Singular, ZeroTruth

PROXIMAL = "proximal"
BACKDOOR = "backdoor"
REGRESSION = "regression"
NAIVE = "naive"

DET_TOL = 1e-12
SIGMA_TOL = 1e-14
COND_CUTOFF = 30.0


@dataclass(frozen=True)
class ProbModel:
    names: tuple[str, ...]
    probs: np.ndarray
    n: Optional[int] = None  # sample size; None for an exact distribution

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != len(self.names):
            raise ValueError("one axis per variable")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "probs", p)

    @property
    def origin(self) -> str:
        return "exact" if self.n is None else f"empirical(n={self.n})"

    @classmethod
    def from_joint(cls, joint: JointTable, names: Optional[Sequence[str]] = None) -> "ProbModel":
        """Population model; by default keeps only the observed variables."""
        if names is None:
            names = [n for n in joint.names if n not in joint.latent]
        m = joint.marginal(names)
        return cls(m.names, m.probs / m.probs.sum())

    def marginal(self, keep: Sequence[str]) -> np.ndarray:
        """Mass over ``keep`` with axes in the given order."""
        keep = list(keep)
        for k in keep:
            if k not in self.names:
                raise KeyError(k)
        drop = tuple(i for i, n in enumerate(self.names) if n not in keep)
        p = self.probs.sum(axis=drop) if drop else self.probs
        remaining = [n for n in self.names if n in keep]
        return np.moveaxis(p, [remaining.index(k) for k in keep], list(range(len(keep))))


def fit(data: Dataset, columns: Optional[Sequence[str]] = None) -> ProbModel:
    """Normalized frequency table of the observed columns (latent ignored)."""
    if data.n == 0:
        raise EmptyData("dataset has no rows")
    if columns is None:
        columns = data.observed_columns
        for c in ("X", "Y", "Z", "W"):
            if c not in columns:
                raise KeyError(c)
    codes = np.zeros(data.n, dtype=np.int64)
    for c in columns:
        codes = codes * 2 + data.column(c)
    counts = np.bincount(codes, minlength=2 ** len(columns)).astype(float)
    return ProbModel(tuple(columns), (counts / data.n).reshape((2,) * len(columns)), data.n)


@dataclass(frozen=True)
class CondMatrix:
    """``m[w, z] = P(W=w | Z=z, X=x)`` for one treatment arm (column-stochastic)."""

    x: int
    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("P(W | Z, x) must be square")
        if not np.allclose(m.sum(axis=0), 1.0, atol=1e-10):
            raise ValueError("columns must sum to 1")
        object.__setattr__(self, "m", m)


def cond_matrix(model: ProbModel, x: int, names=("X", "Z", "W")) -> CondMatrix:
    xn, zn, wn = names
    pxzw = model.marginal([xn, zn, wn])[x]  # [z, w]
    pzx = pxzw.sum(axis=1)
    for z, mass in enumerate(pzx):
        if mass <= 0:
            raise EmptyStratum({zn: z, xn: x})
    return CondMatrix(x, (pxzw / pzx[:, None]).T)


def condition_number(c: Union[CondMatrix, np.ndarray]) -> float:
    m = c.m if isinstance(c, CondMatrix) else np.asarray(c, dtype=float)
    s = np.linalg.svd(m, compute_uv=False)
    if s[-1] <= SIGMA_TOL * max(1.0, s[0]):
        return math.inf
    return float(s[0] / s[-1])


def _solve_right(row: np.ndarray, m: np.ndarray, x: int) -> np.ndarray:
    """``row @ inv(m)``."""
    if m.shape == (2, 2):
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) <= DET_TOL:
            raise Singular(x, f"determinant {det:.3g}")
        adj = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
        return row @ adj / det
    try:
        sol = np.linalg.solve(m.T, row)
    except np.linalg.LinAlgError as exc:
        raise Singular(x, str(exc)) from None
    if not np.isfinite(sol).all():
        raise Singular(x, "non-finite solution")
    return sol


@dataclass(frozen=True)
class EstimateReport:
    method: str
    p_do: dict
    condition_numbers: dict = field(default_factory=dict)
    invertible: bool = True
    warnings: tuple[str, ...] = ()
    ci: Optional[tuple[float, float]] = None
    stderr: Optional[float] = None

    @property
    def ate(self) -> float:
        return self.p_do[1] - self.p_do[0]

    @property
    def max_condition_number(self) -> Optional[float]:
        if not self.condition_numbers:
            return None
        return max(self.condition_numbers.values())

    def to_record(self) -> dict:
        rec = {
            "method": self.method,
            "p_do_0": self.p_do.get(0),
            "p_do_1": self.p_do.get(1),
            "ate": self.ate,
            "cond_x0": self.condition_numbers.get(0),
            "cond_x1": self.condition_numbers.get(1),
            "invertible": self.invertible,
            "warnings": ";".join(self.warnings),
        }
        if self.ci is not None:
            rec["ci_low"], rec["ci_high"] = self.ci
        return rec


def _range_warnings(p_do: dict) -> tuple[str, ...]:
    return tuple(f"p_do_{x}_out_of_range" for x, p in p_do.items() if not 0.0 <= p <= 1.0)


def proximal_g(model: ProbModel, y: int = 1, names=("X", "Y", "Z", "W"),
               cond_cutoff: float = COND_CUTOFF) -> EstimateReport:
    """P(y | do(x)) = P(y | x, Z) P(W | Z, x)^-1 P(W) for both arms.

    Raises :class:`Singular` when P(W | Z, x) cannot be inverted. Estimates
    are not clipped; out-of-range values are flagged in ``warnings``.
    """
    xn, yn, zn, wn = names
    pxyz = model.marginal([xn, yn, zn])
    pw = model.marginal([wn])
    p_do, conds = {}, {}
    for x in (0, 1):
        cm = cond_matrix(model, x, (xn, zn, wn))
        conds[x] = condition_number(cm)
        pxz = pxyz[x].sum(axis=0)
        row = pxyz[x, y] / pxz
        p_do[x] = float(_solve_right(row, cm.m, x) @ pw)
    warnings = _range_warnings(p_do)
    if max(conds.values()) > cond_cutoff:
        warnings += ("ill_conditioned",)
    return EstimateReport(PROXIMAL, p_do, conds, True, warnings)


def backdoor_g(model: ProbModel, adjust: Sequence[str] = (), y: int = 1,
               x_name: str = "X", y_name: str = "Y") -> EstimateReport:
    """P(y | do(x)) = sum_a P(y | x, a) P(a); with no adjustment this is the naive contrast."""
    adjust = list(adjust)
    p = model.marginal([x_name, y_name, *adjust])
    pa = p.sum(axis=(0, 1))
    p_do = {}
    for x in (0, 1):
        pxa = p[x].sum(axis=0)
        if (pxa <= 0).any():
            cell = np.argwhere(pxa <= 0)[0]
            raise EmptyStratum({x_name: x, **dict(zip(adjust, map(int, cell)))})
        p_do[x] = float((p[x, y] / pxa * pa).sum())
    return EstimateReport(BACKDOOR if adjust else NAIVE, p_do, warnings=_range_warnings(p_do))


def _ols(design: np.ndarray, target: np.ndarray, weights: Optional[np.ndarray] = None):
    if weights is None:
        weights = np.ones(len(target))
    xtw = design.T * weights
    xtx = xtw @ design
    if np.linalg.matrix_rank(xtx) < design.shape[1]:
        raise RankDeficient("design matrix is not full rank")
    beta = np.linalg.solve(xtx, xtw @ target)
    return beta, xtx


def regression_ate(data: Union[Dataset, ProbModel], covariates: Sequence[str] = (),
                   x_name: str = "X", y_name: str = "Y", level: float = 0.95) -> EstimateReport:
    """Linear probability model: OLS of Y on intercept, X and covariates.

    The X coefficient is the ATE. For a :class:`Dataset` the report carries a
    ``level`` confidence interval from homoskedastic standard errors; for an
    exact :class:`ProbModel` the population least-squares fit is returned
    without an interval.
    """
    names = [x_name, *covariates]
    if isinstance(data, ProbModel):
        p = data.marginal([y_name, *names]).reshape(-1)
        grid = np.array(np.unravel_index(np.arange(p.size), (2,) * (len(names) + 1))).T
        design = np.column_stack([np.ones(len(grid)), grid[:, 1:]])
        beta, _ = _ols(design, grid[:, 0].astype(float), p)
        means = p @ design
        ate = float(beta[1])
        ci = stderr = None
    else:
        if data.n == 0:
            raise EmptyData("dataset has no rows")
        design = np.column_stack([np.ones(data.n)] + [data.column(c).astype(float) for c in names])
        target = data.column(y_name).astype(float)
        beta, xtx = _ols(design, target)
        means = design.mean(axis=0)
        dof = data.n - design.shape[1]
        if dof <= 0:
            raise RankDeficient("not enough rows for the number of regressors")
        resid = target - design @ beta
        sigma2 = resid @ resid / dof
        cov = sigma2 * np.linalg.inv(xtx)
        ate = float(beta[1])
        stderr = float(math.sqrt(cov[1, 1]))
        half = stats.t.ppf(0.5 + level / 2, dof) * stderr
        ci = (ate - half, ate + half)
    # fitted mean with X set to each arm, covariates at their sample means
    base = float(beta @ means - beta[1] * means[1])
    p_do = {0: base, 1: base + ate}
    return EstimateReport(REGRESSION, p_do, warnings=_range_warnings(p_do), ci=ci, stderr=stderr)


def relative_bias(estimate: float, truth: float) -> float:
    if truth == 0:
        raise ZeroTruth("relative bias undefined for a zero true effect")
    return (estimate - truth) / truth
