"""Closed-form abundance estimators and analytic model expectations.

All rates are per hook and per minute of soak time. The shared building
block is the overall pressure on hooks, ``log(N / N_baited) / S``, split
across species groups by the observed catch composition. Degenerate
inputs raise typed errors instead of returning NaN.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import (
    DataValidationError,
    DegenerateDataError,
    HeterogeneousDataError,
    SaturationError,
)
from .likelihoods import (
    MemModel,
    MemParams,
    SemParams,
    SemVariant,
    cell_probabilities,
    mem_loglik,
    sem_loglik,
    sem_residuals,
)
from .records import Dataset, PooledCounts


class Method(str, Enum):
    CPUE = "cpue"
    HOVGARD = "hovgard"
    MEM1 = "mem1"
    MEM2 = "mem2"
    MEM_REGULAR = "regular"
    SEM1 = "sem1"
    SEM2 = "sem2"


@dataclass(frozen=True)
class EstimateResult:
    """A fitted abundance index with its companions.

    ``lambda_target`` is the relative abundance index of interest;
    ``p_target``/``p_nontarget`` are escape probabilities (None when the
    data leave them undefined); ``alpha``/``beta`` are the identifiable
    catch shares; ``covariance`` is a 3x3 matrix over (lambda_target,
    lambda_nontarget, p) when one has been attached.
    """

    method: Method
    lambda_target: float
    lambda_nontarget: float | None = None
    lambda_total: float | None = None
    p_target: float | None = None
    p_nontarget: float | None = None
    lambda_empty: float | None = None
    sigma2: float | None = None
    alpha: float | None = None
    beta: float | None = None
    loglik_max: float | None = None
    aic: float | None = None
    covariance: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.lambda_target is not None and self.lambda_target < 0:
            raise ValueError("lambda_target must be >= 0")
        if self.lambda_total is not None:
            parts = (self.lambda_target or 0.0) + (self.lambda_nontarget or 0.0)
            parts += self.lambda_empty or 0.0
            if not math.isclose(self.lambda_total, parts, rel_tol=1e-9, abs_tol=1e-300):
                raise ValueError("lambda_total must equal the sum of its components")
        for p in (self.p_target, self.p_nontarget):
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError("escape probabilities must lie in [0, 1]")
        if self.alpha is not None and self.beta is not None:
            if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta > 1.0 + 1e-12:
                raise ValueError("alpha, beta must be >= 0 with alpha + beta <= 1")

    def to_dict(self) -> dict:
        out = {
            "method": self.method.value,
            "lambda_target": self.lambda_target,
            "lambda_nontarget": self.lambda_nontarget,
            "lambda_total": self.lambda_total,
            "p_target": self.p_target,
            "p_nontarget": self.p_nontarget,
            "lambda_empty": self.lambda_empty,
            "sigma2": self.sigma2,
            "alpha": self.alpha,
            "beta": self.beta,
            "loglik_max": self.loglik_max,
            "aic": self.aic,
        }
        if self.covariance is not None:
            out["covariance"] = [list(map(float, row)) for row in self.covariance]
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_kv_text(self) -> str:
        """Flat ``key value`` lines, one per defined scalar field."""
        lines = []
        for key, value in self.to_dict().items():
            if value is None or key == "covariance":
                continue
            lines.append(f"{key} {value}")
        return "\n".join(lines)

    def with_covariance(self, covariance: np.ndarray) -> "EstimateResult":
        return replace(self, covariance=covariance)


def cpue(dataset: Dataset) -> float:
    """Target catch per hook-minute: total catch over total hook-minutes.

    With several sets this weights each set by its hook-minutes, which is
    what a single pooled count of successes over trials gives; a plain
    average of per-set ratios would overweight small sets.
    """
    if len(dataset) == 0:
        raise DataValidationError("cannot compute an index from an empty dataset")
    hook_minutes = sum(r.soak_minutes * r.n_effective for r in dataset)
    if hook_minutes <= 0:
        raise DataValidationError("no hook-minutes of effort in dataset")
    return sum(r.n_target for r in dataset) / hook_minutes


def hovgard_lambda(pooled: PooledCounts) -> float:
    """Overall pressure on hooks: log(N / N_baited) / S.

    Returns 0 when every hook came back baited (nothing touched the gear);
    raises :class:`SaturationError` when no hook came back baited, since
    the rate is then unbounded.
    """
    if pooled.n_baited_total == 0:
        raise SaturationError("all hooks stripped: overall rate is unbounded")
    return math.log(pooled.n_hooks_total / pooled.n_baited_total) / pooled.soak_minutes


def _check_not_degenerate(pooled: PooledCounts) -> None:
    if pooled.n_baited_total == 0:
        raise SaturationError("all hooks stripped: overall rate is unbounded")
    if pooled.n_baited_total == pooled.n_hooks_total:
        raise DegenerateDataError("no hook was touched: catch-share split is undefined")


def _pooled_loglik(params: MemParams, pooled: PooledCounts) -> float:
    """Log-likelihood of the pooled counts treated as one multinomial draw."""
    from .records import SetRecord

    rec = SetRecord(
        set_id="<pooled>",
        n_hooks=pooled.n_hooks_total,
        n_baited=pooled.n_baited_total,
        n_target=pooled.n_target_total,
        n_nontarget=pooled.n_nontarget_total,
        n_empty=pooled.n_empty_total,
        soak_minutes=pooled.soak_minutes,
    )
    return mem_loglik(params, Dataset((rec,)))


def fit_mem1(pooled: PooledCounts) -> EstimateResult:
    """Fit the variant where only non-target fish escape.

    The overall rate splits by the composition of unbaited hooks, with
    empty hooks attributed to the non-target group; the non-target escape
    probability is the empty share of that group. When the group is empty
    the escape probability is undefined and reported as None.
    """
    _check_not_degenerate(pooled)
    lam = hovgard_lambda(pooled)
    unbaited = pooled.n_unbaited_total
    lambda_t = pooled.n_target_total / unbaited * lam
    lambda_nt = (pooled.n_nontarget_total + pooled.n_empty_total) / unbaited * lam
    denom = pooled.n_empty_total + pooled.n_nontarget_total
    p_nt = pooled.n_empty_total / denom if denom > 0 else None
    params = MemParams(MemModel.MEM1, lambda_t, lambda_nt, 0.0, p_nt or 0.0)
    loglik = _pooled_loglik(params, pooled)
    return EstimateResult(
        method=Method.MEM1,
        lambda_target=lambda_t,
        lambda_nontarget=lambda_nt,
        lambda_total=lambda_t + lambda_nt,
        p_target=0.0,
        p_nontarget=p_nt,
        alpha=pooled.n_target_total / unbaited,
        beta=pooled.n_nontarget_total / unbaited,
        loglik_max=loglik,
        aic=2 * 3 - 2 * loglik,
    )


def fit_mem2(pooled: PooledCounts) -> EstimateResult:
    """Fit the variant where both groups share one escape probability.

    Empty hooks are spread over the groups in proportion to their catch,
    so the rate split uses catches only and the shared escape probability
    is the empty share of all unbaited hooks.
    """
    _check_not_degenerate(pooled)
    caught = pooled.n_target_total + pooled.n_nontarget_total
    if caught == 0:
        raise DegenerateDataError("every unbaited hook is empty: rate split is undefined")
    lam = hovgard_lambda(pooled)
    lambda_t = pooled.n_target_total / caught * lam
    lambda_nt = pooled.n_nontarget_total / caught * lam
    p = pooled.n_empty_total / (pooled.n_empty_total + caught)
    params = MemParams(MemModel.MEM2, lambda_t, lambda_nt, p, p)
    loglik = _pooled_loglik(params, pooled)
    unbaited = pooled.n_unbaited_total
    return EstimateResult(
        method=Method.MEM2,
        lambda_target=lambda_t,
        lambda_nontarget=lambda_nt,
        lambda_total=lambda_t + lambda_nt,
        p_target=p,
        p_nontarget=p,
        alpha=pooled.n_target_total / unbaited,
        beta=pooled.n_nontarget_total / unbaited,
        loglik_max=loglik,
        aic=2 * 3 - 2 * loglik,
    )


def fit_regular(pooled: PooledCounts) -> EstimateResult:
    """Fit the identifiable three-parameter core of the multinomial model.

    ``alpha`` and ``beta`` are the target and non-target shares of the
    unbaited hooks; no attempt is made to split the empty share between
    escape sources, which is exactly the information the data lack.
    """
    _check_not_degenerate(pooled)
    lam = hovgard_lambda(pooled)
    unbaited = pooled.n_unbaited_total
    alpha = pooled.n_target_total / unbaited
    beta = pooled.n_nontarget_total / unbaited
    params = MemParams(MemModel.REGULAR, lambda_total=lam, alpha=alpha, beta=beta)
    loglik = _pooled_loglik(params, pooled)
    return EstimateResult(
        method=Method.MEM_REGULAR,
        lambda_target=alpha * lam,
        lambda_nontarget=(1.0 - alpha) * lam,
        lambda_total=lam,
        alpha=alpha,
        beta=beta,
        loglik_max=loglik,
        aic=2 * 3 - 2 * loglik,
    )


def fit_sem_closed(dataset: Dataset, variant: SemVariant = SemVariant.SEM1) -> EstimateResult:
    """Fit the Gaussian-residual model when all sets share S and N exactly.

    The rate estimates match the multinomial ones for the target species;
    the residual variance needs at least two sets and is otherwise
    reported as None. Heterogeneous soak times or hook counts raise
    :class:`HeterogeneousDataError` (use the numeric fit instead).
    """
    variant = SemVariant(variant)
    if len(dataset) == 0:
        raise DataValidationError("cannot fit an empty dataset")
    soaks = {r.soak_minutes for r in dataset}
    hooks = {r.n_effective for r in dataset}
    if len(soaks) > 1 or len(hooks) > 1:
        raise HeterogeneousDataError(
            "closed-form fit needs identical soak times and hook counts; use the numeric fit"
        )
    pooled = PooledCounts(
        n_hooks_total=sum(r.n_effective for r in dataset),
        n_baited_total=sum(r.n_baited for r in dataset),
        n_target_total=sum(r.n_target for r in dataset),
        n_nontarget_total=sum(r.n_nontarget for r in dataset),
        n_empty_total=sum(r.n_empty for r in dataset),
        soak_minutes=next(iter(soaks)),
        n_sets=len(dataset),
    )
    _check_not_degenerate(pooled)
    lam = hovgard_lambda(pooled)
    unbaited = pooled.n_unbaited_total
    lambda_t = pooled.n_target_total / unbaited * lam
    if variant is SemVariant.SEM1:
        lambda_nt = (pooled.n_nontarget_total + pooled.n_empty_total) / unbaited * lam
        lambda_e = None
        groups = 2
        method = Method.SEM1
    else:
        lambda_nt = pooled.n_nontarget_total / unbaited * lam
        lambda_e = pooled.n_empty_total / unbaited * lam
        groups = 3
        method = Method.SEM2

    n_sets = len(dataset)
    sigma2 = None
    loglik = None
    aic = None
    if n_sets >= 2:
        params = SemParams(lambda_t, lambda_nt, sigma2=1.0, lambda_empty=lambda_e or 0.0)
        ss = float(np.sum(sem_residuals(params, dataset, variant) ** 2))
        sigma2 = ss / (groups * n_sets)
        if sigma2 > 0:
            loglik = sem_loglik(replace(params, sigma2=sigma2), dataset, variant)
            k = groups + 1  # rates plus the residual variance
            aic = 2 * k - 2 * loglik
    return EstimateResult(
        method=method,
        lambda_target=lambda_t,
        lambda_nontarget=lambda_nt,
        lambda_total=lambda_t + lambda_nt + (lambda_e or 0.0),
        lambda_empty=lambda_e,
        sigma2=sigma2,
        loglik_max=loglik,
        aic=aic,
    )


def expected_counts(
    lambda_target: float,
    lambda_nontarget: float,
    p_target: float,
    p_nontarget: float,
    n_hooks: int,
    soak_minutes: float,
) -> tuple[float, float, float, float]:
    """Expected (baited, target, non-target, empty) counts for one set."""
    if min(lambda_target, lambda_nontarget) < 0:
        raise ValueError("rates must be >= 0")
    if not (0 <= p_target <= 1 and 0 <= p_nontarget <= 1):
        raise ValueError("escape probabilities must lie in [0, 1]")
    probs = cell_probabilities(lambda_target, lambda_nontarget, p_target, p_nontarget, soak_minutes)
    return tuple(n_hooks * p for p in probs)


def expected_cpue(lambda_target: float, lambda_total: float, soak_minutes: float) -> float:
    """Long-run value of the raw catch-per-hook-minute index.

    Equals ``lambda_target * (1 - exp(-lambda_total * S)) / (lambda_total * S)``,
    which tends to ``lambda_target`` as the overall pressure vanishes; the
    shortfall from ``lambda_target`` is the bias competition induces in
    the raw index.
    """
    if lambda_total < lambda_target or lambda_target < 0:
        raise ValueError("need lambda_total >= lambda_target >= 0")
    if soak_minutes <= 0:
        raise ValueError("soak_minutes must be positive")
    x = lambda_total * soak_minutes
    if x == 0.0:
        return lambda_target
    return lambda_target * (-math.expm1(-x)) / x


# Vectorized pooled-count estimators used by the bootstrap fast path and
# the simulation study. Inputs are arrays of pooled totals, one entry per
# replicate; degenerate replicates yield NaN rather than raising.

def _vec_hovgard(nb, n, soak):
    nb = np.asarray(nb, dtype=float)
    n = np.asarray(n, dtype=float)
    out = np.full(nb.shape, np.nan)
    ok = (nb > 0) & (n > 0)
    out[ok] = np.log(n[ok] / nb[ok]) / soak
    return out


def _vec_lambda_target(method: Method, nb, nt, nnt, ne, n, soak):
    """Per-replicate target-rate estimates from pooled totals."""
    nb = np.asarray(nb, dtype=float)
    nt = np.asarray(nt, dtype=float)
    nnt = np.asarray(nnt, dtype=float)
    ne = np.asarray(ne, dtype=float)
    n = np.asarray(n, dtype=float)
    if method is Method.CPUE:
        return nt / (n * soak)
    lam = _vec_hovgard(nb, n, soak)
    if method is Method.HOVGARD:
        return lam
    unbaited = n - nb
    with np.errstate(invalid="ignore", divide="ignore"):
        if method in (Method.MEM1, Method.SEM1, Method.SEM2, Method.MEM_REGULAR):
            out = np.where(unbaited > 0, nt / np.where(unbaited > 0, unbaited, 1.0) * lam, np.nan)
        elif method is Method.MEM2:
            caught = nt + nnt
            out = np.where(caught > 0, nt / np.where(caught > 0, caught, 1.0) * lam, np.nan)
        else:
            raise ValueError(f"unsupported method {method}")
    return out


def _vec_estimates(method: Method, nb, nt, nnt, ne, n, soak):
    """Per-replicate (lambda_t, lambda_nt, p) triples from pooled totals."""
    nb = np.asarray(nb, dtype=float)
    nt = np.asarray(nt, dtype=float)
    nnt = np.asarray(nnt, dtype=float)
    ne = np.asarray(ne, dtype=float)
    n = np.asarray(n, dtype=float)
    lam = _vec_hovgard(nb, n, soak)
    unbaited = n - nb
    bad = ~np.isfinite(lam) | (unbaited <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        if method in (Method.MEM1, Method.SEM1):
            lt = nt / unbaited * lam
            lnt = (nnt + ne) / unbaited * lam
            p = np.where(nnt + ne > 0, ne / (nnt + ne), np.nan)
        elif method is Method.MEM2:
            caught = nt + nnt
            bad |= caught <= 0
            lt = nt / caught * lam
            lnt = nnt / caught * lam
            p = ne / unbaited
        else:
            raise ValueError(f"unsupported method {method}")
    lt = np.where(bad, np.nan, lt)
    lnt = np.where(bad, np.nan, lnt)
    p = np.where(bad, np.nan, p)
    return lt, lnt, p
