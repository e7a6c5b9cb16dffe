"""Exact log-likelihood kernels for the hook-outcome models.

Every estimator, sampler and information-matrix check in the package runs
through these functions. Two model families are covered:

* the multinomial model, where a set's outcome vector
  (baited, target, non-target, empty) is multinomial with cell
  probabilities driven by exponential capture races and escape
  probabilities, and
* the Gaussian-residual model, where per-group catch totals scatter
  around their exponential-depletion expectation with constant variance.

The multinomial model is evaluated internally in its identifiable
(rate, target-share, nontarget-share) form; the constrained variants map
into it. All computations stay in log space with log-gamma factorials,
so hook counts up to ~1e6 are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .records import Dataset

NEG_INF = float("-inf")


class MemModel(str, Enum):
    """Variants of the multinomial hook-outcome model.

    FULL carries both escape probabilities (not identifiable on its own),
    MEM1 pins the target escape probability at zero, MEM2 shares a single
    escape probability across species, and REGULAR is the identifiable
    three-parameter core that all of them collapse onto.
    """

    FULL = "full"
    MEM1 = "mem1"
    MEM2 = "mem2"
    REGULAR = "regular"


class SemVariant(str, Enum):
    """How the Gaussian-residual model treats empty hooks."""

    SEM1 = "sem1"  # empties pooled with the non-target group
    SEM2 = "sem2"  # empties modelled as a third group with their own rate


@dataclass(frozen=True)
class MemParams:
    """Parameters of the multinomial model, tagged with their variant.

    For FULL/MEM1/MEM2 supply the per-hook-minute rates and escape
    probabilities; for REGULAR supply ``lambda_total`` together with the
    target and non-target shares ``alpha`` and ``beta`` (alpha + beta <= 1).
    """

    model: MemModel
    lambda_target: float = 0.0
    lambda_nontarget: float = 0.0
    p_target: float = 0.0
    p_nontarget: float = 0.0
    lambda_total: float | None = None
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.model is MemModel.REGULAR:
            if self.lambda_total is None or self.alpha is None or self.beta is None:
                raise ValueError("REGULAR parameters need lambda_total, alpha and beta")
            if self.lambda_total < 0:
                raise ValueError("lambda_total must be >= 0")
            if not (0.0 <= self.alpha and 0.0 <= self.beta and self.alpha + self.beta <= 1.0 + 1e-12):
                raise ValueError("alpha, beta must be >= 0 with alpha + beta <= 1")
            return
        if self.lambda_target < 0 or self.lambda_nontarget < 0:
            raise ValueError("rates must be >= 0")
        for p in (self.p_target, self.p_nontarget):
            if not 0.0 <= p <= 1.0:
                raise ValueError("escape probabilities must lie in [0, 1]")
        if self.model is MemModel.MEM1 and self.p_target != 0.0:
            raise ValueError("MEM1 fixes p_target at 0")
        if self.model is MemModel.MEM2 and self.p_target != self.p_nontarget:
            raise ValueError("MEM2 requires p_target == p_nontarget")

    def to_regular(self) -> tuple[float, float, float]:
        """Collapse onto the identifiable (lambda, alpha, beta) triple."""
        lam, alpha, beta, _ = self.to_canonical()
        return lam, alpha, beta

    def to_canonical(self) -> tuple[float, float, float, float]:
        """The identifiable triple plus the empty-cell share.

        The empty share is computed directly from the escape terms, not as
        ``1 - alpha - beta``, so it is exactly zero when nothing escapes.
        """
        if self.model is MemModel.REGULAR:
            gamma = max(1.0 - self.alpha - self.beta, 0.0)
            return float(self.lambda_total), float(self.alpha), float(self.beta), gamma
        lam = self.lambda_target + self.lambda_nontarget
        if lam == 0.0:
            return 0.0, 0.0, 0.0, 0.0
        alpha = self.lambda_target / lam * (1.0 - self.p_target)
        beta = self.lambda_nontarget / lam * (1.0 - self.p_nontarget)
        gamma = (self.lambda_target * self.p_target + self.lambda_nontarget * self.p_nontarget) / lam
        return lam, alpha, beta, gamma


@dataclass(frozen=True)
class SemParams:
    """Parameters of the Gaussian-residual model."""

    lambda_target: float
    lambda_nontarget: float
    sigma2: float
    lambda_empty: float = 0.0

    def __post_init__(self):
        if min(self.lambda_target, self.lambda_nontarget, self.lambda_empty) < 0:
            raise ValueError("rates must be >= 0")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")


def cell_probabilities(
    lambda_target: float,
    lambda_nontarget: float,
    p_target: float,
    p_nontarget: float,
    soak_minutes: float,
) -> tuple[float, float, float, float]:
    """Outcome probabilities (baited, target, non-target, empty) per hook.

    A hook stays baited if no fish arrives within the soak; otherwise the
    first arrival is target or non-target in proportion to the rates, and
    the hooked fish then escapes (leaving an empty hook) with its species'
    escape probability.
    """
    lam = lambda_target + lambda_nontarget
    if lam == 0.0:
        return 1.0, 0.0, 0.0, 0.0
    touched = -math.expm1(-lam * soak_minutes)
    baited = math.exp(-lam * soak_minutes)
    share_t = lambda_target / lam
    share_nt = lambda_nontarget / lam
    return (
        baited,
        touched * share_t * (1.0 - p_target),
        touched * share_nt * (1.0 - p_nontarget),
        touched * (share_t * p_target + share_nt * p_nontarget),
    )


def _log_multinomial_coeff(counts: Sequence[int]) -> float:
    total = sum(counts)
    return math.lgamma(total + 1) - sum(math.lgamma(c + 1) for c in counts)


def _count_times_log(count: int, prob: float) -> float:
    # 0 * log 0 is 0; a positive count on a zero cell kills the likelihood.
    if count == 0:
        return 0.0
    if prob <= 0.0:
        return NEG_INF
    return count * math.log(prob)


def _set_loglik_regular(
    nb: int,
    nt: int,
    nnt: int,
    ne: int,
    soak: float,
    lam: float,
    alpha: float,
    beta: float,
    gamma: float,
) -> float:
    n = nb + nt + nnt + ne
    coeff = _log_multinomial_coeff((nb, nt, nnt, ne))
    if lam == 0.0:
        if nt or nnt or ne:
            return NEG_INF
        return coeff  # all hooks baited with probability one
    log_baited = -lam * soak
    # log(1 - e^{-lam S}) without cancellation for small lam S
    log_touched = math.log(-math.expm1(-lam * soak))
    out = coeff + nb * log_baited + (nt + nnt + ne) * log_touched
    out += _count_times_log(nt, alpha)
    out += _count_times_log(nnt, beta)
    out += _count_times_log(ne, gamma)
    return out


def mem_loglik(params: MemParams, dataset: Dataset) -> float:
    """Exact log-likelihood of a dataset under the multinomial model.

    Sets are independent; each uses its own hook count and soak time.
    Multinomial coefficients are included, so values are absolute and
    comparable across models (AIC-ready). Returns ``-inf`` when a cell
    with zero probability holds a positive count.
    """
    lam, alpha, beta, gamma = params.to_canonical()
    if 1.0 - alpha - beta < -1e-12:
        raise ValueError("alpha + beta exceeds 1")
    total = 0.0
    for rec in dataset:
        total += _set_loglik_regular(
            rec.n_baited,
            rec.n_target,
            rec.n_nontarget,
            rec.n_empty,
            rec.soak_minutes,
            lam,
            alpha,
            beta,
            gamma,
        )
        if total == NEG_INF:
            return NEG_INF
    return total


def sem_expected_catch(
    lambda_r: float, lambda_all: float, n_hooks: int, soak: float
) -> float:
    """Expected catch of one group under exponential bait depletion."""
    if lambda_all == 0.0:
        return 0.0
    return lambda_r / lambda_all * n_hooks * -math.expm1(-lambda_all * soak)


def sem_residuals(params: SemParams, dataset: Dataset, variant: SemVariant) -> np.ndarray:
    """Per-set, per-group residuals of observed catch about its expectation."""
    variant = SemVariant(variant)
    if variant is SemVariant.SEM1:
        lam_all = params.lambda_target + params.lambda_nontarget
        groups = [
            (params.lambda_target, lambda r: r.n_target),
            (params.lambda_nontarget, lambda r: r.n_nontarget + r.n_empty),
        ]
    else:
        lam_all = params.lambda_target + params.lambda_nontarget + params.lambda_empty
        groups = [
            (params.lambda_target, lambda r: r.n_target),
            (params.lambda_nontarget, lambda r: r.n_nontarget),
            (params.lambda_empty, lambda r: r.n_empty),
        ]
    res = []
    for lam_r, pick in groups:
        for rec in dataset:
            expected = sem_expected_catch(lam_r, lam_all, rec.n_effective, rec.soak_minutes)
            res.append(pick(rec) - expected)
    return np.asarray(res)


def sem_loglik(params: SemParams, dataset: Dataset, variant: SemVariant) -> float:
    """Gaussian log-density of the catch residuals (2 groups, or 3 for SEM2)."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    res = sem_residuals(params, dataset, variant)
    m = res.size
    return -0.5 * m * math.log(2.0 * math.pi * params.sigma2) - float(
        np.sum(res**2)
    ) / (2.0 * params.sigma2)


def _natural_vector(params: MemParams) -> tuple[np.ndarray, list[str]]:
    model = params.model
    if model is MemModel.MEM1:
        return (
            np.array([params.lambda_target, params.lambda_nontarget, params.p_nontarget]),
            ["lambda_target", "lambda_nontarget", "p_nontarget"],
        )
    if model is MemModel.MEM2:
        return (
            np.array([params.lambda_target, params.lambda_nontarget, params.p_nontarget]),
            ["lambda_target", "lambda_nontarget", "p"],
        )
    if model is MemModel.FULL:
        return (
            np.array(
                [
                    params.lambda_target,
                    params.lambda_nontarget,
                    params.p_target,
                    params.p_nontarget,
                ]
            ),
            ["lambda_target", "lambda_nontarget", "p_target", "p_nontarget"],
        )
    return (
        np.array([params.lambda_total, params.alpha, params.beta]),
        ["lambda_total", "alpha", "beta"],
    )


def _params_from_vector(model: MemModel, x: np.ndarray) -> MemParams:
    if model is MemModel.MEM1:
        return MemParams(model, x[0], x[1], 0.0, x[2])
    if model is MemModel.MEM2:
        return MemParams(model, x[0], x[1], x[2], x[2])
    if model is MemModel.FULL:
        return MemParams(model, x[0], x[1], x[2], x[3])
    return MemParams(model, lambda_total=x[0], alpha=x[1], beta=x[2])


def mem_score_and_hessian(
    params: MemParams, dataset: Dataset, rel_step: float = 1e-4
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Central-finite-difference gradient and Hessian of :func:`mem_loglik`.

    Differentiation is in the variant's natural parameters (rates and
    escape probabilities, or the identifiable triple for REGULAR) with
    steps scaled to each parameter's magnitude. The Hessian stencil is
    symmetric by construction. Parameters must be strictly interior.
    """
    x0, names = _natural_vector(params)
    model = params.model
    if np.any(x0 <= 0.0):
        raise ValueError("finite differences need strictly positive parameters")
    probs = [i for i, nm in enumerate(names) if nm.startswith("p") or nm in ("alpha", "beta")]
    for i in probs:
        if x0[i] >= 1.0:
            raise ValueError("probabilities must be strictly below 1 for finite differences")

    def f(x: np.ndarray) -> float:
        return mem_loglik(_params_from_vector(model, x), dataset)

    h = np.maximum(np.abs(x0), 1e-8) * rel_step
    k = x0.size
    grad = np.empty(k)
    for i in range(k):
        e = np.zeros(k)
        e[i] = h[i]
        grad[i] = (f(x0 + e) - f(x0 - e)) / (2.0 * h[i])

    hess = np.empty((k, k))
    f0 = f(x0)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (f(x0 + ei) - 2.0 * f0 + f(x0 - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            mixed = (
                f(x0 + ei + ej) - f(x0 + ei - ej) - f(x0 - ei + ej) + f(x0 - ei - ej)
            ) / (4.0 * h[i] * h[j])
            hess[i, j] = mixed
            hess[j, i] = mixed
    return grad, hess, names
