"""Estimator uncertainty: asymptotic covariances, Fisher checks, bootstrap.

Two closed-form covariance printings are in circulation for the fixed
escape variants; they agree except for one entry of the MEM1 matrix,
where one printing drops a bait-depletion factor. The primary functions
here use the form that matches the inverse Fisher information (verified
numerically in the test suite); the alternative printing is kept as
``*_alt`` for comparison and documentation.

The bootstrap resamples whole sets with replacement: sets are the
independent replicates of every model here, so resampling hooks would
fabricate precision.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TextIO

import numpy as np

from .errors import BootstrapError, EstimationError, HookrateError
from .estimators import (
    EstimateResult,
    Method,
    _vec_estimates,
    _vec_lambda_target,
    cpue,
    fit_mem1,
    fit_mem2,
    fit_regular,
    fit_sem_closed,
)
from .likelihoods import SemVariant, cell_probabilities
from .records import DEFAULT_SOAK_TOLERANCE, Dataset, pool

PARAM_ORDER = ("lambda_target", "lambda_nontarget", "p")

_VEC_METHODS = {
    Method.CPUE,
    Method.HOVGARD,
    Method.MEM1,
    Method.MEM2,
    Method.MEM_REGULAR,
    Method.SEM1,
    Method.SEM2,
}


class CovarianceSource(str, Enum):
    CLOSED_FORM = "closed_form"
    CLOSED_FORM_ALT = "closed_form_alt"
    NUMERIC_FISHER = "numeric_fisher"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class CovarianceMatrix:
    """3x3 covariance over (lambda_target, lambda_nontarget, p)."""

    matrix: np.ndarray
    source: CovarianceSource
    parameter_order: tuple[str, str, str] = PARAM_ORDER

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("covariance must be 3x3")
        if not np.allclose(m, m.T, rtol=1e-8, atol=0):
            raise ValueError("covariance must be symmetric")
        if np.any(np.diag(m) < 0):
            raise ValueError("variances must be >= 0")
        object.__setattr__(self, "matrix", m)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.matrix))


def _depletion_terms(lambda_t, lambda_nt, soak):
    lam = lambda_t + lambda_nt
    if lam <= 0 or soak <= 0:
        raise EstimationError("covariance needs positive rates and soak time")
    baited = math.exp(-lam * soak)
    touched = -math.expm1(-lam * soak)
    return lam, baited, touched


def asymptotic_cov_mem1(
    lambda_t: float, lambda_nt: float, p_nt: float, n_hooks_total: int, soak: float
) -> CovarianceMatrix:
    """Large-sample covariance of the only-non-target-escape estimates.

    Scales as 1/N with the total hook count; block-diagonal between the
    rate pair and the escape probability, whose entry vanishes at the
    boundary values 0 and 1.
    """
    lam, baited, touched = _depletion_terms(lambda_t, lambda_nt, soak)
    if lambda_t <= 0 or lambda_nt <= 0:
        raise EstimationError("rate covariances need strictly positive rates")
    shared = touched / (soak**2 * baited * lam**2)
    cross = lambda_t * lambda_nt / touched
    v11 = (cross + shared * lambda_t**2) / n_hooks_total
    v12 = (-cross + shared * lambda_t * lambda_nt) / n_hooks_total
    v22 = (cross + shared * lambda_nt**2) / n_hooks_total
    v33 = lam * p_nt * (1.0 - p_nt) / (lambda_nt * touched) / n_hooks_total
    m = np.array([[v11, v12, 0.0], [v12, v22, 0.0], [0.0, 0.0, v33]])
    return CovarianceMatrix(m, CovarianceSource.CLOSED_FORM)


def asymptotic_cov_mem1_alt(
    lambda_t: float, lambda_nt: float, p_nt: float, n_hooks_total: int, soak: float
) -> CovarianceMatrix:
    """The other circulating printing of the MEM1 covariance.

    Differs from :func:`asymptotic_cov_mem1` only in the (2, 2) entry,
    where the bait-depletion factor appears unsquared; the primary form
    is the one consistent with the Fisher information.
    """
    lam, baited, touched = _depletion_terms(lambda_t, lambda_nt, soak)
    if lambda_t <= 0 or lambda_nt <= 0:
        raise EstimationError("rate covariances need strictly positive rates")
    pref = lambda_t * lambda_nt / (n_hooks_total * touched)
    shared_sq = touched**2 / (soak**2 * baited * lam**2)
    shared_unsq = touched / (soak**2 * baited * lam**2)
    m11 = pref * (shared_sq * lambda_t / lambda_nt + 1.0)
    m12 = pref * (shared_sq - 1.0)
    m22 = pref * (shared_unsq * lambda_nt / lambda_t + 1.0)
    m33 = pref * (p_nt * (1.0 - p_nt) * lam / (lambda_t * lambda_nt**2))
    m = np.array([[m11, m12, 0.0], [m12, m22, 0.0], [0.0, 0.0, m33]])
    return CovarianceMatrix(m, CovarianceSource.CLOSED_FORM_ALT)


def asymptotic_cov_mem2(
    lambda_t: float, lambda_nt: float, p: float, n_hooks_total: int, soak: float
) -> CovarianceMatrix:
    """Large-sample covariance of the shared-escape-probability estimates."""
    lam, baited, touched = _depletion_terms(lambda_t, lambda_nt, soak)
    if lambda_t <= 0 or lambda_nt <= 0:
        raise EstimationError("rate covariances need strictly positive rates")
    if not 0 <= p < 1:
        raise EstimationError("escape probability must lie in [0, 1)")
    shared = touched / (soak**2 * baited * lam**2)
    cross = lambda_t * lambda_nt / ((1.0 - p) * touched)
    v11 = (cross + shared * lambda_t**2) / n_hooks_total
    v12 = (-cross + shared * lambda_t * lambda_nt) / n_hooks_total
    v22 = (cross + shared * lambda_nt**2) / n_hooks_total
    v33 = p * (1.0 - p) / touched / n_hooks_total
    m = np.array([[v11, v12, 0.0], [v12, v22, 0.0], [0.0, 0.0, v33]])
    return CovarianceMatrix(m, CovarianceSource.CLOSED_FORM)


def asymptotic_cov_mem2_alt(
    lambda_t: float, lambda_nt: float, p: float, n_hooks_total: int, soak: float
) -> CovarianceMatrix:
    """The prefactored printing of the MEM2 covariance (same values)."""
    lam, baited, touched = _depletion_terms(lambda_t, lambda_nt, soak)
    pref = lambda_t * lambda_nt / (n_hooks_total * touched)
    shared_sq = touched**2 / (soak**2 * baited * lam**2)
    inv1p = 1.0 / (1.0 - p)
    m11 = pref * (shared_sq * lambda_t / lambda_nt + inv1p)
    m12 = pref * (shared_sq - inv1p)
    m22 = pref * (shared_sq * lambda_nt / lambda_t + inv1p)
    m33 = pref * (p * (1.0 - p) / (lambda_t * lambda_nt))
    m = np.array([[m11, m12, 0.0], [m12, m22, 0.0], [0.0, 0.0, m33]])
    return CovarianceMatrix(m, CovarianceSource.CLOSED_FORM_ALT)


def fisher_information_numeric(
    model: Method,
    lambda_t: float,
    lambda_nt: float,
    p: float,
    n_hooks_total: int,
    soak: float,
    rel_step: float = 3e-4,
) -> np.ndarray:
    """Expected information from finite differences of the expected log-density.

    The expected per-hook log-likelihood ``sum_c prob_c(truth) * log
    prob_c(theta)`` is differentiated twice around the truth with central
    stencils; its negative Hessian times the hook total is the
    information. Serves as the independent oracle for the closed forms.
    """
    if model not in (Method.MEM1, Method.MEM2):
        raise ValueError("Fisher oracle covers the fixed-escape variants only")
    if not (0 < p < 1):
        raise EstimationError("interior escape probability required")

    def cells(theta):
        lt, lnt, pp = theta
        if model is Method.MEM1:
            return cell_probabilities(lt, lnt, 0.0, pp, soak)
        return cell_probabilities(lt, lnt, pp, pp, soak)

    truth = np.array([lambda_t, lambda_nt, p])
    ref = np.asarray(cells(truth))

    def expected_loglik(theta):
        probs = np.asarray(cells(theta))
        if np.any(probs[ref > 0] <= 0):
            return float("-inf")
        mask = ref > 0
        return float(np.sum(ref[mask] * np.log(probs[mask])))

    h = truth * rel_step
    k = 3
    hess = np.empty((k, k))
    f0 = expected_loglik(truth)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (expected_loglik(truth + ei) - 2 * f0 + expected_loglik(truth - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            mixed = (
                expected_loglik(truth + ei + ej)
                - expected_loglik(truth + ei - ej)
                - expected_loglik(truth - ei + ej)
                + expected_loglik(truth - ei - ej)
            ) / (4 * h[i] * h[j])
            hess[i, j] = mixed
            hess[j, i] = mixed
    return -n_hooks_total * hess


def numeric_fisher_cov(
    model: Method, lambda_t: float, lambda_nt: float, p: float, n_hooks_total: int, soak: float
) -> CovarianceMatrix:
    info = fisher_information_numeric(model, lambda_t, lambda_nt, p, n_hooks_total, soak)
    m = np.linalg.inv(info)
    m = (m + m.T) / 2.0
    return CovarianceMatrix(m, CovarianceSource.NUMERIC_FISHER)


def with_asymptotic_covariance(
    result: EstimateResult, n_hooks_total: int, soak: float
) -> EstimateResult:
    """Attach the matching closed-form covariance to a MEM1/MEM2 fit."""
    if result.method is Method.MEM1:
        cov = asymptotic_cov_mem1(
            result.lambda_target,
            result.lambda_nontarget,
            result.p_nontarget or 0.0,
            n_hooks_total,
            soak,
        )
    elif result.method is Method.MEM2:
        cov = asymptotic_cov_mem2(
            result.lambda_target,
            result.lambda_nontarget,
            result.p_nontarget or 0.0,
            n_hooks_total,
            soak,
        )
    else:
        raise ValueError("closed-form covariance exists for MEM1 and MEM2 only")
    return result.with_covariance(cov.matrix)


@dataclass(frozen=True)
class BootstrapSummary:
    """Replicate estimates and the percentile interval they imply."""

    method: Method
    estimates: dict[str, np.ndarray] = field(repr=False)
    level: float
    lower: float
    upper: float
    cv: float
    replicates: int
    n_degenerate: int
    seed: int

    @property
    def lambda_target(self) -> np.ndarray:
        return self.estimates["lambda_target"]

    def export_replicates(self, sink: TextIO) -> None:
        """Write every replicate estimate as CSV for external auditing."""
        keys = list(self.estimates)
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["replicate"] + keys)
        n = len(self.estimates[keys[0]])
        for i in range(n):
            writer.writerow([i] + [self.estimates[k][i] for k in keys])

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "level": self.level,
            "lower": self.lower,
            "upper": self.upper,
            "cv": self.cv,
            "replicates": self.replicates,
            "n_degenerate": self.n_degenerate,
            "seed": self.seed,
        }


_BOOT_KEY = 0x62747374


def _resample_indices(seed: int, replicates: int, n_sets: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _BOOT_KEY]))
    return rng.integers(0, n_sets, size=(replicates, n_sets))


def _fit_generic(dataset: Dataset, method: Method, numeric: bool):
    from .optimize import fit_numeric

    if numeric:
        res, _ = fit_numeric(dataset, method)
        return res.lambda_target, res.lambda_nontarget, res.p_nontarget
    if method is Method.CPUE:
        return cpue(dataset), np.nan, np.nan
    pooled = pool(dataset)
    if method is Method.MEM1:
        r = fit_mem1(pooled)
    elif method is Method.MEM2:
        r = fit_mem2(pooled)
    elif method is Method.MEM_REGULAR:
        r = fit_regular(pooled)
    elif method in (Method.SEM1, Method.SEM2):
        r = fit_sem_closed(dataset, SemVariant(method.value))
    else:
        from .estimators import hovgard_lambda

        return hovgard_lambda(pooled), np.nan, np.nan
    p = r.p_nontarget if r.p_nontarget is not None else np.nan
    return r.lambda_target, (r.lambda_nontarget if r.lambda_nontarget is not None else np.nan), p


def bootstrap(
    dataset: Dataset,
    method: Method | str,
    replicates: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    numeric: bool = False,
) -> BootstrapSummary:
    """Nonparametric bootstrap over sets for any estimator.

    Each replicate redraws ``len(dataset)`` sets with replacement and
    refits. Replicates where the estimator degenerates (all hooks baited
    or stripped, undefined splits) are dropped from the percentiles and
    counted in ``n_degenerate``; more than half degenerate raises
    :class:`BootstrapError`. All resample indices come from one seeded
    stream drawn up front, so results are reproducible and independent
    of evaluation order. A single-set dataset is allowed for smoke
    checks and yields a zero-width interval.
    """
    method = Method(method)
    n_sets = len(dataset)
    if n_sets < 1:
        raise BootstrapError("no sets to resample")
    if replicates < 100:
        raise BootstrapError("need at least 100 bootstrap replicates")
    if not 0.0 <= level < 1.0:
        raise BootstrapError("level must lie in [0, 1)")
    indices = _resample_indices(seed, replicates, n_sets)

    soaks = dataset.soak_minutes
    mean_soak = sum(soaks) / n_sets
    spread = max(abs(s - mean_soak) for s in soaks) / mean_soak
    constant_enough = spread <= DEFAULT_SOAK_TOLERANCE

    if not numeric and constant_enough and method in _VEC_METHODS:
        per_set = np.array(
            [
                [r.n_baited, r.n_target, r.n_nontarget, r.n_empty, r.n_effective]
                for r in dataset
            ],
            dtype=float,
        )
        picked = per_set[indices]  # (R, L, 5)
        totals = picked.sum(axis=1)
        nb, nt, nnt, ne, n = totals.T
        if method in (Method.CPUE, Method.HOVGARD):
            lt = _vec_lambda_target(method, nb, nt, nnt, ne, n, mean_soak)
            lnt = np.full_like(lt, np.nan)
            p = np.full_like(lt, np.nan)
        else:
            vec_method = Method.MEM1 if method in (Method.SEM1, Method.SEM2, Method.MEM_REGULAR) else method
            lt, lnt, p = _vec_estimates(vec_method, nb, nt, nnt, ne, n, mean_soak)
    else:
        records = dataset.records
        lt = np.empty(replicates)
        lnt = np.empty(replicates)
        p = np.empty(replicates)
        for r in range(replicates):
            ds_b = Dataset(
                tuple(
                    _renamed(records[j], f"b{r}-{k}") for k, j in enumerate(indices[r])
                )
            )
            try:
                lt[r], lnt[r], p[r] = _fit_generic(ds_b, method, numeric)
            except HookrateError:
                lt[r] = lnt[r] = p[r] = np.nan

    valid = np.isfinite(lt)
    n_degenerate = int(replicates - valid.sum())
    if n_degenerate > replicates / 2:
        raise BootstrapError(
            f"{n_degenerate}/{replicates} bootstrap replicates degenerate; "
            "the dataset cannot support this estimator"
        )
    kept = lt[valid]
    tail = 100.0 * (1.0 - level) / 2.0
    lower, upper = np.percentile(kept, [tail, 100.0 - tail])
    mean = float(kept.mean())
    cv = float(kept.std(ddof=1) / mean) if mean != 0 and kept.size > 1 else float("nan")
    return BootstrapSummary(
        method=method,
        estimates={"lambda_target": lt, "lambda_nontarget": lnt, "p": p},
        level=level,
        lower=float(lower),
        upper=float(upper),
        cv=cv,
        replicates=replicates,
        n_degenerate=n_degenerate,
        seed=seed,
    )


def _renamed(record, new_id):
    from dataclasses import replace

    return replace(record, set_id=new_id)
