"""Numerical maximum likelihood for heterogeneous soak times or hook counts.

The closed forms need a shared soak time (and, for the Gaussian model, a
shared hook count). When sets differ, the log-likelihood is maximized
directly with a derivative-free simplex search over an unconstrained
reparameterization: log for rates, log-odds for probabilities. Several
restarts guard against the weak-peak stalls that plague sparse-catch
data; a degeneracy warning fires when the restarts disagree or the
curvature at the optimum is too weak to pin the estimate down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import EstimationError
from .estimators import EstimateResult, Method
from .likelihoods import (
    MemModel,
    MemParams,
    SemParams,
    SemVariant,
    mem_loglik,
    sem_residuals,
)
from .records import Dataset, PooledCounts

_JITTER_KEY = 0x6A697474


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs for the direct-search fit.

    ``start_strategy`` is either "closed_form" (seed at the pooled
    closed-form estimate computed with the mean soak time; default) or
    "neutral" (seed from the overall hook pressure split evenly across
    groups, ignoring the catch composition). ``min_curvature`` is the
    weakest acceptable curvature of the log-likelihood at the optimum,
    per direction of the transformed space; below it the peak cannot
    localize the estimate and the degeneracy warning fires.

    ``transform`` selects the search coordinates: "log" (default; log
    rates, log-odds probabilities, boundary cases pinned) is robust,
    while "none" searches the raw parameters the way a plain
    stats-package call would, and inherits that approach's fragility
    near boundaries and across rate scales. The raw mode exists to
    reproduce and study that fragility, not for production fits.
    """

    max_iterations: int = 2000
    function_tol: float = 1e-10
    param_tol: float = 1e-8
    restarts: int = 3
    start_strategy: str = "closed_form"
    jitter_scale: float = 0.5
    spread_tol: float = 0.01
    min_curvature: float = 6.0
    transform: str = "log"

    def __post_init__(self):
        if self.function_tol <= 0 or self.param_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.start_strategy not in ("closed_form", "neutral"):
            raise ValueError("start_strategy must be 'closed_form' or 'neutral'")
        if self.transform not in ("log", "none"):
            raise ValueError("transform must be 'log' or 'none'")


@dataclass(frozen=True)
class FitDiagnostics:
    converged: bool
    iterations: int
    best_loglik: float
    restart_spread: float
    degenerate: bool
    min_curvature: float | None = None

    def __post_init__(self):
        if self.restart_spread < 0:
            raise ValueError("restart_spread must be >= 0")


_MEM_MODELS = {
    Method.MEM1: MemModel.MEM1,
    Method.MEM2: MemModel.MEM2,
    Method.MEM_REGULAR: MemModel.REGULAR,
}
_SEM_VARIANTS = {Method.SEM1: SemVariant.SEM1, Method.SEM2: SemVariant.SEM2}


def _pool_ignoring_spread(dataset: Dataset) -> PooledCounts:
    return PooledCounts(
        n_hooks_total=sum(r.n_effective for r in dataset),
        n_baited_total=sum(r.n_baited for r in dataset),
        n_target_total=sum(r.n_target for r in dataset),
        n_nontarget_total=sum(r.n_nontarget for r in dataset),
        n_empty_total=sum(r.n_empty for r in dataset),
        soak_minutes=sum(dataset.soak_minutes) / len(dataset),
        n_sets=len(dataset),
    )


def _overall_rate(pooled: PooledCounts) -> float:
    if 0 < pooled.n_baited_total < pooled.n_hooks_total:
        return math.log(pooled.n_hooks_total / pooled.n_baited_total) / pooled.soak_minutes
    return 1.0 / pooled.soak_minutes


class _MemProblem:
    """MEM fit in transformed coordinates, with zero-count dimensions pinned.

    A group with zero observed count has its rate pinned at the boundary
    value zero (which is where the likelihood puts it); the same goes for
    the escape probability when no empty hook was seen. The remaining
    coordinates are free.
    """

    def __init__(self, dataset: Dataset, method: Method, raw: bool = False):
        self.dataset = dataset
        self.method = method
        self.model = _MEM_MODELS[method]
        self.raw = raw
        pooled = _pool_ignoring_spread(dataset)
        self.pooled = pooled
        nt, nnt, ne = pooled.n_target_total, pooled.n_nontarget_total, pooled.n_empty_total
        if raw:
            # plain mode: the full natural parameter vector, no special
            # casing of boundary counts (this is the fragile configuration)
            self.has_target = self.has_nontarget = True
            self.pinned_p = None
            if self.model is MemModel.REGULAR:
                self.names = ["lambda_total", "alpha", "beta"]
            else:
                self.names = ["lambda_target", "lambda_nontarget", "p"]
            return
        self.has_target = nt > 0
        self.has_nontarget = (nnt + ne > 0) if method is Method.MEM1 else (nnt > 0)
        self.has_empty = ne > 0
        # escape probability: free only when the data can place it in (0, 1)
        if method is Method.MEM1:
            self.pinned_p = None if (ne > 0 and nnt > 0) else (1.0 if ne > 0 else 0.0)
        elif method is Method.MEM2:
            if ne > 0 and nt + nnt == 0:
                raise EstimationError("every unbaited hook is empty: rate split is undefined")
            self.pinned_p = None if ne > 0 else 0.0
        else:
            self.pinned_p = 0.0  # unused by the regular form
        if self.model is MemModel.REGULAR:
            names = []
            if self.has_target:
                names.append("log_lambda_target_part")
            if self.has_nontarget:
                names.append("log_lambda_nontarget_part")
            if self.has_empty:
                names.append("log_lambda_empty_part")
            # regular form optimizes log of each unbaited-share rate component
            self.names = names
        else:
            names = []
            if self.has_target:
                names.append("log_lambda_target")
            if self.has_nontarget:
                names.append("log_lambda_nontarget")
            if self.pinned_p is None:
                names.append("logit_p")
            self.names = names
        if not self.names:
            raise EstimationError("no hook was touched: nothing to fit numerically")

    # -- coordinate mapping -------------------------------------------------

    def to_params(self, x: np.ndarray) -> MemParams | None:
        if self.raw:
            return self._raw_params(x)
        i = 0
        if self.model is MemModel.REGULAR:
            parts = {"t": 0.0, "nt": 0.0, "e": 0.0}
            for key, present in (("t", self.has_target), ("nt", self.has_nontarget), ("e", self.has_empty)):
                if present:
                    parts[key] = math.exp(x[i])
                    i += 1
            lam = parts["t"] + parts["nt"] + parts["e"]
            if not (0 < lam < 1e308):
                return None
            return MemParams(
                MemModel.REGULAR,
                lambda_total=lam,
                alpha=parts["t"] / lam,
                beta=parts["nt"] / lam,
            )
        lt = math.exp(x[i]) if self.has_target else 0.0
        i += 1 if self.has_target else 0
        lnt = math.exp(x[i]) if self.has_nontarget else 0.0
        i += 1 if self.has_nontarget else 0
        p = float(expit(x[i])) if self.pinned_p is None else self.pinned_p
        if not (lt < 1e308 and lnt < 1e308) or lt + lnt <= 0:
            return None
        if self.method is Method.MEM1:
            return MemParams(MemModel.MEM1, lt, lnt, 0.0, p)
        return MemParams(MemModel.MEM2, lt, lnt, p, p)

    def _raw_params(self, x: np.ndarray) -> MemParams | None:
        if self.model is MemModel.REGULAR:
            lam, alpha, beta = x
            if lam <= 0 or alpha < 0 or beta < 0 or alpha + beta > 1.0:
                return None
            return MemParams(MemModel.REGULAR, lambda_total=lam, alpha=alpha, beta=beta)
        lt, lnt, p = x
        if lt <= 0 or lnt <= 0 or not 0.0 <= p <= 1.0:
            return None
        if self.method is Method.MEM1:
            return MemParams(MemModel.MEM1, lt, lnt, 0.0, p)
        return MemParams(MemModel.MEM2, lt, lnt, p, p)

    def neg_loglik(self, x: np.ndarray) -> float:
        params = self.to_params(x)
        if params is None:
            return float("inf")
        ll = mem_loglik(params, self.dataset)
        return float("inf") if ll == float("-inf") else -ll

    # -- start points -------------------------------------------------------

    def start(self, strategy: str) -> np.ndarray:
        pooled = self.pooled
        lam = _overall_rate(pooled)
        unbaited = max(pooled.n_unbaited_total, 1)
        if strategy == "closed_form":
            if self.method is Method.MEM1:
                lt = pooled.n_target_total / unbaited * lam
                lnt = (pooled.n_nontarget_total + pooled.n_empty_total) / unbaited * lam
                denom = pooled.n_empty_total + pooled.n_nontarget_total
                p = pooled.n_empty_total / denom if denom else 0.0
            elif self.method is Method.MEM2:
                caught = max(pooled.n_target_total + pooled.n_nontarget_total, 1)
                lt = pooled.n_target_total / caught * lam
                lnt = pooled.n_nontarget_total / caught * lam
                p = pooled.n_empty_total / max(unbaited, 1)
            else:
                return self._regular_start(
                    lam,
                    pooled.n_target_total / unbaited,
                    pooled.n_nontarget_total / unbaited,
                    pooled.n_empty_total / unbaited,
                )
        else:
            # species-blind start: split the overall pressure evenly
            if self.method is Method.MEM_REGULAR:
                return self._regular_start(lam, 1 / 3, 1 / 3, 1 / 3)
            lt = lnt = lam / 2.0
            p = 0.5
        return self._natural_start(lt, lnt, p)

    def _natural_start(self, lt: float, lnt: float, p: float) -> np.ndarray:
        if self.raw:
            return np.array([max(lt, 1e-12), max(lnt, 1e-12), min(max(p, 0.0), 1.0)])
        x = []
        if self.has_target:
            x.append(math.log(max(lt, 1e-12)))
        if self.has_nontarget:
            x.append(math.log(max(lnt, 1e-12)))
        if self.pinned_p is None:
            x.append(float(logit(min(max(p, 1e-4), 1 - 1e-4))))
        return np.array(x)

    def _regular_start(self, lam, alpha, beta, gamma) -> np.ndarray:
        if self.raw:
            return np.array([lam, alpha, beta])
        x = []
        for share, present in ((alpha, self.has_target), (beta, self.has_nontarget), (gamma, self.has_empty)):
            if present:
                x.append(math.log(max(share * lam, 1e-12)))
        return np.array(x)

    def result(self, x: np.ndarray, loglik: float) -> EstimateResult:
        params = self.to_params(x)
        aic = 2 * 3 - 2 * loglik
        if self.model is MemModel.REGULAR:
            lam, alpha, beta, _ = params.to_canonical()
            return EstimateResult(
                method=Method.MEM_REGULAR,
                lambda_target=alpha * lam,
                lambda_nontarget=(1 - alpha) * lam,
                lambda_total=lam,
                alpha=alpha,
                beta=beta,
                loglik_max=loglik,
                aic=aic,
            )
        p_nt = params.p_nontarget
        if self.method is Method.MEM1 and not self.has_nontarget:
            p_nt = None  # no non-target group at all: escape share undefined
        lam, alpha, beta, _ = params.to_canonical()
        return EstimateResult(
            method=self.method,
            lambda_target=params.lambda_target,
            lambda_nontarget=params.lambda_nontarget,
            lambda_total=params.lambda_target + params.lambda_nontarget,
            p_target=0.0 if self.method is Method.MEM1 else p_nt,
            p_nontarget=p_nt,
            alpha=alpha,
            beta=beta,
            loglik_max=loglik,
            aic=aic,
        )


class _SemProblem:
    """Gaussian-residual fit with the variance profiled out analytically."""

    def __init__(self, dataset: Dataset, method: Method, raw: bool = False):
        self.dataset = dataset
        self.method = method
        self.raw = raw
        self.variant = _SEM_VARIANTS[method]
        self.groups = 2 if self.variant is SemVariant.SEM1 else 3
        self.m = self.groups * len(dataset)
        base = ["lambda_target", "lambda_nontarget"] + (
            ["lambda_empty"] if self.variant is SemVariant.SEM2 else []
        )
        self.names = base if raw else [f"log_{n}" for n in base]
        self.pooled = _pool_ignoring_spread(dataset)

    def to_params(self, x: np.ndarray) -> SemParams | None:
        rates = np.asarray(x, dtype=float) if self.raw else np.exp(x)
        if not np.all(np.isfinite(rates)) or (self.raw and np.any(rates < 0)):
            return None
        if rates.sum() <= 0:
            return None
        if self.variant is SemVariant.SEM1:
            return SemParams(rates[0], rates[1], sigma2=1.0)
        return SemParams(rates[0], rates[1], sigma2=1.0, lambda_empty=rates[2])

    def sum_of_squares(self, params: SemParams) -> float:
        return float(np.sum(sem_residuals(params, self.dataset, self.variant) ** 2))

    def neg_loglik(self, x: np.ndarray) -> float:
        params = self.to_params(x)
        if params is None:
            return float("inf")
        ss = self.sum_of_squares(params)
        if ss <= 0:
            # perfect interpolation: profiled likelihood is unbounded
            return -float("inf")
        return 0.5 * self.m * (math.log(2 * math.pi * ss / self.m) + 1.0)

    def start(self, strategy: str) -> np.ndarray:
        pooled = self.pooled
        lam = _overall_rate(pooled)
        unbaited = max(pooled.n_unbaited_total, 1)
        if strategy == "closed_form":
            lt = max(pooled.n_target_total, 0.5) / unbaited * lam
            if self.variant is SemVariant.SEM1:
                lnt = max(pooled.n_nontarget_total + pooled.n_empty_total, 0.5) / unbaited * lam
                rates = [lt, lnt]
            else:
                lnt = max(pooled.n_nontarget_total, 0.5) / unbaited * lam
                le = max(pooled.n_empty_total, 0.5) / unbaited * lam
                rates = [lt, lnt, le]
        else:
            rates = [lam / self.groups] * self.groups
        rates = np.maximum(rates, 1e-12)
        return rates if self.raw else np.log(rates)

    def result(self, x: np.ndarray, loglik: float) -> EstimateResult:
        params = self.to_params(x)
        ss = self.sum_of_squares(params)
        sigma2 = ss / self.m
        lam_e = params.lambda_empty if self.variant is SemVariant.SEM2 else None
        k = self.groups + 1
        return EstimateResult(
            method=self.method,
            lambda_target=params.lambda_target,
            lambda_nontarget=params.lambda_nontarget,
            lambda_total=params.lambda_target + params.lambda_nontarget + (lam_e or 0.0),
            lambda_empty=lam_e,
            sigma2=sigma2,
            loglik_max=loglik if math.isfinite(loglik) else None,
            aic=(2 * k - 2 * loglik) if math.isfinite(loglik) else None,
        )


def _curvature_eigenvalues(neg_loglik, x: np.ndarray) -> np.ndarray | None:
    """Eigenvalues of the negative Hessian (curvature) in transformed space."""
    k = x.size
    h = np.maximum(np.abs(x), 1.0) * 1e-4
    f0 = neg_loglik(x)
    hess = np.empty((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        fp, fm = neg_loglik(x + ei), neg_loglik(x - ei)
        if not (math.isfinite(fp) and math.isfinite(fm) and math.isfinite(f0)):
            return None
        hess[i, i] = (fp - 2 * f0 + fm) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            vals = [
                neg_loglik(x + ei + ej),
                neg_loglik(x + ei - ej),
                neg_loglik(x - ei + ej),
                neg_loglik(x - ei - ej),
            ]
            if not all(math.isfinite(v) for v in vals):
                return None
            mixed = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h[i] * h[j])
            hess[i, j] = mixed
            hess[j, i] = mixed
    return np.linalg.eigvalsh(hess)  # curvature of -loglik: positive at a max


def fit_numeric(
    dataset: Dataset,
    model: Method | str,
    config: OptimizerConfig = OptimizerConfig(),
) -> tuple[EstimateResult, FitDiagnostics]:
    """Maximize the model's exact log-likelihood by simplex search.

    Runs ``config.restarts`` starts (the configured base start first,
    then deterministically jittered variants) and keeps the best by
    log-likelihood, ties broken by start index. The degeneracy warning
    in the diagnostics fires when restart optima spread beyond
    ``spread_tol`` (relative, on the natural scale), when the curvature
    at the optimum falls below ``min_curvature`` in some direction, or
    when no restart converged.
    """
    method = Method(model)
    if len(dataset) == 0:
        raise EstimationError("cannot fit an empty dataset")
    raw = config.transform == "none"
    if method in _MEM_MODELS:
        problem = _MemProblem(dataset, method, raw=raw)
    elif method in _SEM_VARIANTS:
        if len(dataset) < 2:
            raise EstimationError("the Gaussian-residual fit needs at least two sets")
        problem = _SemProblem(dataset, method, raw=raw)
    else:
        raise ValueError(f"model {method} has no numeric fit")

    base = problem.start(config.start_strategy)
    starts = [base]
    for k in range(1, config.restarts):
        rng = np.random.default_rng(np.random.SeedSequence([_JITTER_KEY, k]))
        starts.append(base + config.jitter_scale * rng.standard_normal(base.size))

    best = None
    best_index = -1
    solutions = []
    total_iters = 0
    any_finite_start = False
    for idx, x0 in enumerate(starts):
        f0 = problem.neg_loglik(x0)
        if f0 == -float("inf"):
            # profiled Gaussian likelihood unbounded: perfect fit at the start
            res_x, res_f, nit, ok = x0, f0, 0, True
        elif not math.isfinite(f0):
            continue
        else:
            any_finite_start = True
            opt = minimize(
                problem.neg_loglik,
                x0,
                method="Nelder-Mead",
                options={
                    "maxiter": config.max_iterations,
                    "maxfev": 10 * config.max_iterations,
                    "fatol": config.function_tol,
                    "xatol": config.param_tol,
                },
            )
            res_x, res_f, nit, ok = opt.x, float(opt.fun), int(opt.nit), bool(opt.success)
            if res_f > f0:  # never return something worse than the start
                res_x, res_f = x0, f0
        total_iters += nit
        solutions.append((idx, res_x, res_f, ok))
        if best is None or res_f < best[2] - 0.0 or (res_f == best[2] and idx < best[0]):
            best = (idx, res_x, res_f, ok)
            best_index = idx
    if best is None or (not any_finite_start and not solutions):
        raise EstimationError("no start point gives a finite log-likelihood")

    _, x_best, f_best, ok_best = best
    loglik = -f_best

    # spread of restart optima on the natural scale
    spread = 0.0
    if len(solutions) > 1:
        natural = []
        for _, x, f, _ in solutions:
            if math.isfinite(f):
                params = problem.to_params(x)
                if params is not None:
                    if isinstance(problem, _MemProblem):
                        lam, alpha, beta, gamma = params.to_canonical()
                        natural.append([alpha * lam, beta * lam, gamma * lam])
                    else:
                        natural.append(
                            [params.lambda_target, params.lambda_nontarget, params.lambda_empty]
                        )
        if len(natural) > 1:
            arr = np.asarray(natural)
            span = arr.max(axis=0) - arr.min(axis=0)
            scale = np.maximum(np.abs(arr).max(axis=0), 1e-300)
            spread = float(np.max(span / scale))

    if raw:
        # raw coordinates make curvature scale-dependent; the plain mode
        # reports convergence and restart spread only
        min_curv = None
        weak_peak = False
    else:
        eigs = _curvature_eigenvalues(problem.neg_loglik, x_best) if math.isfinite(f_best) else None
        min_curv = float(eigs.min()) if eigs is not None else None
        weak_peak = eigs is None or min_curv < config.min_curvature
    degenerate = weak_peak or spread > config.spread_tol or not ok_best

    diagnostics = FitDiagnostics(
        converged=ok_best,
        iterations=total_iters,
        best_loglik=loglik,
        restart_spread=spread,
        degenerate=degenerate,
        min_curvature=min_curv,
    )
    return problem.result(x_best, loglik), diagnostics
