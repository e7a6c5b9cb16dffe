"""Bayesian inference for the hook-outcome models.

A self-contained random-walk Metropolis sampler targets prior times
likelihood on log-odds-transformed parameters. Rates get Beta priors on
(0, 1); per-hook-minute rates live deep inside that interval, so the
support is not a practical constraint. The deliberately unidentified
four-parameter model is available as a diagnostic: with no data-driven
information about who escapes, the escape-probability posterior stays
prior-like, and :func:`prior_distance` quantifies how prior-like.

Chains run independently from seeds derived as (seed, chain); the
proposal scale adapts toward a target acceptance rate during burn-in
only, so the kept draws come from a fixed kernel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
from scipy.special import betaln, expit
from scipy.stats import beta as beta_dist

from .errors import EstimationError
from .likelihoods import MemModel
from .records import Dataset

_TARGET_ACCEPTANCE = 0.3
_ADAPT_BATCH = 50
_MAX_INIT_ATTEMPTS = 200

PARAM_NAMES = {
    MemModel.MEM1: ("lambda_target", "lambda_nontarget", "p_nontarget"),
    MemModel.MEM2: ("lambda_target", "lambda_nontarget", "p"),
    MemModel.FULL: ("lambda_target", "lambda_nontarget", "p_target", "p_nontarget"),
}


@dataclass(frozen=True)
class PriorSpec:
    """Independent Beta priors: rates on (0, 1), escape probabilities too."""

    lambda_target: tuple[float, float] = (1.0, 1.0)
    lambda_nontarget: tuple[float, float] = (1.0, 1.0)
    p: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        for pair in (self.lambda_target, self.lambda_nontarget, self.p):
            if len(pair) != 2 or min(pair) <= 0:
                raise ValueError("Beta shapes must be positive pairs")

    @classmethod
    def diffuse(cls) -> "PriorSpec":
        """The heavier-tailed Beta(0.1, 0.1) variant some engines default to."""
        return cls((0.1, 0.1), (0.1, 0.1), (0.1, 0.1))

    def shapes_for(self, model: MemModel) -> list[tuple[float, float]]:
        names = PARAM_NAMES[model]
        out = []
        for name in names:
            if name == "lambda_target":
                out.append(self.lambda_target)
            elif name == "lambda_nontarget":
                out.append(self.lambda_nontarget)
            else:
                out.append(self.p)
        return out


@dataclass(frozen=True)
class PosteriorSample:
    """Draws from every chain, after burn-in and thinning."""

    model: MemModel
    names: tuple[str, ...]
    draws: np.ndarray = field(repr=False)  # (chains, kept draws, params)
    burn_in: int
    thinning: int
    acceptance_rates: tuple[float, ...]
    seed: int

    def __post_init__(self):
        if self.draws.ndim != 3:
            raise ValueError("draws must be (chains, draws, params)")
        if self.draws.shape[2] != len(self.names):
            raise ValueError("parameter count mismatch")

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.acceptance_rates))

    def parameter(self, name: str) -> np.ndarray:
        """Draws of one parameter, shape (chains, draws)."""
        return self.draws[:, :, self.names.index(name)]

    def pooled(self, name: str) -> np.ndarray:
        return self.parameter(name).reshape(-1)


def _loglik_factory(dataset: Dataset, model: MemModel):
    """Vectorized multinomial log-likelihood in the model's natural params.

    Matches the scalar kernel exactly (the constant multinomial
    coefficients are precomputed once).
    """
    nb = np.array([r.n_baited for r in dataset], dtype=float)
    nt = np.array([r.n_target for r in dataset], dtype=float)
    nnt = np.array([r.n_nontarget for r in dataset], dtype=float)
    ne = np.array([r.n_empty for r in dataset], dtype=float)
    soak = np.array([r.soak_minutes for r in dataset], dtype=float)
    n = nb + nt + nnt + ne
    const = float(
        sum(
            math.lgamma(ni + 1)
            - math.lgamma(a + 1)
            - math.lgamma(b + 1)
            - math.lgamma(c + 1)
            - math.lgamma(d + 1)
            for ni, a, b, c, d in zip(n, nb, nt, nnt, ne)
        )
    )
    any_nt = nt.sum() > 0
    any_nnt = nnt.sum() > 0
    any_ne = ne.sum() > 0

    def loglik(theta: np.ndarray) -> float:
        lt, lnt = theta[0], theta[1]
        if model is MemModel.MEM1:
            pt, pnt = 0.0, theta[2]
        elif model is MemModel.MEM2:
            pt = pnt = theta[2]
        else:
            pt, pnt = theta[2], theta[3]
        lam = lt + lnt
        if lam <= 0:
            return float("-inf")
        alpha = lt / lam * (1.0 - pt)
        beta_ = lnt / lam * (1.0 - pnt)
        gamma = (lt * pt + lnt * pnt) / lam
        if (any_nt and alpha <= 0) or (any_nnt and beta_ <= 0) or (any_ne and gamma <= 0):
            return float("-inf")
        lam_s = lam * soak
        out = const - float(np.dot(nb, lam_s))
        touched = n - nb
        out += float(np.dot(touched, np.log(-np.expm1(-lam_s))))
        if any_nt:
            out += float(nt.sum()) * math.log(alpha)
        if any_nnt:
            out += float(nnt.sum()) * math.log(beta_)
        if any_ne:
            out += float(ne.sum()) * math.log(gamma)
        return out

    return loglik


def _log_prior_and_jacobian(x: np.ndarray, shapes) -> float:
    """Beta log-densities of expit(x) plus the log-odds Jacobian."""
    out = 0.0
    for xi, (a, b) in zip(x, shapes):
        # log Beta pdf at expit(xi) plus log derivative of expit
        log_theta = -np.logaddexp(0.0, -xi)
        log_1m = -np.logaddexp(0.0, xi)
        out += (a - 1.0) * log_theta + (b - 1.0) * log_1m - betaln(a, b)
        out += log_theta + log_1m
    return float(out)


def sample_posterior(
    dataset: Dataset | None,
    model: MemModel | str,
    prior: PriorSpec = PriorSpec(),
    chains: int = 4,
    draws: int = 2000,
    burn_in: int = 1000,
    seed: int = 0,
    thinning: int = 1,
) -> PosteriorSample:
    """Random-walk Metropolis draws from the posterior.

    ``dataset=None`` samples the prior alone (used to validate the
    sampler against known Beta moments). Deterministic given
    (seed, chains, draws, burn_in, thinning).
    """
    model = MemModel(model)
    if model is MemModel.REGULAR:
        raise ValueError("sample the rate/escape parameterizations, not the collapsed form")
    if draws < 1 or burn_in < 0 or thinning < 1 or chains < 1:
        raise ValueError("need draws >= 1, burn_in >= 0, thinning >= 1, chains >= 1")
    names = PARAM_NAMES[model]
    shapes = prior.shapes_for(model)
    k = len(names)
    loglik = _loglik_factory(dataset, model) if dataset is not None and len(dataset) else None

    def log_post(x: np.ndarray) -> float:
        lp = _log_prior_and_jacobian(x, shapes)
        if loglik is not None:
            theta = expit(x)
            lp += loglik(theta)
        return lp

    all_draws = np.empty((chains, draws, k))
    rates = []
    for chain in range(chains):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(chain)]))
        x = None
        for _ in range(_MAX_INIT_ATTEMPTS):
            theta0 = np.array([rng.beta(a, b) for a, b in shapes])
            theta0 = np.clip(theta0, 1e-12, 1 - 1e-12)
            cand = np.log(theta0) - np.log1p(-theta0)
            if math.isfinite(log_post(cand)):
                x = cand
                break
        if x is None:
            raise EstimationError(
                "no prior draw gives the data positive probability; check the model"
            )
        lp = log_post(x)
        scale = 0.2
        accepted_batch = 0
        kept = 0
        accepted_total = 0
        it = 0
        total_iters = burn_in + draws * thinning
        while kept < draws:
            it += 1
            proposal = x + scale * rng.standard_normal(k)
            lp_new = log_post(proposal)
            if lp_new - lp > math.log(rng.uniform()):
                x, lp = proposal, lp_new
                accepted_batch += 1
                if it > burn_in:
                    accepted_total += 1
            in_burn_in = it <= burn_in
            if in_burn_in and it % _ADAPT_BATCH == 0:
                rate = accepted_batch / _ADAPT_BATCH
                scale *= math.exp(0.5 * (rate - _TARGET_ACCEPTANCE))
                scale = min(max(scale, 1e-3), 10.0)
                accepted_batch = 0
            if not in_burn_in and (it - burn_in) % thinning == 0:
                all_draws[chain, kept] = expit(x)
                kept += 1
        post_iters = it - burn_in
        rates.append(accepted_total / post_iters if post_iters else 0.0)
    return PosteriorSample(
        model=model,
        names=tuple(names),
        draws=all_draws,
        burn_in=burn_in,
        thinning=thinning,
        acceptance_rates=tuple(rates),
        seed=seed,
    )


@dataclass(frozen=True)
class ParameterSummary:
    mean: float
    median: float
    lower: float
    upper: float
    rhat: float


def split_chain_rhat(chain_draws: np.ndarray) -> float:
    """Potential scale reduction with each chain split in half.

    Returns NaN (undefined) when the within-sequence variance vanishes,
    e.g. for constant chains.
    """
    chains, n = chain_draws.shape
    if n < 4:
        return float("nan")
    half = n // 2
    seqs = np.vstack([chain_draws[:, :half], chain_draws[:, half : 2 * half]])
    w = seqs.var(axis=1, ddof=1).mean()
    if w <= 0 or not math.isfinite(w):
        return float("nan")
    b_over_n = seqs.mean(axis=1).var(ddof=1)
    var_hat = (half - 1) / half * w + b_over_n
    return float(math.sqrt(var_hat / w))


def summarize_posterior(
    sample: PosteriorSample, level: float = 0.95
) -> dict[str, ParameterSummary]:
    """Equal-tailed intervals and split-chain convergence per parameter.

    At ``level=0`` both interval ends collapse onto the median. The
    convergence statistic needs at least two chains and is NaN when
    undefined (constant chains).
    """
    if not 0.0 <= level < 1.0:
        raise ValueError("level must lie in [0, 1)")
    if sample.draws.shape[1] == 0:
        raise ValueError("no post-burn-in draws to summarize")
    out = {}
    tail = 100.0 * (1.0 - level) / 2.0
    for i, name in enumerate(sample.names):
        per_chain = sample.draws[:, :, i]
        pooled = per_chain.reshape(-1)
        lower, upper = np.percentile(pooled, [tail, 100.0 - tail])
        rhat = split_chain_rhat(per_chain) if sample.n_chains >= 2 else float("nan")
        out[name] = ParameterSummary(
            mean=float(pooled.mean()),
            median=float(np.median(pooled)),
            lower=float(lower),
            upper=float(upper),
            rhat=rhat,
        )
    return out


def prior_distance(sample: PosteriorSample, prior: PriorSpec, parameter: str) -> float:
    """Kolmogorov-Smirnov distance between a marginal posterior and its prior.

    Computed against the exact Beta CDF. Near 0 means the data taught us
    nothing about this parameter (the unidentifiability signature); an
    identified parameter concentrates and pushes the distance toward 1.
    Values below roughly 0.5 indicate a prior-like, unidentified margin;
    identified margins on informative data sit above 0.9.
    """
    shapes = dict(zip(sample.names, prior.shapes_for(sample.model)))
    if parameter not in shapes:
        raise ValueError(f"unknown parameter {parameter!r}")
    a, b = shapes[parameter]
    pooled = np.sort(sample.pooled(parameter))
    n = pooled.size
    cdf = beta_dist(a, b).cdf(pooled)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    return float(np.max(np.maximum(np.abs(ecdf_hi - cdf), np.abs(ecdf_lo - cdf))))


def export_samples(sample: PosteriorSample, sink: TextIO) -> None:
    """One row per kept draw: chain, iteration, then the parameters."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["chain", "iteration", *sample.names])
    chains, n, k = sample.draws.shape
    for c in range(chains):
        for i in range(n):
            writer.writerow([c, i, *(float(v) for v in sample.draws[c, i])])
