import itertools
import math

import numpy as np
import pytest

from hookrate.estimators import fit_mem1
from hookrate.likelihoods import (
    MemModel,
    MemParams,
    SemParams,
    SemVariant,
    cell_probabilities,
    mem_loglik,
    mem_score_and_hessian,
    sem_loglik,
)
from hookrate.records import Dataset, SetRecord

from conftest import make_record


def compositions(total, parts):
    """All tuples of `parts` non-negative ints summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in compositions(total - head, parts - 1):
            yield (head,) + tail


def enumerate_total_probability(params, n, soak):
    """Brute-force normalization: sum the pmf over every outcome of n hooks."""
    total = 0.0
    for nb, nt, nnt, ne in compositions(n, 4):
        rec = SetRecord("e", n, nb, nt, nnt, ne, soak_minutes=soak)
        ll = mem_loglik(params, Dataset((rec,)))
        if ll > float("-inf"):
            total += math.exp(ll)
    return total


PARAM_POINTS = [
    # interior
    MemParams(MemModel.FULL, 2e-3, 5e-3, 0.3, 0.4),
    # near-boundary escape probability
    MemParams(MemModel.FULL, 2e-3, 5e-3, 0.999, 0.001),
    # heavy pressure: soak drives nearly every hook unbaited
    MemParams(MemModel.FULL, 0.05, 0.05, 0.2, 0.2),
]


@pytest.mark.parametrize("params", PARAM_POINTS)
@pytest.mark.parametrize("n", [1, 4, 6])
def test_probabilities_sum_to_one(params, n):
    assert enumerate_total_probability(params, n, soak=120.0) == pytest.approx(1.0, abs=1e-10)


def test_single_baited_hook():
    params = MemParams(MemModel.FULL, 1e-3, 2e-3, 0.1, 0.2)
    ds = Dataset((SetRecord("s", 1, 1, 0, 0, 0, soak_minutes=50.0),))
    assert mem_loglik(params, ds) == pytest.approx(-(3e-3) * 50.0)


def test_positive_count_on_zero_cell_is_neg_inf():
    # no escape anywhere, yet an empty hook observed
    params = MemParams(MemModel.FULL, 1e-3, 2e-3, 0.0, 0.0)
    ds = Dataset((SetRecord("s", 10, 8, 1, 0, 1, soak_minutes=60.0),))
    assert mem_loglik(params, ds) == float("-inf")


def test_zero_rates_with_catch_is_neg_inf():
    params = MemParams(MemModel.FULL, 0.0, 0.0, 0.0, 0.0)
    ds = Dataset((SetRecord("s", 10, 9, 1, 0, 0, soak_minutes=60.0),))
    assert mem_loglik(params, ds) == float("-inf")
    all_baited = Dataset((SetRecord("s", 10, 10, 0, 0, 0, soak_minutes=60.0),))
    assert mem_loglik(params, all_baited) == pytest.approx(0.0)


def test_invariant_along_nonidentifiable_path(canonical_dataset):
    # hold (total rate, catch shares) fixed while sliding the escape split
    lam, alpha, beta = 0.7, 0.5, 0.4
    reference = None
    for p_t in np.linspace(0.0, 1.0 - alpha / (1.0 - beta), 10, endpoint=False):
        lambda_t = alpha * lam / (1.0 - p_t)
        lambda_nt = lam - lambda_t
        p_nt = 1.0 - beta * lam / lambda_nt
        params = MemParams(MemModel.FULL, lambda_t, lambda_nt, p_t, p_nt)
        ll = mem_loglik(params, canonical_dataset)
        if reference is None:
            reference = ll
        assert ll == pytest.approx(reference, abs=1e-12)


def test_matches_direct_formula_without_escape():
    # cross-check against an independent expression of the no-escape model
    lt, lnt, soak = 1.5e-3, 3e-3, 100.0
    lam = lt + lnt
    nb, nt, nnt = 72, 11, 17
    n = nb + nt + nnt
    direct = (
        math.lgamma(n + 1)
        - math.lgamma(nb + 1)
        - math.lgamma(nt + 1)
        - math.lgamma(nnt + 1)
        + nb * (-lam * soak)
        + (nt + nnt) * math.log(1 - math.exp(-lam * soak))
        + nt * math.log(lt / lam)
        + nnt * math.log(lnt / lam)
    )
    params = MemParams(MemModel.FULL, lt, lnt, 0.0, 0.0)
    ds = Dataset((SetRecord("s", n, nb, nt, nnt, 0, soak_minutes=soak),))
    assert mem_loglik(params, ds) == pytest.approx(direct, abs=1e-12)


def test_exchangeability_over_sets():
    recs = [
        make_record(set_id="a", n_baited=40, n_target=30, n_nontarget=25, n_empty=5),
        make_record(set_id="b", n_baited=60, n_target=20, n_nontarget=15, n_empty=5),
        make_record(set_id="c", n_baited=50, n_target=25, n_nontarget=20, n_empty=5),
    ]
    params = MemParams(MemModel.MEM1, 0.3, 0.4, 0.0, 0.2)
    a = mem_loglik(params, Dataset(tuple(recs)))
    b = mem_loglik(params, Dataset(tuple(reversed(recs))))
    assert a == pytest.approx(b, abs=1e-12)


def test_loglik_max_value_at_closed_form(canonical_pooled, canonical_dataset):
    # the maximized value has a closed form: log coefficient + sum c*log c - N log N
    counts = [50, 25, 20, 5]
    n = 100
    expected = math.lgamma(n + 1) - sum(math.lgamma(c + 1) for c in counts)
    expected += sum(c * math.log(c) for c in counts if c) - n * math.log(n)
    assert fit_mem1(canonical_pooled).loglik_max == pytest.approx(expected, abs=1e-10)


def test_per_set_loglik_sums(canonical_dataset):
    params = MemParams(MemModel.MEM1, 0.3466, 0.3466, 0.0, 0.2)
    one = mem_loglik(params, canonical_dataset)
    two = mem_loglik(
        params,
        Dataset((canonical_dataset.records[0], make_record(set_id="s2"))),
    )
    assert two == pytest.approx(2 * one, abs=1e-12)


class TestScoreAndHessian:
    def test_gradient_vanishes_at_mle(self, canonical_pooled, canonical_dataset):
        fit = fit_mem1(canonical_pooled)
        params = MemParams(
            MemModel.MEM1, fit.lambda_target, fit.lambda_nontarget, 0.0, fit.p_nontarget
        )
        grad, _, names = mem_score_and_hessian(params, canonical_dataset)
        assert names == ["lambda_target", "lambda_nontarget", "p_nontarget"]
        assert np.all(np.abs(grad) < 1e-6)

    def test_hessian_symmetric_and_negative_definite(self, canonical_pooled, canonical_dataset):
        fit = fit_mem1(canonical_pooled)
        params = MemParams(
            MemModel.MEM1, fit.lambda_target, fit.lambda_nontarget, 0.0, fit.p_nontarget
        )
        _, hess, _ = mem_score_and_hessian(params, canonical_dataset)
        assert np.allclose(hess, hess.T, rtol=1e-8)
        assert np.all(np.linalg.eigvalsh(hess) < 0)

    def test_boundary_rejected(self, canonical_dataset):
        params = MemParams(MemModel.MEM1, 0.3, 0.4, 0.0, 0.0)
        with pytest.raises(ValueError):
            mem_score_and_hessian(params, canonical_dataset)


class TestSemLoglik:
    def test_zero_residuals_value(self):
        ds = Dataset((make_record(set_id="a"), make_record(set_id="b")))
        # parameters that reproduce the observed proportions exactly
        lam = math.log(2.0)
        params = SemParams(lam / 2, lam / 2, sigma2=2.0)
        ll = sem_loglik(params, ds, SemVariant.SEM1)
        assert ll == pytest.approx(-(2 * 2 / 2) * math.log(2 * math.pi * 2.0))

    def test_sem1_pools_nontarget_and_empty(self):
        params = SemParams(3e-3, 4e-3, sigma2=5.0)
        a = Dataset((make_record(n_nontarget=20, n_empty=5),))
        b = Dataset((make_record(n_nontarget=5, n_empty=20),))
        assert sem_loglik(params, a, SemVariant.SEM1) == pytest.approx(
            sem_loglik(params, b, SemVariant.SEM1)
        )

    def test_profile_sigma2_matches_divisor(self):
        ds = Dataset(
            (
                make_record(set_id="a", n_baited=40, n_target=30, n_nontarget=25, n_empty=5),
                make_record(set_id="b", n_baited=60, n_target=20, n_nontarget=15, n_empty=5),
                make_record(set_id="c", n_baited=55, n_target=18, n_nontarget=22, n_empty=5),
            )
        )
        for variant, groups in ((SemVariant.SEM1, 2), (SemVariant.SEM2, 3)):
            base = SemParams(3e-1, 3e-1, sigma2=1.0, lambda_empty=5e-2)
            from hookrate.likelihoods import sem_residuals

            ss = float(np.sum(sem_residuals(base, ds, variant) ** 2))
            best_analytic = ss / (groups * len(ds))
            # numerically profile sigma2 on a fine grid around the analytic optimum
            grid = np.linspace(0.5 * best_analytic, 2.0 * best_analytic, 4001)
            vals = [
                sem_loglik(SemParams(3e-1, 3e-1, sigma2=s, lambda_empty=5e-2), ds, variant)
                for s in grid
            ]
            assert grid[int(np.argmax(vals))] == pytest.approx(best_analytic, rel=1e-3)

    def test_invalid_sigma2(self):
        with pytest.raises(ValueError):
            SemParams(1e-3, 1e-3, sigma2=0.0)


def test_cell_probabilities_zero_rate():
    assert cell_probabilities(0.0, 0.0, 0.3, 0.4, 120.0) == (1.0, 0.0, 0.0, 0.0)


def test_mem2_requires_matching_probabilities():
    with pytest.raises(ValueError):
        MemParams(MemModel.MEM2, 1e-3, 1e-3, 0.1, 0.2)
    with pytest.raises(ValueError):
        MemParams(MemModel.MEM1, 1e-3, 1e-3, 0.1, 0.2)


def test_regular_params_validation():
    with pytest.raises(ValueError):
        MemParams(MemModel.REGULAR, lambda_total=0.5, alpha=0.7, beta=0.4)
    with pytest.raises(ValueError):
        MemParams(MemModel.REGULAR, lambda_total=0.5)
