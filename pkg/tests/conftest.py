import pytest

from hookrate.records import Dataset, PooledCounts, SetRecord


def make_record(
    set_id="s1",
    n_hooks=100,
    n_baited=50,
    n_target=25,
    n_nontarget=20,
    n_empty=5,
    n_unknown=0,
    soak_minutes=1.0,
    **kw,
):
    return SetRecord(
        set_id=set_id,
        n_hooks=n_hooks,
        n_baited=n_baited,
        n_target=n_target,
        n_nontarget=n_nontarget,
        n_empty=n_empty,
        n_unknown=n_unknown,
        soak_minutes=soak_minutes,
        **kw,
    )


@pytest.fixture
def canonical_record():
    # (N=100, N_B=50, N_T=25, N_NT=20, N_E=5, S=1): the worked example
    # used throughout the closed-form tests.
    return make_record()


@pytest.fixture
def canonical_pooled():
    return PooledCounts(
        n_hooks_total=100,
        n_baited_total=50,
        n_target_total=25,
        n_nontarget_total=20,
        n_empty_total=5,
        soak_minutes=1.0,
        n_sets=1,
    )


@pytest.fixture
def canonical_dataset(canonical_record):
    return Dataset((canonical_record,))
