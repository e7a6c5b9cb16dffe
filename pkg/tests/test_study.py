import io
import json
import math

import numpy as np
import pytest

from hookrate.study import (
    NEUTRAL_OPTIMIZER,
    PAPER_LAMBDA_NT,
    PAPER_LAMBDA_T,
    PLAIN_OPTIMIZER,
    StudyGrid,
    analytic_vs_numeric,
    cpue_bias_curve,
    run_study,
    theoretical_cpue_bias_pct,
    write_figures,
    write_tables,
)

SMALL = StudyGrid(
    lambda_t_values=(5e-5, 5e-4),
    lambda_nt_values=(5e-4, 5e-3),
    scenario="sc1",
    replicates=400,
    seed=21,
)


@pytest.fixture(scope="module")
def small_report():
    return run_study(SMALL)


def test_determinism(small_report):
    again = run_study(SMALL)
    assert again == small_report


def test_cell_lookup_and_layout(small_report):
    c = small_report.cell(5e-4, 5e-4, "mem1")
    assert c.estimator == "mem1"
    assert c.n_failed == 0
    cv = small_report.matrix("mem1", "cv_pct")
    assert cv.shape == (2, 2)


def test_sc1_estimators_nearly_unbiased(small_report):
    for est in ("mem1", "mem2", "sem1"):
        bias = small_report.matrix(est, "rel_bias_pct")
        assert np.all(bias < 4.0), est  # 400 replicates: generous MC slack


def test_sc1_mem_variants_coincide_without_empties(small_report):
    m1 = small_report.matrix("mem1", "mean_estimate")
    m2 = small_report.matrix("mem2", "mean_estimate")
    assert np.allclose(m1, m2, rtol=1e-12)


def test_cpue_bias_increases_with_competition(small_report):
    for _, series in cpue_bias_curve(small_report).items():
        values = [bias for _, bias in series]
        assert values == sorted(values)


def test_cpue_bias_matches_depletion_theory(small_report):
    c = small_report.cell(5e-4, 5e-3, "cpue")
    expected = theoretical_cpue_bias_pct(5e-4, 5e-3, SMALL.soak_minutes)
    assert c.rel_bias_pct == pytest.approx(expected, abs=1.5)


def test_expected_catch_column(small_report):
    c = small_report.cell(5e-4, 5e-4, "mem1")
    lam = 1e-3
    manual = 20 * 220 * 0.5 * -math.expm1(-lam * 120.0)
    assert c.expected_catch == pytest.approx(manual)


def test_sc2_bias_pattern():
    grid = StudyGrid(
        lambda_t_values=(5e-5, 5e-4),
        lambda_nt_values=(1e-3,),
        scenario="sc2",
        replicates=400,
        estimators=("mem1", "mem2", "sem1"),
        seed=3,
    )
    report = run_study(grid)
    for lt in grid.lambda_t_values:
        # estimators blind to target escape miss by the escape rate
        assert report.cell(lt, 1e-3, "mem1").rel_bias_pct == pytest.approx(20.0, abs=3.0)
        assert report.cell(lt, 1e-3, "sem1").rel_bias_pct == pytest.approx(20.0, abs=3.0)
        assert report.cell(lt, 1e-3, "mem2").rel_bias_pct < 3.0


def test_sc3_bias_pattern():
    grid = StudyGrid(
        lambda_t_values=(5e-4,),
        lambda_nt_values=(5e-4, 5e-3, 1e-2),
        scenario="sc3",
        replicates=600,
        estimators=("mem1", "mem2"),
        seed=4,
    )
    report = run_study(grid)
    mem1 = [report.cell(5e-4, lnt, "mem1").rel_bias_pct for lnt in grid.lambda_nt_values]
    assert all(b == pytest.approx(2.0, abs=1.5) for b in mem1)
    mem2 = [report.cell(5e-4, lnt, "mem2").signed_bias_pct for lnt in grid.lambda_nt_values]
    assert mem2 == sorted(mem2)
    assert mem2[-1] > mem2[0] > 0


def test_numeric_estimator_in_study():
    grid = StudyGrid(
        lambda_t_values=(5e-4,),
        lambda_nt_values=(1e-3,),
        scenario="sc2",
        replicates=25,
        estimators=("mem1", "mem1-numeric"),
        seed=5,
    )
    report = run_study(grid)
    closed = report.cell(5e-4, 1e-3, "mem1")
    numeric = report.cell(5e-4, 1e-3, "mem1")
    assert numeric.mean_estimate == pytest.approx(closed.mean_estimate, rel=0.05)


def test_analytic_vs_numeric_robust_agreement():
    grid = StudyGrid(
        lambda_t_values=(5e-4,), lambda_nt_values=(1e-3,), scenario="sc1", replicates=40, seed=6
    )
    cell = analytic_vs_numeric(grid, config=NEUTRAL_OPTIMIZER)[0]
    assert cell.frac_within_5pct == 1.0
    assert cell.p95_diff < 1e-5


def test_analytic_vs_numeric_plain_mode_degrades_on_weak_peak():
    grid = StudyGrid(
        lambda_t_values=(1e-5,), lambda_nt_values=(1e-2,), scenario="sc1", replicates=60, seed=400
    )
    plain = analytic_vs_numeric(grid, config=PLAIN_OPTIMIZER)[0]
    robust = analytic_vs_numeric(grid, config=NEUTRAL_OPTIMIZER)[0]
    assert plain.mean_diff > 0.05
    assert robust.mean_diff < 1e-4
    assert robust.degenerate_flag_rate > 0.5


def test_seeded_numeric_fit_stays_put():
    # seeding at the closed form leaves nothing to improve
    grid = StudyGrid(
        lambda_t_values=(5e-4,), lambda_nt_values=(1e-3,), scenario="sc1", replicates=20, seed=9
    )
    from hookrate.optimize import OptimizerConfig

    cell = analytic_vs_numeric(grid, config=OptimizerConfig(start_strategy="closed_form"))[0]
    assert cell.p95_diff < 1e-6


def test_grid_validation():
    with pytest.raises(ValueError):
        StudyGrid(scenario="sc4")
    with pytest.raises(ValueError):
        StudyGrid(lambda_t_values=())
    with pytest.raises(ValueError):
        StudyGrid(estimators=("nope",))


def test_grid_from_json():
    payload = json.dumps(
        {
            "lambda_t_values": [1e-4],
            "lambda_nt_values": [1e-3],
            "scenario": "sc2",
            "replicates": 10,
            "estimators": ["mem1"],
            "seed": 12,
        }
    )
    grid = StudyGrid.from_json(payload)
    assert grid.scenario == "sc2"
    assert grid.lambda_t_values == (1e-4,)


def test_default_grid_is_paper_shape():
    grid = StudyGrid()
    assert grid.lambda_t_values == PAPER_LAMBDA_T
    assert grid.lambda_nt_values == PAPER_LAMBDA_NT
    assert grid.n_hooks == 220
    assert grid.n_sets == 20
    assert grid.soak_minutes == 120.0


def test_tables_and_figures(tmp_path, small_report):
    tables = write_tables(small_report, tmp_path)
    assert all(p.exists() for p in tables)
    text = tables[0].read_text()
    assert text.startswith("#")
    assert "rel_bias_pct" in text
    figures = write_figures(small_report, tmp_path)
    assert all(p.suffix == ".svg" and p.exists() for p in figures)


def test_csv_roundtrip_layout(small_report):
    sink = io.StringIO()
    small_report.write_cv_table(sink, "mem1")
    lines = sink.getvalue().strip().splitlines()
    assert len(lines) == 1 + len(SMALL.lambda_t_values)
