import numpy as np
import pytest

from groupshapley import globalization as gz
from groupshapley.partial import missing_interval, shapley_minimum_norm


def test_utilities_are_levels_minus_one():
    t = gz.utility_table("revenue_share_of_exports")
    assert dict(t.entries) == pytest.approx({1: 0.02, 2: 0.36, 3: 0.39, 4: 1.01})
    assert t.grand == pytest.approx(1.50)
    assert sorted(t.missing) == [5, 6]


def test_revenue_row_interpretation_a():
    res = shapley_minimum_norm(gz.utility_table("revenue_share_of_exports"), gz.constraints("revenue_share_of_exports", "A"))
    slb, sub, smns = gz.REFERENCE["revenue_share_of_exports"]
    np.testing.assert_allclose(res.lower, slb, atol=gz.REGRESSION_TOL)
    np.testing.assert_allclose(res.upper, sub, atol=gz.REGRESSION_TOL)
    np.testing.assert_allclose(res.smns.values, smns, atol=gz.REGRESSION_TOL)


def test_job_turnover_infeasible_under_a():
    cmp = gz.compare_row("job_turnover", "A")
    assert cmp.status == "infeasible" and cmp.matches


@pytest.mark.parametrize("name", sorted(gz.REFERENCE))
def test_reference_rows_under_b(name):
    cmp = gz.compare_row(name, "B")
    assert cmp.matches, (name, cmp.max_abs_diff)


@pytest.mark.parametrize("name", gz.REFERENCE_EXCLUDED)
def test_excluded_rows_infeasible(name):
    assert gz.compare_row(name, "A").status == "infeasible"


def test_interpretation_a_unbounded_rows_keep_smns():
    # bounds open on one side, but the minimum-norm point still matches
    cmp = gz.compare_row("exit_rate", "A")
    assert cmp.status == "unbounded"
    assert np.max(np.abs(np.array(cmp.computed[2]) - gz.REFERENCE["exit_rate"][2])) <= gz.REGRESSION_TOL


def test_revenue_induced_interval():
    t = gz.utility_table("revenue_share_of_exports")
    lo, hi = missing_interval(gz.constraints("revenue_share_of_exports", "difference"), t, 0b101)
    assert (lo, hi) == pytest.approx((1.01, 1.5))


def test_report_lists_rows():
    text = gz.deviations_report()
    for name in gz.AGGREGATES:
        assert f"| {name} |" in text
    assert gz.unmatched_rows() == []
    assert "- (none)" in text
