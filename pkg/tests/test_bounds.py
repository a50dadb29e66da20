"""Bounds, verdicts, product reduction and the report."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import euclidean, hyperbolic, spherical, worked
from radialbounds.bounds import (
    EstimateReport,
    analyze,
    compute_A,
    discreteness_verdict,
    numeric_fields,
    product_reduce,
    spectral_lower_bound,
)
from radialbounds.errors import DimensionMismatch
from radialbounds.isoperimetric import TailStatus, build_ratio_table, inf_I
from radialbounds.jacobi import solve_sigma
from radialbounds.profile import HEnvelope

WORKED_INTEGRAL = math.pi / (3 * math.sqrt(3) * 2 ** (2 / 3))
WORKED_INF_BRANCH = 36 / 25 * 0.4 ** (-1 / 3)  # (2/r + r^5)^2 / 4 at r^6 = 2/5
WORKED_INF = 2.4 / 0.4 ** (1 / 6)


@pytest.fixture(scope="module")
def worked_report():
    return analyze(worked(), proper=True)


@pytest.fixture(scope="module")
def hyperbolic_table():
    w = solve_sigma(hyperbolic(), 50.0)
    return build_ratio_table(w, 2, 50.0)


class TestA:
    def test_minimal(self, hyperbolic_table):
        assert compute_A(hyperbolic_table, HEnvelope(0.0), math.inf)[0] == 0.0

    def test_hyperbolic_half(self, hyperbolic_table):
        A, _ = compute_A(hyperbolic_table, HEnvelope(0.5), math.inf)
        assert A == pytest.approx(0.5, rel=1e-12)

    def test_scaling(self, hyperbolic_table):
        inf = inf_I(hyperbolic_table)
        A, _ = compute_A(hyperbolic_table, HEnvelope(2 * inf.bound_value), math.inf, inf)
        assert A == pytest.approx(2.0, rel=1e-14)

    def test_tabulated_envelope(self):
        w = solve_sigma(worked(), 3.0)
        t = build_ratio_table(w, 2, 3.0, r_phi=3.0)
        H = HEnvelope(None, (0.0, 3.0), (1.0, 1.0))
        A, arg = compute_A(t, H, 3.0)
        assert A == pytest.approx(1 / WORKED_INF, rel=1e-6)
        assert arg == pytest.approx(0.4 ** (1 / 6), rel=1e-3)


class TestSpectral:
    @pytest.mark.parametrize("H0", [0.0, 0.25, 0.5])
    def test_hyperbolic_inf_branch(self, hyperbolic_table, H0):
        out = spectral_lower_bound(hyperbolic_table, math.inf, HEnvelope(H0))
        assert out["lambda_branch_inf"] == pytest.approx((1 - H0) ** 2 / 4, rel=1e-10)
        assert out["lambda_branch_integral"] is None

    def test_worked_branches(self, worked_report):
        r = worked_report
        assert r.lambda_branch_integral == pytest.approx(1 / WORKED_INTEGRAL, rel=1e-8)
        assert r.lambda_branch_inf == pytest.approx(WORKED_INF_BRANCH, rel=1e-8)
        assert r.lambda_lower == r.lambda_branch_integral
        assert r.lambda_branch_integral > r.lambda_branch_inf

    def test_worked_discrepancy_recorded(self, worked_report):
        (entry,) = worked_report.discrepancies
        assert entry["printed"] == 1.64
        assert entry["computed"] == pytest.approx(WORKED_INF_BRANCH, rel=1e-8)

    def test_hyperbolic_discrepancy_recorded(self):
        rep = analyze(hyperbolic(m=3))
        (entry,) = rep.discrepancies
        assert entry["printed"] == "(m-1)/4"
        assert entry["closed_form"] == 1.0
        assert rep.lambda_lower == pytest.approx(1.0, rel=1e-10)

    @pytest.mark.parametrize("m", [2, 3])
    @pytest.mark.parametrize("r_phi", [1.0, 2.0])
    def test_euclidean_finite(self, m, r_phi):
        rep = analyze(euclidean(m=m, r_phi=r_phi))
        assert rep.mean_exit_time_upper == pytest.approx(r_phi**2 / (2 * m), abs=1e-10)
        assert rep.analytic_floor == pytest.approx((m - 1) / r_phi, rel=1e-12)
        assert rep.inf_I["value"] == pytest.approx(m / r_phi, rel=1e-9)
        assert rep.lambda_inf_floor == pytest.approx(((m - 1) / r_phi) ** 2 / 4, rel=1e-12)
        assert rep.lambda_branch_inf >= rep.lambda_inf_floor
        assert rep.lambda_branch_integral == pytest.approx(2 * m / r_phi**2, rel=1e-9)


class TestVerdicts:
    def test_discreteness_rules(self):
        conv, div = TailStatus("converged", value=1.0), TailStatus("divergent", witness=1.0)
        assert discreteness_verdict(conv, 0.5, True) == "yes"
        assert discreteness_verdict(conv, 0.5, False) == "no-inference"
        assert discreteness_verdict(div, 0.0, True) == "no-inference"
        assert discreteness_verdict(conv, 1.0, True) == "hypotheses-violated"
        assert discreteness_verdict(conv, 0.0, True, structural_ok=False) == "hypotheses-violated"

    def test_worked(self, worked_report):
        r = worked_report
        assert r.discrete_spectrum == "yes"
        assert r.stochastically_incomplete_model == "incomplete"
        assert r.mean_exit_time_upper == pytest.approx(WORKED_INTEGRAL, rel=1e-8)
        assert r.not_l1_liouville is True
        assert not r.conditional

    def test_hyperbolic(self):
        r = analyze(hyperbolic(), proper=True)
        assert r.discrete_spectrum == "no-inference"
        assert r.stochastically_incomplete_model == "complete"
        assert r.mean_exit_time_upper is None
        assert r.mean_curvature_verdict["verdict"] == "not-applicable"

    def test_A_equal_one(self):
        r = analyze(hyperbolic(H=1.0), proper=True)
        assert r.A == 1.0
        assert r.discrete_spectrum == "hypotheses-violated"

    def test_euclidean_finite_classification(self):
        r = analyze(euclidean(r_phi=1.0))
        assert r.stochastically_incomplete_model == "not-applicable-finite-radius"
        assert r.mean_exit_time_upper == pytest.approx(0.25, abs=1e-12)

    def test_sphere_conditional(self):
        r = analyze(spherical(r_phi=3.0), proper=True)
        assert r.conditional
        assert r.discrete_spectrum == "hypotheses-violated"
        assert not r.hypothesis_checks["script_I_nondecreasing"]["nondecreasing"]

    def test_mean_curvature_obstruction(self):
        r = analyze(worked(H=1.0), proper=True)
        mc = r.mean_curvature_verdict
        assert mc["verdict"] == "incompatible-with-stochastic-completeness"
        assert mc["sup_H_over_I"] == pytest.approx(1 / WORKED_INF, rel=1e-8)
        assert mc["unbounded_H_required"]
        # driven by the same tail verdict as the stochastic classification
        assert r.stochastically_incomplete_model == "incomplete"

    def test_no_obstruction_when_A_large(self):
        r = analyze(worked(H=3.0))
        assert r.mean_curvature_verdict["verdict"] == "no-obstruction"


class TestProduct:
    def test_reduce(self):
        eff = product_reduce(hyperbolic(m=4, l=2))
        assert eff.d == 2

    def test_reduce_rejects_d1(self):
        p = euclidean(m=3, l=2)
        with pytest.raises(DimensionMismatch):
            product_reduce(p)
        with pytest.raises(DimensionMismatch):
            analyze(p)

    def test_hyperbolic_product(self):
        rep = analyze(hyperbolic(m=4, l=2))
        assert rep.effective_dim == 2
        assert rep.inf_I["bound_value"] == pytest.approx(1.0, rel=1e-12)
        assert rep.lambda_lower == pytest.approx(0.25, rel=1e-12)

    def test_bit_identical(self):
        w = solve_sigma(worked(), 50.0)
        direct = analyze(worked(m=2), w=w)
        prod = analyze(worked(m=4, l=2), w=w)
        assert json.dumps(numeric_fields(direct), sort_keys=True) == json.dumps(numeric_fields(prod), sort_keys=True)

    def test_l0_identity(self):
        a = analyze(hyperbolic(m=3, l=0))
        b = analyze(hyperbolic(m=3))
        assert a.to_dict() == b.to_dict()


class TestReport:
    def test_round_trip(self, worked_report):
        data = json.loads(json.dumps(worked_report.to_dict()))
        back = EstimateReport.from_dict(data)
        assert back == worked_report

    def test_round_trip_with_inf(self):
        rep = analyze(hyperbolic())
        text = json.dumps(rep.to_dict(), allow_nan=False)
        assert EstimateReport.from_dict(json.loads(text)).r_phi == math.inf

    def test_provenance_complete(self, worked_report):
        for key in ("A", "lambda_branch_integral", "lambda_branch_inf", "discrete_spectrum",
                    "mean_exit_time_upper", "mean_curvature_verdict", "inf_I"):
            entry = worked_report.provenance[key]
            assert entry["source"] and "inputs" in entry and "hypotheses" in entry


class TestProperties:
    @settings(max_examples=20, deadline=None)
    @given(h=st.lists(st.floats(0.0, 3.0), min_size=2, max_size=5))
    def test_lambda_nonincreasing_in_H0(self, h):
        w = solve_sigma(worked(), 50.0)
        t = build_ratio_table(w, 2, 50.0)
        inf = inf_I(t)
        hs = sorted(h)
        lams = [spectral_lower_bound(t, math.inf, HEnvelope(x), inf)["lambda_lower"] for x in hs]
        assert all(b <= a for a, b in zip(lams, lams[1:]))
        assert all(x >= 0 for x in lams)

    @settings(max_examples=8, deadline=None)
    @given(m=st.integers(2, 5), l=st.integers(1, 3), which=st.sampled_from(["hyp", "worked"]))
    def test_product_consistency(self, m, l, which):
        d = m
        build = hyperbolic if which == "hyp" else worked
        w = solve_sigma(build(), 50.0)
        direct = analyze(build(m=d), w=w)
        prod = analyze(build(m=d + l, l=l), w=w)
        assert numeric_fields(direct) == numeric_fields(prod)

    @settings(max_examples=10, deadline=None)
    @given(H0=st.floats(0.0, 2.0))
    def test_contrapositive_consistency(self, H0):
        r = analyze(worked(H=H0))
        if r.mean_curvature_verdict["verdict"] == "incompatible-with-stochastic-completeness":
            assert r.stochastically_incomplete_model == "incomplete"


def test_branches_nonnegative_under_violation():
    r = analyze(hyperbolic(H=5.0))
    assert r.A == pytest.approx(5.0, rel=1e-12)
    assert r.conditional
    assert r.lambda_lower == 0.0 and r.lambda_branch_inf == 0.0
    assert np.isfinite(r.lambda_lower)
