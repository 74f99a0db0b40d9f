import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hardylab.domain import make_domain
from hardylab.mesh import MeshOptions
from hardylab.solvers import hardy_constant
from hardylab.spectral import ParameterError, sphere_area
from hardylab.testfn import (TestFamily, angular_constant, blowup_scan, boundary_family, chart_energies,
                             default_ladder, expansion_audit, gammaH_family_scan, rho_eps_quotient,
                             rho_eps_slopes)

LADDER = (1e-2, 1e-3, 1e-4, 1e-5)


@pytest.fixture(scope="module")
def tb():
    return make_domain("tangent_ball")


# angular constants ----------------------------------------------------------------

def test_angular_constant_sigma_two():
    assert angular_constant(3, 2.0) == pytest.approx(8 * math.pi / 3, rel=1e-13)
    for n in (4, 5, 7):
        assert angular_constant(n, 2.0) == pytest.approx(2 * sphere_area(n - 1) / n, rel=1e-13)


def test_angular_constant_sigma_zero_node_doubling():
    a, b = angular_constant(3, 0.0, order=16), angular_constant(3, 0.0, order=32)
    assert abs(a - b) <= 1e-10 * b
    # 2 int |x_1|^6 over S^2 = 2 * 4 pi / 7
    assert b == pytest.approx(8 * math.pi / 7, rel=1e-12)


def test_angular_constant_monotone_grid():
    vals = [angular_constant(3, s) for s in np.linspace(0, 2, 41)]
    assert np.all(np.diff(vals) > 0)


@given(st.floats(0.0, 1.999))
@settings(max_examples=30, deadline=None)
def test_angular_constant_continuous(sigma):
    a, b = angular_constant(3, sigma), angular_constant(3, sigma + 1e-6)
    assert 0 < b - a < 1e-4 * a


def test_angular_constant_range():
    with pytest.raises(ParameterError):
        angular_constant(3, 2.5)
    with pytest.raises(ParameterError):
        angular_constant(3, -0.1)


# rho_eps -------------------------------------------------------------------------

def test_rho_eps_ratio_near_quarter_n_squared():
    assert abs(rho_eps_quotient(3, 1e-5)[2] / 2.25 - 1) < 0.01


def test_rho_eps_ratio_monotone_trend():
    r = [rho_eps_quotient(3, e)[2] for e in LADDER]
    assert np.all(np.diff(r) < 0) and r[-1] > 2.25
    assert np.all(np.abs(np.diff([x - 2.25 for x in r])) > 0)


def test_rho_eps_higher_k_limit():
    # ((n + 2k - 2)/2)^2 for k = 2, n = 3
    assert abs(rho_eps_quotient(3, 1e-5, k=2)[2] / 6.25 - 1) < 0.01


def test_rho_eps_differencing_law():
    sl = rho_eps_slopes(3, LADDER)
    E = sl["energies"]
    L = np.log(1 / np.asarray(LADDER))
    # the middle piece carries the whole ln(1/eps) growth: 2 ln(1/eps) over the half sphere moment
    moment = 2 * math.pi / 3
    dh = np.diff(E[:, 1]) / np.diff(L)
    dg = np.diff(E[:, 0]) / np.diff(L)
    assert np.allclose(dh, 2 * moment, rtol=1e-9)
    assert np.allclose(dg, 2.25 * 2 * moment, rtol=1e-9)
    assert sl["ratio_of_slopes"] == pytest.approx(2.25, rel=1e-9)


@pytest.mark.xfail(strict=True, reason="the Hardy energy grows like C(2)/2 ln(1/eps): rho_eps lives on a half space")
def test_rho_eps_hardy_slope_is_full_angular_constant():
    sl = rho_eps_slopes(3, LADDER)
    assert abs(sl["hardy_slope"] / angular_constant(3, 2.0) - 1) < 0.02


def test_rho_eps_range():
    with pytest.raises(ParameterError):
        rho_eps_quotient(3, 0.2)
    with pytest.raises(ParameterError):
        rho_eps_quotient(3, 0.0)


# families -----------------------------------------------------------------------

def test_family_ladder_strictly_decreasing():
    with pytest.raises(ParameterError):
        TestFamily("rho_eps", (1e-2, 1e-2, 1e-3), {})
    with pytest.raises(ParameterError):
        TestFamily("rho_eps", (1e-3, 1e-2), {})


def test_default_ladder_five_per_decade():
    lad = default_ladder()
    assert lad[0] == pytest.approx(0.1) and lad[-1] == pytest.approx(1e-5) and len(lad) == 21
    assert np.allclose(np.diff(np.log10(lad)), -0.2)


def test_boundary_family_finite_energy_and_dirichlet(tb):
    fam = boundary_family(tb, (1e-2, 1e-3))
    for e in fam.epsilons:
        u, ud, uq, rule = fam.evaluate(e)
        g, hd, nl, J = chart_energies(tb, 2.0, 1.0, u, ud, uq, rule)
        assert all(np.isfinite(v) and v > 0 for v in (g, hd, nl))
        # the family vanishes on the boundary d = 0 and outside the cutoff
        edge = rule["theta"] == rule["theta"].max()
        assert np.max(np.abs(u[edge])) < 1e-2 * np.max(np.abs(u))


# blow-up --------------------------------------------------------------------------

def test_blowup_supercritical(tb):
    a = blowup_scan(tb, 2.5, 1.0, LADDER)
    assert np.all(a.J < 0) and np.all(np.diff(a.J) < 0)
    assert a.expected_sign == -1


def test_blowup_exponent_on_default_ladder(tb):
    a = blowup_scan(tb, 2.5, 1.0)
    assert len(a.epsilons) == 16 and a.epsilons[-1] == pytest.approx(1e-5)
    assert np.all(a.J[a.epsilons <= 1e-3] < 0)
    assert abs(a.slope - 0.5) <= 0.2 * 0.5
    assert a.verdict


def test_blowup_exponent_approaches_half(tb):
    # the log-log slope carries an O(1 / ln ln(1/eps)) bias that shrinks down the ladder
    far = blowup_scan(tb, 2.5, 1.0, default_ladder(1e-8, 1e-3))
    near = blowup_scan(tb, 2.5, 1.0)
    assert abs(far.slope - 0.5) < abs(near.slope - 0.5)


def test_blowup_subcritical_bounded(tb):
    a = blowup_scan(tb, 2.2, 1.0, LADDER)
    assert np.all(a.J > 0) and a.verdict


def test_blowup_short_ladder(tb):
    with pytest.raises(ParameterError):
        blowup_scan(tb, 2.5, 1.0, (1e-2, 1e-3, 1e-4))


# expansion audits -------------------------------------------------------------------

def test_curvature_audit_dent_dips_below():
    dom = make_domain("bumped_halfball", t=0.1)
    a = expansion_audit(dom, 1.0, 1.0, "curvature")
    assert a.details["mean_curvature"] < 0 and a.expected_sign == -1
    assert a.verdict and np.all(a.correction < 0)
    assert len(a.epsilons) >= 4


def test_mass_audit_convex_ball_stays_above(tb):
    a = expansion_audit(tb, 2.1, 1.0, "mass")
    assert a.details["mass"] < 0 and a.expected_sign == 1
    assert a.verdict and np.all(a.correction > 0)


def test_schoen_audit_sign(tb):
    a = expansion_audit(tb, 0.01, 0.0, "schoen")
    assert a.details["R_gamma"] < 0 and a.expected_sign == 1
    assert a.verdict


def test_audit_csv(tmp_path, tb):
    a = blowup_scan(tb, 2.5, 1.0, LADDER)
    p = a.to_csv(tmp_path / "audit.csv")
    rows = list(csv.DictReader(open(p)))
    assert [float(r["epsilon"]) for r in rows] == list(LADDER)
    assert a.summary()["points"] == 4


def test_audit_kind_preconditions(tb):
    with pytest.raises(ParameterError):
        expansion_audit(tb, 1.0, 1.0, "bogus")
    with pytest.raises(ParameterError):
        expansion_audit(tb, 2.1, 1.0, "curvature")
    with pytest.raises(ParameterError):
        expansion_audit(tb, 1.0, 1.0, "mass")
    with pytest.raises(ParameterError):
        expansion_audit(tb, 2.1, 1.0, "critical")
    with pytest.raises(ParameterError):
        expansion_audit(make_domain("half_ball"), 1.0, 1.0, "curvature")
    with pytest.raises(ParameterError):
        expansion_audit(tb, 1.0, 1.0, "curvature", epsilons=(0.1, 0.05, 0.02))


# gamma_H families ------------------------------------------------------------------

SCAN_OPT = MeshOptions(h=0.1, layers=8)


def test_chopped_family_decreasing():
    rep = gammaH_family_scan("chopped_ball", mesh_options=SCAN_OPT)
    assert rep["monotone"] and rep["final"] < 1.0


def test_bumped_family_increasing():
    rep = gammaH_family_scan("bumped_halfball", mesh_options=SCAN_OPT)
    assert rep["monotone"] and rep["final"] < 2.25 * 1.1


def test_bumped_t_zero_is_half_ball():
    a = hardy_constant(make_domain("bumped_halfball", t=0.0), SCAN_OPT).value
    b = hardy_constant(make_domain("half_ball"), SCAN_OPT).value
    assert a == b


def test_family_scan_errors():
    with pytest.raises(ParameterError):
        gammaH_family_scan("tangent_ball")
    with pytest.raises(ParameterError):
        gammaH_family_scan("chopped_ball", ladder=(0.4, 0.2))
