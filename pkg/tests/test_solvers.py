import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import spherical_jn

from hardylab.assembly import hs_functional
from hardylab.domain import make_domain
from hardylab.mesh import MeshOptions
from hardylab.solvers import (existence_gap, first_eigenvalue, forms, halfspace_reference,
                              hardy_constant, hardy_ladder, minimize_quotient, symmetry_audit)
from hardylab.spectral import ParameterError, sobolev_constant

OPT = MeshOptions(h=0.1, layers=8)


@pytest.fixture(scope="module")
def tb():
    return make_domain("tangent_ball")


@pytest.fixture(scope="module")
def hb():
    return make_domain("half_ball")


def test_hardy_ladder_non_increasing(hb):
    vals = [r.value for r in hardy_ladder(hb, OPT, levels=3)]
    assert vals[0] >= vals[1] >= vals[2] > 2.25 * 0.97


@pytest.mark.parametrize("preset,params", [("tangent_ball", {}), ("half_ball", {}), ("chopped_ball", {"delta": 0.2}),
                                           ("bumped_halfball", {"t": 0.2}), ("bumped_halfball", {"t": -0.2})])
def test_discrete_hardy_quotient_above_quarter(preset, params):
    r = hardy_constant(make_domain(preset, **params), OPT)
    assert r.value > 0.25
    assert r.el_residual < 1e-8
    # normalisation int u^2/|x|^2 = 1
    F = forms(r.mesh)
    x = r.minimizer[r.mesh.free]
    assert x @ (F.B @ x) == pytest.approx(1.0, abs=1e-10)


def test_hardy_more_layers_lowers_value(tb):
    a = hardy_constant(tb, MeshOptions(h=0.1, layers=8)).value
    b = hardy_constant(tb, MeshOptions(h=0.1, layers=16)).value
    assert 0.25 < b < a


def test_first_eigenvalue_positive_and_monotone(tb):
    vals = [first_eigenvalue(tb, g, OPT) for g in (0.0, 1.0, 2.0, 2.2)]
    assert vals[2].value > 0
    assert all(a.value > b.value for a, b in zip(vals, vals[1:]))
    for r in vals:
        assert r.diagnostics["min_interior"] > 0
        u = r.minimizer[r.mesh.free]
        assert u @ (forms(r.mesh).M @ u) == pytest.approx(1.0, abs=1e-10)


def test_first_eigenvalue_half_ball_matches_bessel_zero(hb):
    # the half ball's first Dirichlet mode is the l = 1 ball mode: lambda = j_{1,1}^2
    j11 = brentq(lambda x: spherical_jn(1, x), 3.0, 6.0)
    vals = [first_eigenvalue(hb, 0.0, OPT.level(k)).value for k in range(3)]
    assert abs(vals[-1] / j11 ** 2 - 1) < 0.01
    errs = [v - j11 ** 2 for v in vals]
    assert errs[0] > errs[1] > errs[2] > 0
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_first_eigenvalue_rejects_supercritical(tb):
    with pytest.raises(ParameterError, match="gamma_H"):
        first_eigenvalue(tb, 2.249, OPT, gamma_h=2.2)


def test_mu_positive_below_hardy(tb):
    r = minimize_quotient(tb, 0.0, 1.0, OPT)
    assert r.value > 0 and r.el_residual < 1e-6 and r.converged
    assert r.lagrange_multiplier == r.value
    assert hs_functional(r.mesh, s=1.0, u=r.minimizer)[0] == pytest.approx(1.0, abs=1e-10)
    assert r.minimizer.min() >= 0


def test_mu_sign_on_a_domain_with_small_hardy_constant():
    # chopped_ball has gamma_H well below n^2/4: both signs of mu are reachable
    dom = make_domain("chopped_ball", delta=0.2)
    gh = hardy_constant(dom, OPT).value
    lo = minimize_quotient(dom, 0.8 * gh, 1.0, OPT, gamma_h=gh)
    hi = minimize_quotient(dom, min(1.1 * gh, 0.99 * 2.25), 1.0, OPT, gamma_h=gh)
    assert lo.value > 0 > hi.value
    assert lo.el_residual < 1e-6 and hi.el_residual < 1e-6


def test_mu_negative_gamma_no_extremal(tb):
    r = minimize_quotient(tb, -1.0, 0.0, OPT)
    S = sobolev_constant(3)
    assert r.value > S * (1 - 1e-3)
    assert abs(r.value / S - 1) < 0.25


def test_mu_scale_invariance():
    a = minimize_quotient(make_domain("tangent_ball", R=1.0), 1.0, 1.0, MeshOptions(h=0.1, layers=8))
    b = minimize_quotient(make_domain("tangent_ball", R=2.0), 1.0, 1.0, MeshOptions(h=0.2, layers=8))
    assert abs(a.value / b.value - 1) < 1e-6


def test_mu_preconditions(tb):
    with pytest.raises(ParameterError):
        minimize_quotient(tb, 2.25, 1.0, OPT)
    with pytest.raises(ParameterError):
        minimize_quotient(tb, 1.0, 2.0, OPT)


def test_halfspace_reference_analytic():
    v, ladder, flags = halfspace_reference(3, 0.0, 0.0)
    assert v == sobolev_constant(3) and ladder == [] and flags["analytic"]
    assert halfspace_reference(3, -2.0, 0.0)[0] == sobolev_constant(3)


@pytest.mark.slow
def test_halfspace_ladder_non_increasing(hb):
    v, ladder, flags = halfspace_reference(3, 2.0, 1.0, OPT, levels=3)
    vals = [r.value for r in ladder]
    assert flags["monotone"] and vals[0] >= vals[1] >= vals[2] == v
    # same computation as the half ball on the same mesh
    assert minimize_quotient(hb, 2.0, 1.0, OPT).value == pytest.approx(vals[0], rel=1e-9)


def test_existence_gap_dent_predicts_extremal():
    dom = make_domain("bumped_halfball", t=0.2)
    rep, _ = existence_gap(dom, 1.0, 1.0, OPT)
    assert rep.predicts_extremal and rep.regime == "positive"
    assert rep.predicts_extremal == (rep.mu_domain < rep.mu_halfspace - rep.decision_margin * rep.mu_halfspace)


def test_existence_gap_convex_ball_no_prediction(tb):
    rep, _ = existence_gap(tb, 2.1, 1.0, OPT)
    assert not rep.predicts_extremal


def test_existence_gap_negative_mu_below_positive_reference():
    dom = make_domain("chopped_ball", delta=0.2)
    gh = hardy_constant(dom, OPT).value
    g = 0.5 * (gh + 2.25)
    rep, _ = existence_gap(dom, g, 1.0, OPT)
    assert rep.mu_domain < 0 < rep.mu_halfspace
    assert rep.gap > 0 and rep.predicts_extremal and rep.regime == "negative"


def test_symmetry_audit_multistart():
    a = symmetry_audit(1.0, 1.0, grid_size=12, seed=1, mesh_options=MeshOptions(h=0.2, layers=4))
    b = symmetry_audit(1.0, 1.0, grid_size=12, seed=2, mesh_options=MeshOptions(h=0.2, layers=4))
    assert abs(a["mu"] / b["mu"] - 1) < 1e-4
