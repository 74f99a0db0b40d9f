"""Acceptance battery: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest -s tests/test_acceptance.py`` to see the lines, or execute the
file directly for the summary alone.
"""
import math
import sys

import numpy as np
import pytest

from hardylab.assembly import PowerWeight, hardy_identity_residual, hs_functional
from hardylab.asymptotics import MeshField, boundary_mass, interior_mass, profile_fit
from hardylab.domain import make_domain
from hardylab.mesh import MeshOptions, generate_mesh
from hardylab.solvers import (concentration, first_eigenvalue, hardy_constant, hardy_ladder,
                              minimize_quotient, symmetry_audit)
from hardylab.spectral import (ClosedFormSolution, alpha_exponents, kelvin_transform,
                               laplacian_identity_residual, sobolev_constant)
from hardylab.testfn import (angular_constant, blowup_scan, expansion_audit, gammaH_family_scan,
                             rho_eps_quotient, rho_eps_slopes)

pytestmark = pytest.mark.acceptance


def bump(mesh, center=(0.5, 0.0), radius=0.3, power=8):
    dist = np.hypot(mesh.nodes[:, 0] - center[0], mesh.nodes[:, 1] - center[1])
    return np.where(dist < radius, np.cos(np.pi * dist / (2 * radius)) ** power, 0.0)


def c01():
    rng = np.random.default_rng(1)
    worst, equiv = 0.0, True
    for _ in range(100):
        n = int(rng.integers(3, 9))
        g = rng.uniform(-5.0, n * n / 4 - 1e-6)
        am, ap = alpha_exponents(n, g)
        worst = max(worst, abs(am + ap - n) / n, abs(am * ap - g) / max(abs(g), 1e-300))
        equiv &= (g < (n * n - 1) / 4) == (ap - am > 1)
    return worst < 1e-12 and equiv, f"max relative error {worst:.2e}, threshold equivalence {equiv}"


def c02():
    rng = np.random.default_rng(2)
    worst = 0.0
    for n, g in ((3, 1.0), (3, 2.0), (3, -1.0), (4, 3.0), (5, 5.0), (6, 8.0)):
        for a in alpha_exponents(n, g):
            x = np.column_stack([rng.uniform(0.5, 1.5, 50), rng.uniform(-1, 1, (50, n - 1))])
            worst = max(worst, float(np.max(laplacian_identity_residual(a, n, x, 1e-4))))
    return worst < 1e-6, f"max FD residual {worst:.2e}"


def c03():
    rng = np.random.default_rng(3)
    e1 = e2 = 0.0
    for n, g in ((3, 1.0), (3, 2.1), (4, 2.5), (5, 4.0)):
        am, ap = alpha_exponents(n, g)
        x = rng.uniform(0.1, 2.0, (100, n))
        ku = kelvin_transform(ClosedFormSolution(am), n)
        e1 = max(e1, float(np.max(np.abs(ku(x) / ClosedFormSolution(ap)(x) - 1))))
        kk = kelvin_transform(ku, n)
        e2 = max(e2, float(np.max(np.abs(kk(x) / ClosedFormSolution(am)(x) - 1))))
    return e1 < 1e-12 and e2 < 1e-12, f"alpha_- -> alpha_+ {e1:.2e}, involution {e2:.2e}"


def c04():
    dom = make_domain("half_ball")
    res = []
    for k in range(3):
        m = generate_mesh(dom, options=MeshOptions(h=0.025, layers=4, refine=k))
        res.append(hardy_identity_residual(m, rho=PowerWeight(1.5, 3), v=bump(m), order=5))
    ratios = [a / b for a, b in zip(res, res[1:])]
    ok = res[0] < 1e-4 and all(3.0 <= r <= 5.0 for r in ratios)
    return ok, f"residuals {[f'{r:.2e}' for r in res]}, ratios {[round(float(r), 2) for r in ratios]}"


def c05():
    opt = MeshOptions(h=0.1, layers=32)
    lad = [r.value for r in hardy_ladder(make_domain("half_ball"), opt, levels=3)]
    ok = abs(lad[-1] / 2.25 - 1) < 0.03 and lad[0] >= lad[1] >= lad[2]
    fine = opt.level(2)
    presets = {"tangent_ball": {}, "half_ball": {}, "chopped_ball": {"delta": 0.2},
               "bumped_halfball+": {"t": 0.2}, "bumped_halfball-": {"t": -0.2}}
    vals = {}
    for name, kw in presets.items():
        vals[name] = hardy_constant(make_domain(name.rstrip("+-"), **kw), fine).value
    inside = all(0.25 < v <= 2.25 * 1.01 for v in vals.values())
    return ok and inside, (f"half_ball ladder {[round(v, 4) for v in lad]}; presets "
                           + ", ".join(f"{k} {v:.4f}" for k, v in vals.items()))


def c06():
    ratio = rho_eps_quotient(3, 1e-5)[2]
    slope = rho_eps_slopes(3, (1e-2, 1e-3, 1e-4, 1e-5))["hardy_slope"]
    C2 = angular_constant(3, 2.0)
    ok = abs(ratio / 2.25 - 1) < 0.01 and abs(slope / C2 - 1) < 0.02
    return ok, f"ratio {ratio:.5f}, Hardy slope {slope:.5f} against C(2) = {C2:.5f} (ratio {slope / C2:.4f})"


def c07():
    rep = gammaH_family_scan("chopped_ball", (0.4, 0.2, 0.1), MeshOptions(h=0.1, layers=16))
    ok = rep["monotone"] and rep["final"] < 1.0
    return ok, f"gamma_H {[round(v, 4) for v in rep['gamma_H']]}"


def c08():
    tb = make_domain("tangent_ball")
    opt = MeshOptions(h=0.1, layers=16)
    gh = hardy_constant(tb, opt).value
    lo = minimize_quotient(tb, 0.8 * gh, 1.0, opt, gamma_h=gh)
    g_hi = min(1.1 * gh, 0.99 * 2.25)
    hi = minimize_quotient(tb, g_hi, 1.0, opt, gamma_h=gh)
    ok = lo.value > 0 > hi.value and lo.el_residual < 1e-6 and hi.el_residual < 1e-6
    return ok, (f"gamma_H {gh:.4f}; mu({0.8 * gh:.4f}) = {lo.value:.4f} (EL {lo.el_residual:.1e}); "
                f"mu({g_hi:.4f}) = {hi.value:.4f} (EL {hi.el_residual:.1e})")


def c09():
    tb = make_domain("tangent_ball")
    S = sobolev_constant(3)
    mus, conc = [], []
    for k in range(3):
        opt = MeshOptions(h=0.1, layers=4, refine=k, focus=((1.0, 0.0, 0.002, 0.15),))
        r = minimize_quotient(tb, -1.0, 0.0, opt)
        mus.append(r.value)
        conc.append(concentration(r.mesh, 0.0, r.minimizer)[1])
    ok = (abs(mus[-1] / S - 1) < 0.03 and mus[0] > mus[1] > mus[2] and conc[0] < conc[1] < conc[2])
    return ok, f"mu {[round(m, 4) for m in mus]} against S = {S:.4f}, concentration {[round(c, 1) for c in conc]}"


def c10():
    tb = make_domain("tangent_ball")
    r = first_eigenvalue(tb, 2.0, MeshOptions(h=0.1, layers=16, refine=2))
    am, _ = alpha_exponents(3, 2.0)
    fit = profile_fit(MeshField(r.mesh, r.minimizer), tb, am)
    # the target slope 1 - alpha_- is 0: the 5% band is read as |slope| < 0.05
    return abs(fit.slope) < 0.05, f"slope {fit.slope:.4f}, K {fit.K:.4f}"


def c11():
    opt = MeshOptions(h=0.1, layers=16)
    m1 = boundary_mass(make_domain("tangent_ball"), 2.1, opt).mass
    m2 = boundary_mass(make_domain("tangent_ball", R=2.0), 2.1, opt).mass
    flat = [boundary_mass(make_domain("half_ball", R=R), 2.1, MeshOptions(h=0.1 * R, layers=16)).mass
            for R in (1.0, 2.0, 4.0)]
    ok = m1 < 0 and m2 > m1 and abs(flat[0]) > abs(flat[1]) > abs(flat[2])
    return ok, f"m(tb1) {m1:.4f}, m(tb2) {m2:.4f}, flat R = 1, 2, 4: {[round(f, 4) for f in flat]}"


def c12():
    errs = []
    for R in (1.0, 2.0):
        val = interior_mass(make_domain("tangent_ball", R=R), 0.01, R,
                            MeshOptions(h=0.1 * R, layers=8))
        errs.append((val, abs(val * R + 1)))
    ok = all(e < 0.03 for _, e in errs)
    return ok, ", ".join(f"R_gamma {v:.4f} (rel err {e:.2%})" for v, e in errs)


def c13():
    a = blowup_scan(make_domain("tangent_ball"), 2.5, 1.0)
    neg = bool(np.all(a.J[a.epsilons <= 1e-3] < 0))
    ok = neg and abs(a.slope - 0.5) <= 0.1
    return ok, f"{len(a.epsilons)} ladder points, J < 0 for eps <= 1e-3: {neg}, exponent {a.slope:.4f}"


def c14():
    cur = expansion_audit(make_domain("bumped_halfball", t=0.1), 1.0, 1.0, "curvature")
    mas = expansion_audit(make_domain("tangent_ball"), 2.1, 1.0, "mass")
    ok_c = bool(np.all(cur.J < cur.reference)) and cur.stable
    ok_m = bool(np.all(mas.J > mas.reference)) and mas.stable
    return ok_c and ok_m, (f"curvature: max corr {cur.correction.max():.2e}, stable {cur.stable}; "
                           f"mass: min corr {mas.correction.min():.2e}, stable {mas.stable}")


def c15():
    rep = symmetry_audit(1.0, 1.0, grid_size=32)
    ok = rep["angular_variation"] < 0.05 and rep["relative_difference"] < 0.05
    return ok, (f"grid {rep['grid']}, angular variation {rep['angular_variation']:.4f}, "
                f"mu 3D {rep['mu']:.4f} vs axisymmetric {rep['mu_axisymmetric']:.4f}")


def c16():
    mesh = generate_mesh(make_domain("half_ball"), options=MeshOptions(h=0.1, layers=6))
    rng = np.random.default_rng(16)
    worst, orders = 0.0, []
    s_values = (0.0, 0.5, 1.0, 1.5)
    for k in range(20):
        s = s_values[k % 4]
        u, v = rng.normal(size=mesh.n_free), rng.normal(size=mesh.n_free)
        ex = hs_functional(mesh, s=s, u=u)[1] @ v
        errs = []
        for h in (1e-2, 1e-3, 1e-5):
            fd = (hs_functional(mesh, s=s, u=u + h * v)[0] - hs_functional(mesh, s=s, u=u - h * v)[0]) / (2 * h)
            errs.append(abs(fd - ex) / abs(ex))
        worst = max(worst, errs[2])
        orders.append(math.log10(errs[0] / errs[1]))
    ok = worst < 1e-5 and min(orders) > 1.7
    return ok, f"max rel error at h = 1e-5: {worst:.2e}, min observed order {min(orders):.2f}"


CRITERIA = [c01, c02, c03, c04, c05, c06, c07, c08, c09, c10, c11, c12, c13, c14, c15, c16]


def check(k):
    ok, detail = CRITERIA[k - 1]()
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    return ok, detail


@pytest.mark.parametrize("k", range(1, 17))
def test_criterion(k):
    ok, detail = check(k)
    assert ok, detail


if __name__ == "__main__":
    picks = [int(a) for a in sys.argv[1:]] or range(1, 17)
    results = [check(k)[0] for k in picks]
    sys.exit(0 if all(results) else 1)
