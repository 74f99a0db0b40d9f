import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad

from conftest import bump
from hardylab.assembly import (PowerWeight, assemble_hardy, assemble_mass, assemble_stiffness, ckn_margin,
                               full_mass, full_stiffness, hardy_identity_residual, hs_functional, integrate,
                               quadrature)
from hardylab.domain import make_domain
from hardylab.mesh import MeshOptions, generate_mesh
from hardylab.spectral import critical_exponent


def _pappus_volume(mesh):
    # solid of revolution of the polygonal section: 2 pi * centroid radius * area per triangle
    p = mesh.nodes[mesh.tris]
    area = 0.5 * np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    return float(np.sum(2 * np.pi * p[:, :, 1].mean(axis=1) * area))


@pytest.fixture(scope="module")
def coarse():
    return generate_mesh(make_domain("half_ball"), options=MeshOptions(h=0.3, layers=2))


def test_operators_symmetric(half_ball_mesh):
    for op in (assemble_stiffness(half_ball_mesh), assemble_hardy(half_ball_mesh),
               assemble_mass(half_ball_mesh, 1.0), assemble_mass(half_ball_mesh, 0.0)):
        A = op.matrix
        assert spla.norm(A - A.T) <= 1e-14 * spla.norm(A)
        assert np.all(np.isfinite(A.data))


def test_mass_forms_positive_definite(half_ball_mesh):
    for op in (assemble_hardy(half_ball_mesh), assemble_mass(half_ball_mesh, 1.0),
               assemble_mass(half_ball_mesh, 0.0)):
        lam = spla.eigsh(op.matrix, k=1, sigma=0, which="LM", return_eigenvectors=False)[0]
        assert lam > 0
    lam = spla.eigsh(assemble_stiffness(half_ball_mesh).matrix, k=1, sigma=0, which="LM",
                     return_eigenvectors=False)[0]
    assert lam > 0


def test_constants_in_stiffness_kernel(half_ball_mesh):
    K = full_stiffness(half_ball_mesh)
    one = np.ones(K.shape[0])
    assert np.max(np.abs(K @ one)) < 1e-12 * spla.norm(K)
    # symmetric and positive semidefinite on the full (Neumann) space
    lam = spla.eigsh(K, k=2, which="SA", return_eigenvectors=False)
    assert lam.min() > -1e-10 * spla.norm(K)


def test_grad_z_squared_is_volume():
    for h in (0.1, 0.05):
        mesh = generate_mesh(make_domain("half_ball"), options=MeshOptions(h=h, layers=6))
        z = mesh.nodes[:, 0]
        val = z @ (full_stiffness(mesh) @ z)
        assert val == pytest.approx(_pappus_volume(mesh), rel=1e-8)
    # the polygonal section converges to the half ball
    assert val == pytest.approx(2 * np.pi / 3, rel=5e-3)


def test_hardy_form_against_adaptive_quadrature(coarse):
    z = coarse.nodes[:, 0]
    val = z @ (full_mass(coarse, 2.0) @ z)
    total = 0.0
    for tri in coarse.nodes[coarse.tris]:
        order = np.argsort(tri[:, 0])
        a, b, c = tri[order]

        def edge(p, q):
            return lambda x: p[1] + (q[1] - p[1]) * (x - p[0]) / (q[0] - p[0]) if q[0] != p[0] else p[1]

        def f(r, x):
            return 2 * np.pi * r * x * x / (x * x + r * r) if x * x + r * r > 0 else 0.0

        for lo_x, hi_x, e1, e2 in ((a[0], b[0], edge(a, b), edge(a, c)), (b[0], c[0], edge(b, c), edge(a, c))):
            if hi_x - lo_x < 1e-15:
                continue
            lo = lambda x, e1=e1, e2=e2: min(e1(x), e2(x))
            hi = lambda x, e1=e1, e2=e2: max(e1(x), e2(x))
            total += dblquad(f, lo_x, hi_x, lo, hi, epsabs=1e-13, epsrel=1e-11)[0]
    assert val == pytest.approx(total, rel=1e-6)


def test_order_doubling_near_origin(half_ball_mesh):
    mesh = half_ball_mesh
    touch = np.any(mesh.tris == mesh.origin, axis=1)
    for sigma in (2.0, 1.0, 0.0):
        q8, q16 = quadrature(mesh, sigma, 8), quadrature(mesh, sigma, 16)
        for q in (q8,):
            assert np.all(q.weights[touch] > 0)

        def local(q):
            return np.einsum("eqi,eqj,eq->eij", q.basis, q.basis, q.weights)

        l8, l16 = local(q8)[touch], local(q16)[touch]
        assert np.max(np.abs(l8 - l16) / np.abs(l16)) < 1e-8


def test_order_stable_away_from_origin(half_ball_mesh):
    mesh = half_ball_mesh
    away = ~np.any(mesh.tris == mesh.origin, axis=1)
    for sigma in (2.0, 1.0, 0.0):
        a = quadrature(mesh, sigma, 8).weights[away].sum(axis=1)
        b = quadrature(mesh, sigma, 16).weights[away].sum(axis=1)
        assert np.max(np.abs(a - b) / b) < 1e-8


def test_quadrature_exact_for_affine_squares_in_n4():
    # r^{n-2} (affine)^2 with n = 4 is a quartic: exact for the collapsed Gauss rule of order 4 and 8
    mesh = generate_mesh(make_domain("half_ball", n=4), options=MeshOptions(h=0.2, layers=3))
    away = ~np.any(mesh.tris == mesh.origin, axis=1)
    f = lambda z, r: (1 + 2 * z - r) ** 2
    a = quadrature(mesh, 0.0, 4)
    b = quadrature(mesh, 0.0, 8)
    va = np.sum(a.weights[away] * f(a.points[away][..., 0], a.points[away][..., 1]))
    vb = np.sum(b.weights[away] * f(b.points[away][..., 0], b.points[away][..., 1]))
    assert va == pytest.approx(vb, rel=1e-13)
    assert np.all(a.weights > 0) and np.all(b.weights > 0)


def test_integrate_volume_n3(half_ball_mesh):
    assert integrate(half_ball_mesh, lambda z, r: np.ones_like(z)) == pytest.approx(
        _pappus_volume(half_ball_mesh), rel=1e-12)


def test_hs_functional_zero(half_ball_mesh):
    val, grad = hs_functional(half_ball_mesh, s=1.0, u=np.zeros(half_ball_mesh.n_free))
    assert val == 0.0 and not np.any(grad)


@pytest.mark.parametrize("s", [0.0, 1.0, 1.5])
def test_hs_functional_gradient_fd(half_ball_mesh, rng, s):
    m = half_ball_mesh
    for _ in range(4):
        u = rng.normal(size=m.n_free)
        v = rng.normal(size=m.n_free)
        _, g = hs_functional(m, s=s, u=u)
        ex = g @ v
        errs = []
        for h in (1e-3, 1e-5):
            fd = (hs_functional(m, s=s, u=u + h * v)[0] - hs_functional(m, s=s, u=u - h * v)[0]) / (2 * h)
            errs.append(abs(fd - ex) / abs(ex))
        assert errs[1] < 1e-5


@given(st.floats(-5.0, 5.0).filter(lambda c: abs(c) > 1e-3), st.sampled_from([0.0, 0.5, 1.0, 1.9]))
@settings(max_examples=25, deadline=None)
def test_hs_functional_homogeneity(half_ball_mesh, c, s):
    u = np.random.default_rng(7).normal(size=half_ball_mesh.n_free)
    p = critical_exponent(3, s)
    a = hs_functional(half_ball_mesh, s=s, u=c * u)[0]
    b = abs(c) ** p * hs_functional(half_ball_mesh, s=s, u=u)[0]
    assert abs(a - b) <= 1e-12 * b


def test_hs_functional_full_and_free_agree(half_ball_mesh, rng):
    u = rng.normal(size=half_ball_mesh.n_free)
    a, ga = hs_functional(half_ball_mesh, s=1.0, u=u)
    b, gb = hs_functional(half_ball_mesh, s=1.0, u=half_ball_mesh.full(u))
    assert a == b and np.array_equal(ga, gb[half_ball_mesh.free])


def test_hardy_identity_zero_field(half_ball_mesh):
    assert hardy_identity_residual(half_ball_mesh, rho=PowerWeight(1.5, 3),
                                   v=np.zeros(len(half_ball_mesh.nodes))) == 0.0


def test_hardy_identity_random_fields_converge(rng):
    dom = make_domain("half_ball")
    meshes = [generate_mesh(dom, options=MeshOptions(h=0.1, layers=4, refine=k)) for k in range(2)]
    for _ in range(3):
        c = (rng.uniform(0.4, 0.6), rng.uniform(0.0, 0.3))
        amp = rng.normal(size=3)
        res = []
        for m in meshes:
            z, r = m.nodes[:, 0], m.nodes[:, 1]
            v = bump(m, c, 0.25) * (1 + 0.3 * amp[0] * z + 0.3 * amp[1] * r + 0.3 * amp[2] * z * r)
            res.append(hardy_identity_residual(m, rho=PowerWeight(1.5, 3), v=v, order=5))
        assert 2.5 < res[0] / res[1] < 5.5


def test_hardy_identity_rejects_nonpositive_rho(half_ball_mesh):
    class Negative(PowerWeight):
        def value(self, z, r):
            return -super().value(z, r)

    with pytest.raises(ValueError):
        hardy_identity_residual(half_ball_mesh, rho=Negative(1.5, 3), v=bump(half_ball_mesh))


def test_ckn_margin_random_fields(half_ball_mesh, rng):
    m = half_ball_mesh
    z, r = m.nodes[:, 0], m.nodes[:, 1]
    margins = []
    for k in range(50):
        a = rng.uniform(-1.0, 1.4)
        b = a + rng.uniform(0.0, 1.0)
        coef = rng.normal(size=4)
        u = (1 - z * z - r * r) * z * (coef[0] + coef[1] * z + coef[2] * r ** 2 + coef[3] * np.sin(5 * z))
        u = np.where(m.dirichlet, 0.0, u)
        margins.append(ckn_margin(m, a=a, b=b, u=u))
    assert min(margins) > 0 and np.all(np.isfinite(margins))


def test_ckn_margin_zero_and_homogeneity(half_ball_mesh, rng):
    m = half_ball_mesh
    assert ckn_margin(m, a=0.5, b=1.0, u=np.zeros(m.n_free)) == math.inf
    u = rng.uniform(0, 1, m.n_free)
    base = ckn_margin(m, a=0.5, b=1.0, u=u)
    for c in (-3.0, 0.01, 250.0):
        assert ckn_margin(m, a=0.5, b=1.0, u=c * u) == pytest.approx(base, rel=1e-12)


def test_ckn_margin_preconditions(half_ball_mesh):
    u = np.ones(half_ball_mesh.n_free)
    with pytest.raises(ValueError):
        ckn_margin(half_ball_mesh, a=1.5, b=1.5, u=u)
    with pytest.raises(ValueError):
        ckn_margin(half_ball_mesh, a=0.0, b=1.5, u=u)


def test_operator_dump(tmp_path, coarse):
    op = assemble_hardy(coarse)
    p = tmp_path / "B.txt"
    op.dump(p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# hardy")
    rows = np.array([[float(x) for x in l.split()] for l in lines[1:]])
    A = op.matrix.tocoo()
    assert len(rows) == A.nnz
    assert np.array_equal(rows[:, 2], A.data)
