"""P1 finite element forms on the meridian section.

Integrals over the n-dimensional domain reduce to weighted integrals over
the meridian section, dx = w_{n-2} r^{n-2} dz dr.  Elements with a vertex at
the origin are integrated with a collapsed (Duffy) rule centred at the
origin whose radial part is Gauss-Jacobi for the factor t^{n-1-sigma}
produced by a weight |x|^{-sigma}; all other elements use a collapsed
Gauss rule of the same order.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .spectral import critical_exponent, sphere_area


@dataclass
class SymmetricOperator:
    matrix: sp.csr_matrix
    kind: str

    def __matmul__(self, v):
        return self.matrix @ v

    @property
    def shape(self):
        return self.matrix.shape

    def dump(self, path):
        """Coordinate text dump, one "row col value" triple per line."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# {self.kind} {coo.shape[0]} x {coo.shape[1]} nnz {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {float(v)!r}\n")


@lru_cache(maxsize=None)
def _gauss01(k):
    x, w = np.polynomial.legendre.leggauss(k)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=None)
def _jacobi01(k, beta):
    # nodes and weights for int_0^1 f(t) t^beta dt
    x, w = roots_jacobi(k, 0.0, beta)
    return (x + 1) / 2, w / 2 ** (beta + 1)


class Quadrature:
    """Per-element quadrature for integrands (smooth) * |x|^-sigma * r^{n-2}.

    ``points`` (E, Q, 2), ``weights`` (E, Q) including w_{n-2} r^{n-2} and
    |x|^-sigma, ``basis`` (E, Q, 3) barycentric values.
    """

    def __init__(self, mesh, sigma=0.0, order=8):
        self.sigma = sigma
        self.order = order
        m = mesh.n - 2
        omega = sphere_area(m)
        tris = mesh.tris
        p = mesh.nodes[tris]                                   # (E, 3, 2)
        touches = np.any(tris == mesh.origin, axis=1)
        k = order
        tu, wu = _gauss01(k)
        # collapsed rule on the reference triangle with the collapse at vertex 0
        T, U = np.meshgrid(tu, tu, indexing="ij")
        # generic elements: standard Gauss in t with weight t (Duffy Jacobian)
        tj, wj = _jacobi01(k, 1.0)
        Tg, Ug = np.meshgrid(tj, tu, indexing="ij")
        Wg = np.outer(wj, wu)
        lam = np.stack([1 - Tg, Tg * (1 - Ug), Tg * Ug], axis=-1).reshape(-1, 3)
        wref = Wg.ravel()
        E = len(tris)
        Q = len(wref)
        basis = np.broadcast_to(lam, (E, Q, 3)).copy()
        jw = np.broadcast_to(wref, (E, Q)).copy()
        # origin elements: put the origin vertex first and use Jacobi in t
        idx = np.flatnonzero(touches)
        if len(idx):
            beta = 1 + m - sigma
            # radial factors are polynomial once t^beta is in the rule: spend the points on the angle
            kr, ka = (k // 2, 2 * k) if k % 2 == 0 and k >= 4 else (k, k)
            to, wo = _jacobi01(kr, beta)
            ta, wa = _gauss01(ka)
            To, Uo = np.meshgrid(to, ta, indexing="ij")
            Wo = np.outer(wo, wa).ravel()
            lam_o = np.stack([1 - To, To * (1 - Uo), To * Uo], axis=-1).reshape(-1, 3)
            for e in idx:
                loc = int(np.flatnonzero(tris[e] == mesh.origin)[0])
                perm = [(loc + j) % 3 for j in range(3)]
                b = np.zeros((Q, 3))
                b[:, perm] = lam_o
                basis[e] = b
                # the Jacobi weight carries t^beta; rebuild it from |x| and r below
                jw[e] = Wo
        self.basis = basis
        self.points = np.einsum("eqk,ekd->eqd", basis, p)
        area2 = np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                       - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        z, r = self.points[..., 0], self.points[..., 1]
        rad = np.hypot(z, r)
        w = jw * area2[:, None] * omega
        gen = ~touches
        # Duffy Jacobian t was folded into the Jacobi(0, 1) weight
        w[gen] = w[gen] * r[gen] ** m * np.where(rad[gen] > 0, rad[gen], 1.0) ** (-sigma)
        if len(idx):
            # origin elements: t^beta = t^{1+m-sigma} came from the rule; the remaining factor
            # is (r/t)^m |x/t|^-sigma with t the collapse coordinate
            for e in idx:
                loc = int(np.flatnonzero(tris[e] == mesh.origin)[0])
                t = 1 - basis[e][:, loc]
                w[e] = w[e] * (r[e] / t) ** m * (rad[e] / t) ** (-sigma)
        self.weights = w
        self.touches = touches
        self.n = mesh.n
        self._tris = tris
        self._N = len(mesh.nodes)
        self.flat_weights = w.ravel()

    @cached_property
    def interp(self):
        """Sparse map from nodal values to values at all quadrature points, flattened (E*Q,)."""
        E, Q, _ = self.basis.shape
        rows = np.repeat(np.arange(E * Q), 3)
        cols = np.repeat(self._tris, Q, axis=0).ravel()
        return sp.csr_matrix((self.basis.reshape(-1), (rows, cols)), shape=(E * Q, self._N))


def quadrature(mesh, sigma=0.0, order=8):
    # cached on the mesh itself so the rules die with it
    cache = mesh.__dict__.setdefault("_quadrature_cache", {})
    key = (float(sigma), order)
    if key not in cache:
        cache[key] = Quadrature(mesh, sigma, order)
    return cache[key]


def gradients(mesh):
    """Constant P1 basis gradients per element, shape (E, 3, 2)."""
    p = mesh.nodes[mesh.tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # rows of inverse Jacobian transpose
    g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
    g0 = -g1 - g2
    return np.stack([g0, g1, g2], axis=1)


def _restrict(mesh, mat, kind):
    f = mesh.free
    return SymmetricOperator(mat.tocsr()[f][:, f].tocsr(), kind)


def _global(mesh, local):
    tris = mesh.tris
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    N = len(mesh.nodes)
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    mat.sum_duplicates()
    return 0.5 * (mat + mat.T)


def full_stiffness(mesh, order=8):
    q = quadrature(mesh, 0.0, order)
    G = gradients(mesh)
    vol = q.weights.sum(axis=1)
    local = np.einsum("eid,ejd->eij", G, G) * vol[:, None, None]
    return _global(mesh, local)


def full_mass(mesh, sigma=0.0, order=8, weight=None):
    q = quadrature(mesh, sigma, order)
    w = q.weights if weight is None else q.weights * weight(q.points)
    local = np.einsum("eqi,eqj,eq->eij", q.basis, q.basis, w)
    return _global(mesh, local)


def assemble_stiffness(mesh, n=None, order=8):
    """Galerkin matrix of int grad u . grad v over the free nodes."""
    return _restrict(mesh, full_stiffness(mesh, order), "stiffness")


def assemble_hardy(mesh, n=None, order=8):
    """Galerkin matrix of int u v / |x|^2 over the free nodes."""
    return _restrict(mesh, full_mass(mesh, 2.0, order), "hardy")


def assemble_mass(mesh, sigma=0.0, order=8):
    """Galerkin matrix of int u v / |x|^sigma over the free nodes."""
    return _restrict(mesh, full_mass(mesh, sigma, order), f"mass_sigma={sigma:g}")


def _full_field(mesh, u):
    u = np.asarray(u, dtype=float)
    if len(u) == len(mesh.nodes):
        return u, False
    if len(u) == mesh.n_free:
        return mesh.full(u), True
    raise ValueError(f"field has length {len(u)}; expected {len(mesh.nodes)} or {mesh.n_free}")


def hs_functional(mesh, n=None, s=0.0, u=None, order=8):
    """Value of int |u|^{2*(s)} / |x|^s and its gradient with respect to the nodal values."""
    p = critical_exponent(mesh.n, s)
    uf, was_free = _full_field(mesh, u)
    q = quadrature(mesh, s, order)
    uq = q.interp @ uf
    au = np.abs(uq)
    wp = q.flat_weights * au ** (p - 2)
    val = float(np.sum(wp * au * au))
    grad = q.interp.T @ (p * wp * uq)
    grad[mesh.dirichlet] = 0.0
    if was_free:
        grad = grad[mesh.free]
    return val, grad


def integrate(mesh, fn, sigma=0.0, order=8):
    """int fn(z, r) |x|^-sigma dx for a vectorised fn."""
    q = quadrature(mesh, sigma, order)
    return float(np.sum(q.weights * fn(q.points[..., 0], q.points[..., 1])))


def field_at_points(mesh, u, q):
    uf, _ = _full_field(mesh, u)
    return (q.interp @ uf).reshape(q.weights.shape)


def field_gradient(mesh, u):
    uf, _ = _full_field(mesh, u)
    return np.einsum("eid,ei->ed", gradients(mesh), uf[mesh.tris])


def load_vector(mesh, f, sigma=0.0, order=8):
    """Free-node vector of int f phi_i |x|^-sigma for f given at the quadrature points.

    ``f`` is a callable (z, r) -> values.
    """
    q = quadrature(mesh, sigma, order)
    vals = f(q.points[..., 0], q.points[..., 1]) * q.weights
    loc = np.einsum("eq,eqk->ek", vals, q.basis)
    b = np.bincount(mesh.tris.ravel(), loc.ravel(), minlength=len(mesh.nodes))
    return b[mesh.free]


# ----------------------------------------------------------------------------
# inequality checks

class PowerWeight:
    """rho = x_1 |x|^-alpha with its gradient and -Delta rho / rho = alpha (n - alpha) / |x|^2."""

    def __init__(self, alpha, n):
        self.alpha = alpha
        self.n = n

    def value(self, z, r):
        return z * np.hypot(z, r) ** (-self.alpha)

    def grad(self, z, r):
        a = self.alpha
        R2 = z * z + r * r
        base = R2 ** (-a / 2)
        return base * (1 - a * z * z / R2), -a * z * r * base / R2

    def potential(self, z, r):
        return self.alpha * (self.n - self.alpha) / (z * z + r * r)


def hardy_identity_residual(mesh, n=None, rho=None, v=None, order=8):
    """|LHS - RHS| / |RHS| for int |grad(rho v)|^2 - int (-Delta rho / rho)(rho v)^2 = int rho^2 |grad v|^2.

    The left side uses the assembled stiffness and weighted mass on the nodal
    interpolant of rho v; the right side is direct quadrature with v in P1.
    rho must be a PowerWeight (or provide value/grad/potential with alpha).
    """
    vf, _ = _full_field(mesh, v)
    if not np.any(vf):
        return 0.0
    z, r = mesh.nodes[:, 0], mesh.nodes[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rv = np.where(np.hypot(z, r) > 0, rho.value(z, r), 0.0) * vf
    if np.any(rho.value(z[vf != 0], r[vf != 0]) <= 0):
        raise ValueError("rho must be positive on the support of v")
    K = full_stiffness(mesh, order)
    c = rho.alpha * (mesh.n - rho.alpha)
    B = full_mass(mesh, 2.0, order)
    lhs = rv @ (K @ rv) - c * (rv @ (B @ rv))
    q = quadrature(mesh, 0.0, order)
    gv = field_gradient(mesh, vf)
    rq = rho.value(q.points[..., 0], q.points[..., 1])
    rhs = float(np.sum(q.weights * rq ** 2 * np.sum(gv ** 2, axis=1)[:, None]))
    return abs(lhs - rhs) / abs(rhs)


def ckn_margin(mesh, n=None, a=0.0, b=0.0, u=None, order=8):
    """RHS / LHS of (int |x|^{-bq} x_1^q |u|^q)^{2/q} <= C int x_1^2 |x|^{-2a} |grad u|^2 (k = 1)."""
    nn = mesh.n
    if not a < nn / 2.0:
        raise ValueError(f"a = {a} must be < n/2")
    if not 0 <= b - a <= 1:
        raise ValueError("need 0 <= b - a <= 1")
    qexp = 2.0 * nn / (nn - 2 + 2 * (b - a))
    uf, _ = _full_field(mesh, u)
    if not np.any(uf):
        return np.inf
    qa = quadrature(mesh, qexp * (b - 1), order)
    uq = field_at_points(mesh, uf, qa)
    z, r = qa.points[..., 0], qa.points[..., 1]
    rad = np.hypot(z, r)
    lhs = np.sum(qa.weights * (z / rad) ** qexp * np.abs(uq) ** qexp) ** (2.0 / qexp)
    qb = quadrature(mesh, 2 * a - 2, order)
    z, r = qb.points[..., 0], qb.points[..., 1]
    rad = np.hypot(z, r)
    gu = field_gradient(mesh, uf)
    rhs = np.sum(qb.weights * (z / rad) ** 2 * np.sum(gu ** 2, axis=1)[:, None])
    return float(rhs / lhs)


def field_weighted_mass(mesh, sigma, values, order=8):
    """Free-node matrix of int w u v / |x|^sigma with w given at the quadrature points."""
    q = quadrature(mesh, sigma, order)
    local = np.einsum("eqi,eqj,eq->eij", q.basis, q.basis, q.weights * values)
    return _global(mesh, local)[mesh.free][:, mesh.free].tocsr()
