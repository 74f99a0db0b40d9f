"""Unreduced trilinear finite elements on a graded box grid over the half ball (n = 3).

Used only to audit the axisymmetric reduction: the minimizer is computed
without any symmetry assumption and compared with its rotational average.
"""
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator
from scipy.special import roots_legendre

from .spectral import ParameterError, critical_exponent

_K1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
_M1 = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
# local vertex v = 4 i + 2 j + k for corner offsets (i, j, k)
_OFF = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)])


def _graded(count, R, power, symmetric):
    if symmetric:
        xi = np.linspace(-1.0, 1.0, count)
        return R * np.sign(xi) * np.abs(xi) ** power
    return R * np.linspace(0.0, 1.0, count) ** power


def _gauss(order):
    x, w = roots_legendre(order)
    return 0.5 * (x + 1), 0.5 * w


class CubeProblem:
    """Graded tensor grid on [0, R] x [-R, R]^2 restricted to the half ball.

    ``grid_size`` nodes along x_1 and ``grid_size`` (made odd so the axis is a
    grid line) along each transverse direction. Coordinates are R xi^power.
    """

    def __init__(self, grid_size=32, R=1.0, power=3.0, order=3, singular_order=10):
        if grid_size > 48:
            raise ParameterError(f"grid_size = {grid_size} exceeds 48")
        m = grid_size if grid_size % 2 else grid_size - 1
        self.R = float(R)
        self.x = _graded(grid_size, R, power, False)
        self.y = _graded(m, R, power, True)
        self.shape = (len(self.x), len(self.y), len(self.y))
        lo = np.stack(np.meshgrid(self.x[:-1], self.y[:-1], self.y[:-1], indexing="ij"), -1)
        hi = np.stack(np.meshgrid(self.x[1:], self.y[1:], self.y[1:], indexing="ij"), -1)
        keep = np.linalg.norm(0.5 * (lo + hi), axis=-1) < R
        self.elems = np.argwhere(keep)
        self.lo = lo[keep]
        self.size = (hi - lo)[keep]
        nx, ny, nz = self.shape
        ijk = self.elems[:, None, :] + _OFF[None]
        self.conn = (ijk[..., 0] * ny + ijk[..., 1]) * nz + ijk[..., 2]
        # a node is free iff all eight surrounding cells are kept and x_1 > 0
        full = np.zeros((nx + 1, ny + 1, nz + 1), dtype=bool)
        full[1:-1, 1:-1, 1:-1] = keep
        interior = np.ones((nx, ny, nz), dtype=bool)
        for i, j, k in _OFF:
            interior &= full[i:i + nx, j:j + ny, k:k + nz]
        interior[0] = False
        self.free = np.flatnonzero(interior.ravel())
        self.n_nodes = nx * ny * nz
        self._order = order
        self._singular = singular_order
        self._assemble()

    # -- assembly -----------------------------------------------------------
    def _templates(self):
        kxx = np.kron(np.kron(_K1, _M1), _M1)
        kyy = np.kron(np.kron(_M1, _K1), _M1)
        kzz = np.kron(np.kron(_M1, _M1), _K1)
        return kxx, kyy, kzz

    def _rule(self, order):
        t, w = _gauss(order)
        T = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)
        W = np.einsum("i,j,k->ijk", w, w, w).ravel()
        # trilinear shape functions at the points, vertex order as _OFF
        phi = np.prod(np.where(_OFF[None] == 1, T[:, None, :], 1 - T[:, None, :]), axis=-1)
        return T, W, phi

    def _points(self, sel, order):
        T, W, phi = self._rule(order)
        pts = self.lo[sel, None, :] + self.size[sel, None, :] * T[None]
        vol = np.prod(self.size[sel], axis=1)
        return pts, W[None] * vol[:, None], phi

    def _assemble(self):
        a, b, c = self.size.T
        kxx, kyy, kzz = self._templates()
        loc = ((b * c / a)[:, None, None] * kxx + (a * c / b)[:, None, None] * kyy
               + (a * b / c)[:, None, None] * kzz)
        rows = np.repeat(self.conn, 8, axis=1).ravel()
        cols = np.tile(self.conn, (1, 8)).ravel()
        N = self.n_nodes
        A = sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(N, N))
        # cells with a vertex at the origin get a high-order rule for the 1/|x|^2 weight
        near = np.all(self.lo * (self.lo + self.size) <= 0, axis=1)
        Bv = np.zeros((len(self.conn), 8, 8))
        qpts, qw, qj = [], [], []
        for sel, order in ((~near, self._order), (near, self._singular)):
            idx = np.flatnonzero(sel)
            if not len(idx):
                continue
            pts, w, phi = self._points(idx, order)
            inv = 1.0 / np.sum(pts ** 2, axis=-1)
            Bv[idx] = np.einsum("eq,qa,qb->eab", w * inv, phi, phi)
            qpts.append(pts.reshape(-1, 3))
            qw.append(w.ravel())
            qj.append((idx, phi))
        B = sp.csr_matrix((Bv.ravel(), (rows, cols)), shape=(N, N))
        f = self.free
        self.A = A[f][:, f].tocsc()
        self.B = B[f][:, f].tocsc()
        self.qpoints = np.concatenate(qpts)
        self.qweights = np.concatenate(qw)
        blocks = []
        for idx, phi in qj:
            Q = phi.shape[0]
            r = np.arange(len(idx) * Q)
            vals = np.tile(phi, (len(idx), 1))
            nodes = np.repeat(self.conn[idx], Q, axis=0)
            blocks.append(sp.csr_matrix((vals.ravel(), (np.repeat(r, 8), nodes.ravel())),
                                        shape=(len(r), N)))
        self.interp = sp.vstack(blocks).tocsr()[:, f]

    # -- quotient -----------------------------------------------------------
    def full(self, u):
        out = np.zeros(self.n_nodes)
        out[self.free] = u
        return out

    def minimize(self, gamma, s, options, seed=None):
        """min (u.A u - gamma u.B u) / (int |u|^p |x|^{-s})^{2/p} by K-preconditioned descent."""
        p = critical_exponent(3, s)
        K = (self.A - gamma * self.B).tocsc()
        lu = spla.splu(K)
        wq = self.qweights * np.linalg.norm(self.qpoints, axis=1) ** (-s)

        def F(u):
            uq = self.interp @ u
            val = float(wq @ np.abs(uq) ** p)
            grad = self.interp.T @ (p * wq * np.abs(uq) ** (p - 2) * uq)
            return val, grad

        nodes = self.node_coords()
        rad = np.linalg.norm(nodes, axis=1)
        rng = np.random.default_rng(seed)
        u0 = (nodes[:, 0] * np.maximum(self.R - rad, 0) / (0.05 + rad) ** 2)[self.free]
        if seed is not None:
            u0 = u0 * (1 + 0.05 * rng.standard_normal(len(u0)))
        u = u0
        val, g = F(u)
        u /= val ** (1 / p)
        hist = []
        it = 0
        el = np.inf
        converged = False
        for it in range(1, options.maxiter + 1):
            val, g = F(u)
            Ku = K @ u
            E = float(u @ Ku)
            J = E / val ** (2 / p)
            # u is normalized: stationarity is K u = (J / p) grad F
            w = lu.solve(g) * (J / p)
            el = math.sqrt(abs((u - w) @ (Ku - K @ w))) / math.sqrt(E)
            hist.append(J)
            if el < options.tol:
                converged = True
                break
            if len(hist) > options.window and \
                    abs(hist[-options.window - 1] - J) < options.rel_change * abs(J):
                break
            d = w - u
            t = 1.0
            while t > 1e-8:
                v = u + t * d
                vv, _ = F(v)
                Jv = float(v @ (K @ v)) / vv ** (2 / p)
                if Jv <= J - options.armijo * t * el ** 2 * J:
                    break
                t *= 0.5
            u = v / vv ** (1 / p)
        val, _ = F(u)
        J = float(u @ (K @ u)) / val ** (2 / p)
        uf = self.full(u)
        return {"mu": J, "el_residual": el, "iterations": it, "converged": converged,
                "angular_variation": self.angular_variation(uf), "minimizer": uf,
                "grid": list(self.shape), "n_free": int(len(self.free))}

    # -- symmetry -----------------------------------------------------------
    def node_coords(self):
        X, Y, Z = np.meshgrid(self.x, self.y, self.y, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def angular_average(self, uf, angles=24):
        f = RegularGridInterpolator((self.x, self.y, self.y), uf.reshape(self.shape),
                                    bounds_error=False, fill_value=0.0)
        P = self.node_coords()
        r = np.hypot(P[:, 1], P[:, 2])
        phi = np.arctan2(P[:, 2], P[:, 1])
        acc = np.zeros(len(P))
        for th in 2 * np.pi * np.arange(angles) / angles:
            acc += f(np.stack([P[:, 0], r * np.cos(phi + th), r * np.sin(phi + th)], axis=1))
        return acc / angles

    def lumped_volume(self):
        vol = np.prod(self.size, axis=1)
        out = np.zeros(self.n_nodes)
        np.add.at(out, self.conn.ravel(), np.repeat(vol / 8, 8))
        return out

    def angular_variation(self, uf, angles=24):
        """||u - Av u|| / ||u|| in the lumped L^2 norm; Av averages rotations about x_1."""
        avg = self.angular_average(uf, angles)
        m = self.lumped_volume()
        return float(np.sqrt(m @ (uf - avg) ** 2 / (m @ uf ** 2)))
