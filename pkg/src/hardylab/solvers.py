"""Variational solvers: Hardy constant, first eigenvalue, Hardy-Sobolev quotient."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .mesh import MeshOptions, generate_mesh
from .spectral import ParameterError, critical_exponent, sobolev_constant


class SolverError(RuntimeError):
    pass


@dataclass
class QuotientResult:
    value: float
    minimizer: np.ndarray            # full nodal vector
    el_residual: float
    lagrange_multiplier: float
    iterations: int
    converged: bool
    kind: str = ""
    mesh: object = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def summary(self):
        out = {"kind": self.kind, "value": self.value, "el_residual": self.el_residual,
               "lagrange_multiplier": self.lagrange_multiplier, "iterations": self.iterations,
               "converged": self.converged}
        if self.mesh is not None:
            out["nodes"] = int(len(self.mesh.nodes))
            out["h_min"] = self.mesh.h_min()
        out.update({k: v for k, v in self.diagnostics.items() if np.isscalar(v)})
        return out


@dataclass
class GapReport:
    mu_domain: float
    mu_halfspace: float
    gap: float
    predicts_extremal: bool
    regime: str
    decision_margin: float

    def summary(self):
        return dict(self.__dict__)


class Forms:
    """Assembled free-node operators of one mesh, built lazily."""

    def __init__(self, mesh):
        self.mesh = mesh
        self._cache = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def A(self):
        return self._get("A", lambda: assembly.assemble_stiffness(self.mesh).matrix)

    @property
    def B(self):
        return self._get("B", lambda: assembly.assemble_hardy(self.mesh).matrix)

    @property
    def M(self):
        return self._get("M", lambda: assembly.assemble_mass(self.mesh, 0.0).matrix)

    def K(self, gamma):
        return (self.A - gamma * self.B).tocsc()


def forms(mesh):
    f = mesh.__dict__.get("_forms")
    if f is None:
        f = mesh.__dict__["_forms"] = Forms(mesh)
    return f


def _mesh_for(domain_or_mesh, options):
    if hasattr(domain_or_mesh, "tris"):
        return domain_or_mesh
    opt = options or MeshOptions()
    return generate_mesh(domain_or_mesh, opt.h, None, opt)


# ----------------------------------------------------------------------------
# linear eigenproblems

def inverse_iteration(K, M, shift=0.0, tol=1e-10, maxiter=2000, x0=None, method="lanczos"):
    """Smallest eigenpair of K x = lam M x with K - shift M positive definite.

    ``method="lanczos"`` uses ARPACK in shift-invert mode around ``shift``
    (one sparse LU); ``method="cg"`` is plain inverse iteration with Jacobi
    preconditioned CG inner solves.
    Returns (lam, x, iterations) with x normalized to x^T M x = 1 and sum(x) >= 0.
    """
    N = K.shape[0]
    x = np.ones(N) if x0 is None else np.asarray(x0, dtype=float).copy()
    S = (K - shift * M).tocsc()
    if method == "lanczos":
        lu = spla.splu(S)
        op = spla.LinearOperator((N, N), matvec=lu.solve, dtype=float)
        try:
            vals, vecs = spla.eigsh(K, k=1, M=M, sigma=shift, which="LM", OPinv=op,
                                    v0=x, tol=tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"eigensolver did not converge: {exc}") from exc
        lam = float(vals[0])
        x = vecs[:, 0]
        it = -1
    elif method == "cg":
        dinv = 1.0 / S.diagonal()
        pre = spla.LinearOperator((N, N), matvec=lambda v: dinv * v, dtype=float)
        x /= np.sqrt(x @ (M @ x))
        lam = (x @ (K @ x))
        for it in range(1, maxiter + 1):
            y, info = spla.cg(S, M @ x, x0=x / max(lam - shift, 1e-300), rtol=tol * 1e-2,
                              maxiter=10 * N, M=pre)
            if info < 0:
                raise SolverError("conjugate gradient breakdown in inverse iteration")
            y /= np.sqrt(y @ (M @ y))
            new = y @ (K @ y)
            if abs(new - lam) <= tol * abs(new):
                x, lam = y, new
                break
            x, lam = y, new
        else:
            raise SolverError(f"inverse iteration did not converge in {maxiter} steps")
    else:
        raise ValueError(f"unknown method {method!r}")
    if x.sum() < 0:
        x = -x
    x = x / np.sqrt(x @ (M @ x))
    return lam, x, it


def hardy_on_mesh(mesh, method="lanczos"):
    """Discrete gamma_H: smallest eigenvalue of A u = gamma B u."""
    F = forms(mesh)
    shift = (mesh.n - 2) ** 2 / 4.0
    lam, x, it = inverse_iteration(F.A, F.B, shift=shift, method=method)
    res = np.linalg.norm(F.A @ x - lam * (F.B @ x)) / np.linalg.norm(F.A @ x)
    return QuotientResult(lam, mesh.full(x), float(res), lam, it, True, "gamma_H", mesh)


def hardy_constant(domain, mesh_options=None, method="lanczos"):
    """gamma_H(domain) on a mesh built from ``mesh_options``."""
    return hardy_on_mesh(_mesh_for(domain, mesh_options), method)


def hardy_ladder(domain, mesh_options=None, levels=3):
    opt = mesh_options or MeshOptions()
    return [hardy_constant(domain, opt.level(opt.refine + k)) for k in range(levels)]


def first_eigenvalue(domain, gamma, mesh_options=None, gamma_h=None):
    """lambda_1 of -Delta - gamma/|x|^2 with Dirichlet data; requires gamma < gamma_H."""
    mesh = _mesh_for(domain, mesh_options)
    F = forms(mesh)
    if gamma_h is None:
        gamma_h = hardy_on_mesh(mesh).value
    if gamma >= gamma_h:
        raise ParameterError(f"gamma = {gamma} is not below the computed gamma_H = {gamma_h:.6g}")
    shift = min(0.0, (mesh.n - 2) ** 2 / 4.0 - gamma)   # K + |shift| M is safe
    K = F.K(gamma)
    lam, x, it = inverse_iteration(K, F.M, shift=shift)
    res = np.linalg.norm(K @ x - lam * (F.M @ x)) / np.linalg.norm(K @ x)
    out = QuotientResult(lam, mesh.full(x), float(res), lam, it, True, "lambda_1", mesh)
    out.diagnostics["gamma_H"] = gamma_h
    out.diagnostics["min_interior"] = float(x.min())
    return out


# ----------------------------------------------------------------------------
# Hardy-Sobolev quotient

@dataclass
class SolverOptions:
    tol: float = 1e-6              # Euler-Lagrange residual
    rel_change: float = 1e-9       # over `window` iterations
    window: int = 10
    maxiter: int = 5000
    armijo: float = 1e-4
    x0: object = None              # optional starting field (free or full)


def _normalize(mesh, s, u):
    val, _ = assembly.hs_functional(mesh, s=s, u=u)
    p = critical_exponent(mesh.n, s)
    return u / val ** (1.0 / p)


def concentration(mesh, s, u):
    """(fraction, index) of localisation of |u|^{2*}/|x|^s around its peak.

    fraction: share of the integral inside B(x_peak, 0.1 diam).
    index: diam / r_half with r_half the radius about x_peak holding half of it.
    """
    q = assembly.quadrature(mesh, s)
    p = critical_exponent(mesh.n, s)
    uq = assembly.field_at_points(mesh, u, q)
    dens = (q.weights * np.abs(uq) ** p).ravel()
    pts = q.points.reshape(-1, 2)
    uf = u if len(u) == len(mesh.nodes) else mesh.full(u)
    peak = mesh.nodes[int(np.argmax(np.abs(uf)))]
    dist = np.hypot(pts[:, 0] - peak[0], pts[:, 1] - peak[1])
    diam = float(np.ptp(mesh.nodes[:, 0]) + 0.0)
    diam = max(diam, float(2 * np.ptp(mesh.nodes[:, 1])))
    total = dens.sum()
    frac = float(dens[dist < 0.1 * diam].sum() / total)
    order = np.argsort(dist)
    cum = np.cumsum(dens[order])
    r_half = float(dist[order][np.searchsorted(cum, 0.5 * total)])
    return frac, diam / max(r_half, 1e-300), peak


def _dilate(mesh, uf, center, lam):
    """lam^{(n-2)/2} u(c + lam (x - c)) re-interpolated on the nodes (zero outside)."""
    cache = mesh.core.setdefault("dilations", {})
    key = (round(float(center[0]), 14), round(float(center[1]), 14), round(float(lam), 14))
    T = cache.get(key)
    if T is None:
        if len(cache) > 64:
            cache.clear()
        T = mesh.interpolation_matrix(center + lam * (mesh.nodes - center))
        cache[key] = T
    v = lam ** ((mesh.n - 2) / 2.0) * (T @ uf)
    v[mesh.dirichlet] = 0.0
    return np.abs(v)


def _newton_step(mesh, K, P, s, p, u, mu, r, g, J, tau):
    """Levenberg-damped Newton step for J on {int |u|^p / |x|^s = 1}.

    Solves (H + tau P) d = -(r + nu g) with g . d = 0, where
    H = K - mu (p-1) W is half the Hessian of J and W the |u|^{p-2} weighted
    mass.  tau grows tenfold until the step lowers J.
    Returns (u, J, tau) or (None, mu, tau) if no damping gave descent.
    """
    q = assembly.quadrature(mesh, s)
    uq = assembly.field_at_points(mesh, mesh.full(u), q)
    W = assembly.field_weighted_mass(mesh, s, np.abs(uq) ** (p - 2))
    H = K - mu * (p - 1) * W
    while tau <= 1e8:
        lu = spla.splu((H + tau * P).tocsc())
        a = lu.solve(r)
        b = lu.solve(g)
        d = -(a - (g @ a) / (g @ b) * b)
        cand = _normalize(mesh, s, np.abs(u + d))
        jc = J(cand)
        if jc < mu:
            return cand, jc, max(tau / 10, 1e-12)
        tau *= 10
    return None, mu, tau


def minimize_quotient(domain, gamma, s, mesh_options=None, solver_options=None, gamma_h=None):
    """mu_{gamma,s}: infimum of (int |grad u|^2 - gamma int u^2/|x|^2) / (int |u|^p/|x|^s)^{2/p}.

    Three phases on {int |u|^p/|x|^s = 1}, each iterate replaced by |u|:

    * preconditioned projected gradient with Armijo backtracking; every
      ``window`` iterations the iterate is also offered dilations about the
      origin and about its peak (kept only if J drops), which carries
      concentrating sequences quickly through the scales of the graded mesh;
    * damped Newton once the dilations stop paying off;
    * ``window`` further gradient iterations to confirm the value is stationary.

    The preconditioner is K = A - gamma B when gamma lies below the mesh's
    gamma_H, and A - (n-2)^2/4 B otherwise.
    """
    mesh = _mesh_for(domain, mesh_options)
    n = mesh.n
    if not gamma < n * n / 4.0:
        raise ParameterError(f"gamma = {gamma} must be < n^2/4")
    if not 0 <= s < 2:
        raise ParameterError(f"s = {s} must lie in [0, 2)")
    opt = solver_options or SolverOptions()
    p = critical_exponent(n, s)
    F = forms(mesh)
    K = F.K(gamma)
    safe = (n - 2) ** 2 / 4.0
    if gamma_h is None and gamma > safe:
        gamma_h = hardy_on_mesh(mesh).value
    g_pre = gamma if (gamma <= safe or gamma < gamma_h) else safe
    P = F.K(g_pre)
    lu = spla.splu(P.tocsc())

    if opt.x0 is not None:
        u = np.asarray(opt.x0, dtype=float)
        if len(u) == len(mesh.nodes):
            u = u[mesh.free]
        u = np.abs(u)
    else:
        u = np.abs(lu.solve(F.M @ np.ones(mesh.n_free)))
    u = _normalize(mesh, s, u)

    def J(v):
        val, _ = assembly.hs_functional(mesh, s=s, u=v)
        return (v @ (K @ v)) / val ** (2.0 / p)

    step_ln = mesh.core.get("step", np.log(10) / 5)
    factors = [np.exp(sg * k * step_ln) for k in (1, 2, 4, 8) for sg in (1, -1)]
    hist = []
    el = np.inf
    converged = False
    phase = "gradient"
    it = 0
    t_last = 0.5
    tau = 1e-3
    moves = newton = 0
    quiet = 0                    # consecutive dilation rounds without improvement
    for it in range(1, opt.maxiter + 1):
        _, g = assembly.hs_functional(mesh, s=s, u=u)
        mu = u @ (K @ u)
        r = K @ u - (mu / p) * g
        el = float(np.sqrt(max(r @ lu.solve(r), 0.0)) / np.sqrt(abs(u @ (P @ u))))
        hist.append(mu)
        if (el < opt.tol and len(hist) > opt.window
                and abs(hist[-1] - hist[-1 - opt.window]) <= opt.rel_change * abs(hist[-1])):
            converged = True
            break
        if phase == "newton" and el < opt.tol:
            phase = "confirm"
        if phase == "gradient" and it % opt.window == 0:
            uf = mesh.full(u)
            peak = mesh.nodes[int(np.argmax(uf))].copy()
            peak[1] = 0.0
            best, best_j = None, mu
            for c in (np.zeros(2), peak):
                for lam in factors:
                    cand = _dilate(mesh, uf, c, lam)[mesh.free]
                    if np.any(cand):
                        jc = J(cand)
                        if jc < best_j - 1e-12 * abs(best_j):
                            best, best_j = cand, jc
            if best is not None:
                u = _normalize(mesh, s, best)
                moves += 1
                quiet = 0
                continue
            quiet += 1
            if quiet >= 2:
                phase = "newton"
        if phase == "newton":
            cand, jc, tau = _newton_step(mesh, K, P, s, p, u, mu, r, g, J, tau)
            if cand is not None:
                u = cand
                newton += 1
                continue
            phase = "confirm"
        grad = 2 * r
        d = -lu.solve(grad)
        slope = grad @ d
        t = min(1.0, 2 * t_last)
        while True:
            cand = _normalize(mesh, s, np.abs(u + t * d))
            jc = J(cand)
            if jc <= mu + opt.armijo * t * slope or t < 1e-12:
                break
            t *= 0.5
        if jc <= mu:
            u = cand
            t_last = t
        elif phase == "confirm" and el >= opt.tol:
            phase = "newton"
    u = _normalize(mesh, s, u)
    mu = float(u @ (K @ u))
    val, _ = assembly.hs_functional(mesh, s=s, u=u)
    if abs(val - 1) > 1e-8:
        raise SolverError(f"constraint drift {abs(val - 1):.2e}")
    frac, index, peak = concentration(mesh, s, u)
    res = QuotientResult(mu, mesh.full(u), el, mu, it, converged, "mu", mesh)
    res.diagnostics.update(gamma=gamma, s=s, concentration_fraction=frac, concentration_index=index,
                           peak_z=float(peak[0]), peak_r=float(peak[1]), preconditioner_gamma=g_pre,
                           dilation_moves=moves, newton_steps=newton)
    if gamma_h is not None:
        res.diagnostics["gamma_H"] = gamma_h
    return res


def halfspace_reference(n, gamma, s, mesh_options=None, levels=3, solver_options=None):
    """mu_{gamma,s}(R^n_+), from the half-ball ladder (scale invariance) or analytically.

    Returns (value, ladder, flags).  For s = 0, gamma <= 0 the value is
    1/K(n,2)^2 and the ladder is empty.
    """
    from .domain import make_domain
    if s == 0 and gamma <= 0:
        return sobolev_constant(n), [], {"analytic": True}
    dom = make_domain("half_ball", n=n, R=1.0)
    opt = mesh_options or MeshOptions()
    ladder = []
    for k in range(levels):
        r = minimize_quotient(dom, gamma, s, opt.level(opt.refine + k), solver_options)
        ladder.append(r)
    vals = [r.value for r in ladder]
    flags = {"analytic": False,
             "monotone": bool(all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:])))}
    if s == 0:
        flags["open_case"] = True
    return vals[-1], ladder, flags


def existence_gap(domain, gamma, s, mesh_options=None, decision_margin=0.02, mu_halfspace=None,
                  solver_options=None):
    mu_d = minimize_quotient(domain, gamma, s, mesh_options, solver_options)
    if mu_halfspace is None:
        mu_halfspace = halfspace_reference(domain.n, gamma, s, mesh_options, levels=1)[0]
    gap = mu_halfspace - mu_d.value
    regime = "positive" if mu_d.value > 0 else ("negative" if mu_d.value < 0 else "degenerate")
    margin = decision_margin * abs(mu_halfspace)
    return GapReport(mu_d.value, mu_halfspace, gap, bool(gap > margin), regime, decision_margin), mu_d


# ----------------------------------------------------------------------------
# 3D audit

def symmetry_audit(gamma, s, grid_size=32, R=1.0, solver_options=None, seed=None,
                   mesh_options=None):
    """Unreduced Q1 finite elements on a tensor grid over the half ball of radius R (n = 3).

    The grid is graded towards the origin; elements are kept when their
    centre lies inside the half ball. Reports mu from the 3D solve, the
    axisymmetric mu on the same domain, their relative difference and the
    angular variation ||u - Av u|| / ||u|| (average over rotations about x_1).
    """
    from .cube import CubeProblem
    from .domain import half_ball
    prob = CubeProblem(grid_size, R)
    res = prob.minimize(gamma, s, solver_options or SolverOptions(maxiter=600), seed=seed)
    axi = minimize_quotient(half_ball(R), gamma, s,
                            mesh_options or MeshOptions(h=0.1, layers=8, refine=1))
    res["mu_axisymmetric"] = axi.value
    res["relative_difference"] = abs(res["mu"] - axi.value) / abs(axi.value)
    return res
