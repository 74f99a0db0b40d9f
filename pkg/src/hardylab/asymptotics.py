"""Boundary profiles, singular approximate solutions, boundary and interior masses."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
import scipy.linalg as sla

from . import assembly
from .mesh import MeshOptions, generate_mesh
from .solvers import forms, hardy_on_mesh
from .spectral import ParameterError, alpha_exponents, fd_laplacian, sphere_area


class FitError(ValueError):
    pass


# ----------------------------------------------------------------------------
# fields as functions

class MeshField:
    """A P1 field on a mesh, callable on points of R^n (shape (N, n)) or on (z, r)."""

    def __init__(self, mesh, values):
        self.mesh = mesh
        v = np.asarray(values, dtype=float)
        self.values = mesh.full(v) if len(v) == mesh.n_free else v

    def meridian(self, z, r):
        pts = np.stack([np.ravel(z), np.ravel(r)], axis=1)
        return self.mesh.interpolate(self.values, pts).reshape(np.shape(z))

    def __call__(self, x):
        x = np.atleast_2d(x)
        return self.meridian(x[:, 0], np.linalg.norm(x[:, 1:], axis=1))


def _on_axis(u, t, n):
    """u(t e_1) for a MeshField, a (mesh, values) pair or a callable on R^n points."""
    if isinstance(u, tuple):
        u = MeshField(*u)
    if isinstance(u, MeshField):
        return u.meridian(t, np.zeros_like(t))
    pts = np.zeros((len(t), n))
    pts[:, 0] = t
    return np.asarray(u(pts), dtype=float)


# ----------------------------------------------------------------------------
# profile fits

@dataclass
class ProfileFit:
    alpha: float
    K: float
    window: tuple
    slope: float
    model_slope: float
    slope_deviation: float
    residual: float
    samples: np.ndarray = field(repr=False, default=None)   # columns t, u, model

    def summary(self):
        return {"alpha": self.alpha, "K": self.K, "window": list(self.window), "slope": self.slope,
                "model_slope": self.model_slope, "slope_deviation": self.slope_deviation,
                "residual": self.residual}


def default_window(mesh, domain=None):
    """[r_min, r_max]: r_min skips the two innermost core rings, r_max = 0.2 diam."""
    radii = np.sort(mesh.core["radii"])
    r_min = max(4 * mesh.h_min(), radii[min(2, len(radii) - 1)])
    dom = domain if domain is not None else mesh.domain
    diam = dom.diameter() if dom is not None else float(np.ptp(mesh.nodes[:, 0]))
    return r_min, 0.2 * diam


def _window_samples(u, window, n, mesh=None, count=24):
    lo, hi = window
    if not 0 < lo < hi:
        raise FitError(f"empty fitting window [{lo}, {hi}]")
    t = None
    if mesh is not None:
        ax = mesh.axis & ~mesh.dirichlet
        zt = mesh.nodes[ax, 0]
        zt = np.sort(zt[(zt >= lo) & (zt <= hi)])
        if len(zt) >= 12:
            t = zt
    if t is None:
        t = np.geomspace(lo, hi, count)
    return t, _on_axis(u, t, n)


def profile_fit(u, domain, alpha, window=None, mesh=None):
    """Fit u(t e_1) ~ d(t e_1) t^{-alpha} (K + c t^{kappa}) on the window.

    ``u`` is a MeshField, a (mesh, values) pair or a callable on R^n points.
    kappa = alpha_+ - alpha_- of the gamma with alpha(n - alpha) = gamma;
    K is the intercept and ``slope`` the log-log slope of u along the axis.
    """
    n = domain.n
    if isinstance(u, tuple):
        u = MeshField(*u)
    if mesh is None and isinstance(u, MeshField):
        mesh = u.mesh
    if window is None:
        if mesh is None:
            raise FitError("a window is required for functions without a mesh")
        window = default_window(mesh, domain)
    t, ut = _window_samples(u, window, n, mesh)
    if not np.any(ut):
        raise FitError("u vanishes on the fitting window")
    dist = np.array([domain.meridian_distance(ti, 0.0) for ti in t])
    qv = ut / (dist * t ** (-alpha))
    kappa = abs(n - 2 * alpha)
    X = np.stack([np.ones_like(t), t ** kappa], axis=1) if kappa > 1e-9 else np.ones((len(t), 1))
    coef, *_ = np.linalg.lstsq(X, qv, rcond=None)
    model = (X @ coef) * dist * t ** (-alpha)
    good = ut > 0
    if np.count_nonzero(good) < 2:
        raise FitError("u is not positive on the fitting window")
    slope = float(np.polyfit(np.log(t[good]), np.log(ut[good]), 1)[0])
    res = float(np.linalg.norm(model - ut) / np.linalg.norm(ut))
    return ProfileFit(alpha, float(coef[0]), (float(window[0]), float(window[1])), slope, 1 - alpha,
                      slope - (1 - alpha), res, np.stack([t, ut, model], axis=1))


def two_profile_fit(u, n, gamma, window, count=40):
    """Least-squares (lambda_-, lambda_+) with u(t e_1) ~ lambda_- t^{1-a_-} + lambda_+ t^{1-a_+}."""
    am, ap = alpha_exponents(n, gamma)
    if ap - am < 0.05:
        raise FitError(f"alpha_+ - alpha_- = {ap - am:.3g} < 0.05: the two profiles are not separable")
    mesh = u.mesh if isinstance(u, MeshField) else (u[0] if isinstance(u, tuple) else None)
    t, ut = _window_samples(u, window, n, mesh, count)
    X = np.stack([t ** (1 - am), t ** (1 - ap)], axis=1)
    # relative residuals: the t^{1-a_+} profile dominates u by decades near 0
    w = 1.0 / np.where(ut != 0, np.abs(ut), np.max(np.abs(ut), initial=1.0))
    Xw = X * w[:, None]
    scale = np.linalg.norm(Xw, axis=0)
    coef, *_ = np.linalg.lstsq(Xw / scale, ut * w, rcond=None)
    coef = coef / scale
    return float(coef[0]), float(coef[1])


# ----------------------------------------------------------------------------
# singular approximate solutions

class Cutoff:
    """Radial C^2 cutoff: 1 on [0, r1], 0 beyond r2, quintic smoothstep between."""

    def __init__(self, r1, r2):
        if not 0 < r1 < r2:
            raise ParameterError(f"cutoff radii must satisfy 0 < r1 < r2, got {r1}, {r2}")
        self.r1, self.r2 = r1, r2

    def __call__(self, rho):
        """(eta, eta', eta'') at rho."""
        w = self.r2 - self.r1
        t = np.clip((np.asarray(rho, float) - self.r1) / w, 0.0, 1.0)
        inside = (t > 0) & (t < 1)
        e = 1 - t ** 3 * (10 - 15 * t + 6 * t * t)
        e1 = np.where(inside, -30 * t * t * (1 - t) ** 2 / w, 0.0)
        e2 = np.where(inside, -60 * t * (1 - t) * (1 - 2 * t) / w ** 2, 0.0)
        return e, e1, e2


def _jmul(a, b):
    # jets (v, d, q, dd, qq) without mixed terms
    return (a[0] * b[0], a[1] * b[0] + a[0] * b[1], a[2] * b[0] + a[0] * b[2],
            a[3] * b[0] + 2 * a[1] * b[1] + a[0] * b[3], a[4] * b[0] + 2 * a[2] * b[2] + a[0] * b[4])


class SingularApprox:
    """u_alpha o phi (d, q) = eta(rho) d rho^{-alpha} exp(d H(q) / 2), rho^2 = d^2 + q^2.

    (d, q) are boundary-normal coordinates; exp(d H / 2) = 1 + Theta with
    Theta = O(d).  ``laplacian`` uses the coordinate form of Delta in
    (d, q) with the exact scale factors of the chart.
    """

    def __init__(self, domain, gamma, alpha, cutoff=None, theta=True):
        self.domain = domain
        self.n = domain.n
        self.gamma = gamma
        self.alpha = alpha
        from .mesh import FermiChart
        self.chart = FermiChart(domain.graph, domain.n)
        cr = domain.chart_radius
        if cutoff is None:
            cutoff = (0.4 * cr, 0.8 * cr)
        if cutoff[1] > cr * (1 + 1e-12):
            raise ParameterError(f"cutoff radius {cutoff[1]} exceeds the chart radius {cr}")
        self.eta = Cutoff(*cutoff)
        self.theta = theta

    def chart_coords(self, z, r):
        z = np.asarray(z, float)
        r = np.asarray(r, float)
        d = np.full(z.shape, np.nan)
        q = np.full(z.shape, np.nan)
        near = np.hypot(z, r) < 1.5 * self.eta.r2
        if np.any(near):
            dn, qn = self.chart.inverse(z[near], r[near])
            d[near], q[near] = dn, qn
        return d, q

    def _parts(self, d, q):
        a = self.alpha
        rho2 = d * d + q * q
        rho = np.sqrt(rho2)
        pa = rho ** (-a)
        f = (d * pa,
             pa - a * d * d * pa / rho2,
             -a * d * q * pa / rho2,
             -3 * a * d * pa / rho2 + a * (a + 2) * d ** 3 * pa / rho2 ** 2,
             -a * d * pa / rho2 + a * (a + 2) * d * q * q * pa / rho2 ** 2)
        e, e1, e2 = self.eta(rho)
        eta = (e, e1 * d / rho, e1 * q / rho,
               e2 * d * d / rho2 + e1 * (1 / rho - d * d / rho ** 3),
               e2 * q * q / rho2 + e1 * (1 / rho - q * q / rho ** 3))
        if self.theta:
            H, H1, H2 = self.chart.mean_curvature_derivs(q)
            H1 = np.sign(q) * H1
            E = np.exp(0.5 * d * H)
            Ej = (E, 0.5 * H * E, 0.5 * d * H1 * E, 0.25 * H * H * E,
                  ((0.5 * d * H1) ** 2 + 0.5 * d * H2) * E)
        else:
            one = np.ones_like(d)
            zero = np.zeros_like(d)
            Ej = (one, zero, zero, zero, zero)
        return _jmul(_jmul(eta, f), Ej)

    def value_dq(self, d, q):
        return self._parts(d, q)[0]

    def laplacian_dq(self, d, q):
        # the axis is a removable singularity of the coordinate form; step off it
        q = np.where(np.abs(q) < 1e-9 * np.hypot(d, q), 1e-9 * np.hypot(d, q), q)
        u, ud, uq, udd, uqq = self._parts(d, q)
        m = self.n - 2
        h, h_d, h_q, rr, r_d, r_q = self.chart.geometry(d, q)
        return (udd + (h_d / h + m * r_d / rr) * ud + uqq / h ** 2
                + (m * r_q / rr - h_q / h) * uq / h ** 2)

    def __call__(self, z, r):
        d, q = self.chart_coords(z, r)
        out = np.zeros(np.shape(z))
        ok = np.isfinite(d) & (d > 0) & (np.hypot(d, q) < self.eta.r2)
        out[ok] = self.value_dq(d[ok], q[ok])
        return out

    def L(self, z, r):
        """L_gamma u_alpha = -Delta u - gamma u / |x|^2 at meridian points (0 off the support)."""
        z = np.asarray(z, float)
        r = np.asarray(r, float)
        d, q = self.chart_coords(z, r)
        out = np.zeros(z.shape)
        ok = np.isfinite(d) & (d > 0) & (np.hypot(d, q) < self.eta.r2)
        if np.any(ok):
            dd, qq = d[ok], q[ok]
            out[ok] = -self.laplacian_dq(dd, qq) - self.gamma * self.value_dq(dd, qq) / (
                z[ok] ** 2 + r[ok] ** 2)
        return out

    def on_points(self, x):
        x = np.atleast_2d(x)
        return self(x[:, 0], np.linalg.norm(x[:, 1:], axis=1))


def build_singular_approx(domain, gamma, alpha, cutoff=None, theta=True):
    n = domain.n
    am, ap = alpha_exponents(n, gamma)
    if not (np.isclose(alpha, am) or np.isclose(alpha, ap)):
        raise ParameterError(f"alpha = {alpha} is neither alpha_- = {am} nor alpha_+ = {ap}")
    return SingularApprox(domain, gamma, alpha, cutoff, theta)


def fd_operator(fn, n, gamma, x, h):
    """L_gamma by Richardson-extrapolated central differences in R^n; fn takes (N, n) points."""
    # fourth order: the residuals checked here are one power of |x| below the individual terms
    lap = (4 * fd_laplacian(fn, x, h / 2) - fd_laplacian(fn, x, h)) / 3
    return -lap - gamma * fn(x) / np.sum(np.atleast_2d(x) ** 2, axis=1)


def chart_samples(domain, radius, count, seed=0, min_angle=0.05):
    """Points of Omega with chart radius in (0, radius): polar in (d, q), log-uniform radius."""
    from .mesh import FermiChart
    rng = np.random.default_rng(seed)
    lo = radius * 1e-3
    rho = np.exp(rng.uniform(np.log(lo), np.log(radius), count))
    th = rng.uniform(min_angle, 0.5 * np.pi, count)
    d, q = rho * np.sin(th), rho * np.cos(th)
    x = FermiChart(domain.graph, domain.n).forward(d, q)
    pts = np.zeros((count, domain.n))
    pts[:, 0] = x[:, 0]
    pts[:, 1] = x[:, 1]
    return pts, d, q


def singular_residual_ratio(domain, gamma, approx, samples):
    """max |x|^{alpha+1} |L_gamma u_alpha| / d over the samples, by finite differences."""
    pts, d, q = samples
    h = 1e-2 * np.minimum(d, np.hypot(d, q))
    vals = np.array([fd_operator(approx.on_points, domain.n, gamma, p[None, :], hi)[0]
                     for p, hi in zip(pts, h)])
    rad = np.linalg.norm(pts, axis=1)
    return rad ** (approx.alpha + 1) * np.abs(vals) / d


# ----------------------------------------------------------------------------
# sub- and supersolutions

@dataclass
class SubSuperPair:
    alpha: float
    beta: float
    lam: float
    plus: SingularApprox
    minus_part: SingularApprox
    gamma: float
    n: int

    def u_plus(self, x):
        return self.plus.on_points(x) + self.lam * self.minus_part.on_points(x)

    def u_minus(self, x):
        return self.plus.on_points(x) - self.lam * self.minus_part.on_points(x)


def make_sub_super(domain, gamma, alpha, beta=None, lam=None, cutoff=None):
    """u_{alpha,+-} = u_alpha +- lam u_beta with lam (beta (n - beta) - gamma) > 0."""
    n = domain.n
    am, ap = alpha_exponents(n, gamma)
    if beta is None:
        beta = alpha - 0.5
        for root in (am, ap):
            if abs(beta - root) < 0.05:
                beta = root - 0.05 if beta < root else root + 0.05
    if not alpha - 1 < beta < alpha:
        raise ParameterError(f"need alpha - 1 < beta < alpha, got beta = {beta}")
    if min(abs(beta - am), abs(beta - ap)) < 1e-12:
        raise ParameterError("beta must differ from alpha_+-")
    c = beta * (n - beta) - gamma
    if lam is None:
        lam = 1.0 if c > 0 else -1.0
    if not lam * c > 0:
        raise ParameterError(f"lam (beta (n - beta) - gamma) = {lam * c:.3g} must be > 0")
    ua = SingularApprox(domain, gamma, alpha, cutoff)
    ub = SingularApprox(domain, gamma, beta, cutoff)
    return SubSuperPair(alpha, beta, lam, ua, ub, gamma, n)


def sub_super_check(domain, gamma, pair, samples=1000, radius=0.1, seed=0):
    """Signs of L_gamma u_{alpha,+} (> 0) and L_gamma u_{alpha,-} (< 0) on chart samples."""
    pts, d, q = chart_samples(domain, radius, samples, seed)
    h = 1e-2 * np.minimum(d, np.hypot(d, q))
    Lp = np.empty(samples)
    Lm = np.empty(samples)
    for i, (p, hi) in enumerate(zip(pts, h)):
        Lp[i] = fd_operator(pair.u_plus, domain.n, gamma, p[None, :], hi)[0]
        Lm[i] = fd_operator(pair.u_minus, domain.n, gamma, p[None, :], hi)[0]
    up = pair.u_plus(pts)
    um = pair.u_minus(pts)
    bad = np.flatnonzero((Lp <= 0) | (Lm >= 0) | (up <= 0) | (um <= 0))
    rad = np.linalg.norm(pts, axis=1)
    report = {"samples": samples, "radius": radius, "ok": len(bad) == 0,
              "min_Lplus": float(Lp.min()), "max_Lminus": float(Lm.max()),
              "violations": int(len(bad))}
    if len(bad):
        report["first_violation"] = pts[bad[0]].tolist()
        report["admissible_radius"] = float(rad[bad].min())
    return report


# ----------------------------------------------------------------------------
# masses

@dataclass
class MassResult:
    c1: float
    c2: float
    mass: float
    gamma: float
    gamma_H: float
    fit: ProfileFit
    energy_norm: float
    solve_residual: float
    cutoff: tuple
    mesh: object = field(default=None, repr=False)
    correction: np.ndarray = field(default=None, repr=False)

    def summary(self):
        return {"c1": self.c1, "c2": self.c2, "mass": self.mass, "gamma": self.gamma,
                "gamma_H": self.gamma_H, "fit": self.fit.summary(), "energy_norm": self.energy_norm,
                "solve_residual": self.solve_residual, "cutoff": list(self.cutoff)}


def _mesh(domain, options):
    opt = options or MeshOptions(h=0.1, layers=16)
    return generate_mesh(domain, opt.h, None, opt)


def discrete_exponents(mesh, gamma, ring=None):
    """Power laws t^beta carried by the discrete operator on the polar core.

    The core is self-similar, so nodal solutions u_{j+1} = mu u_j of the
    three-ring stencil solve a quadratic eigenproblem; beta = -log(mu) / step.
    Returns the two roots (beta_-, beta_+) continuing 1 - alpha_- and 1 - alpha_+.
    """
    n = mesh.n
    am, ap = alpha_exponents(n, gamma)
    K = (assembly.full_stiffness(mesh) - gamma * assembly.full_mass(mesh, 2.0)).tocsr()
    core = mesh.core
    nt = core["n_theta"]
    nt1 = nt + 1
    n_rings = len(core["radii"]) - 1
    if n_rings < 3:
        raise FitError("core too shallow for a three-ring stencil")
    j = n_rings - 3 if ring is None else int(ring)
    rows = K[j * nt1 + np.arange(nt)]

    def block(jj):
        return rows[:, jj * nt1 + np.arange(nt)].toarray()

    km, k0, kp = block(j - 1), block(j), block(j + 1)
    eye, zero = np.eye(nt), np.zeros((nt, nt))
    w = sla.eigvals(np.block([[zero, eye], [-km, -k0]]), np.block([[eye, zero], [zero, kp]]))
    w = w[np.isfinite(w) & (np.abs(w.imag) < 1e-9 * np.abs(w)) & (w.real > 0)].real
    beta = -np.log(w) / core["step"]
    out = []
    for target in (1 - am, 1 - ap):
        out.append(float(beta[np.argmin(np.abs(beta - target))]))
    return tuple(out)


def boundary_mass(domain, gamma, mesh_options=None, cutoff=None, window=None, mesh=None,
                  gamma_h=None, exponents="discrete"):
    """Hardy boundary mass m_gamma(Omega), normalized so that c1 = 1.

    With u_+ the Theta-corrected singular approximation of exponent alpha_+,
    v solves (A - gamma B) v = int L_gamma(eta u_+) phi, so H_0 = eta u_+ - v
    is L_gamma-harmonic and H_0 ~ d |x|^{-alpha_+} + m d |x|^{-alpha_-}.
    The mass is read off v ~ -m t^{1-alpha_-} along the axis.
    """
    n = domain.n
    am, ap = alpha_exponents(n, gamma)
    if not (n * n - 1) / 4.0 < gamma:
        raise ParameterError(f"gamma = {gamma} must exceed (n^2 - 1)/4 = {(n * n - 1) / 4}")
    mesh = mesh or _mesh(domain, mesh_options)
    if gamma_h is None:
        gamma_h = hardy_on_mesh(mesh).value
    if not gamma < gamma_h:
        raise ParameterError(f"gamma = {gamma} is not below the computed gamma_H = {gamma_h:.6g}")
    approx = SingularApprox(domain, gamma, ap, cutoff)
    # |L u_+| <= C |x|^{-alpha_+}: integrate the load against the matching origin weight
    load = assembly.load_vector(
        mesh, lambda z, r: approx.L(z, r) * np.hypot(z, r) ** ap, sigma=ap)
    K = forms(mesh).K(gamma)
    v = spla.splu(K.tocsc()).solve(load)
    resid = float(np.linalg.norm(K @ v - load) / np.linalg.norm(load))
    vf = mesh.full(v)
    if window is None:
        lo, hi = default_window(mesh, domain)
        window = (lo, min(hi, 0.9 * approx.eta.r1))
    t, vt = _window_samples(MeshField(mesh, vf), window, n, mesh)
    # v(t) = -m t^{1-a_-} + c t^{2-a_+} + c' t^{2-a_-} + ..., with the exponents the
    # mesh actually carries; the continuum ones bias the fit over many decades
    bm, bp = discrete_exponents(mesh, gamma) if exponents == "discrete" else (1 - am, 1 - ap)
    X = np.stack([t ** bm, t ** (1 + bp), t ** (1 + bm)], axis=1)
    scale = np.linalg.norm(X, axis=0)
    coef, *_ = np.linalg.lstsq(X / scale, vt, rcond=None)
    coef = coef / scale
    model = X @ coef
    mass = -float(coef[0])
    slope = float(np.polyfit(np.log(t), np.log(np.abs(vt) + 1e-300), 1)[0])
    fit = ProfileFit(am, -mass, tuple(map(float, window)), slope, 1 - am, slope - (1 - am),
                     float(np.linalg.norm(model - vt) / np.linalg.norm(vt)),
                     np.stack([t, vt, model], axis=1))
    return MassResult(1.0, mass, mass, gamma, gamma_h, fit, float(np.sqrt(abs(v @ (K @ v)))), resid,
                      (approx.eta.r1, approx.eta.r2), mesh, vf)


def interior_mass(domain, gamma, x0, mesh_options=None, cutoff=None, mesh=None, gamma_h=None,
                  return_field=False):
    """R_gamma(Omega, x0) for n = 3 and x0 = (z0, 0) on the axis.

    G = (eta / |x - x0| + beta) / w_2 with (A - gamma B) beta = -int g phi and
    g = L_gamma(eta / |x - x0|) away from x0, i.e. -eta'' / rho - gamma eta / (|x|^2 rho).
    """
    n = domain.n
    if n != 3:
        raise ParameterError("the interior mass is implemented for n = 3 only")
    z0 = float(x0[0]) if np.ndim(x0) else float(x0)
    if np.ndim(x0) and len(x0) > 1 and abs(float(np.linalg.norm(x0[1:]))) > 0:
        raise ParameterError("x0 must lie on the symmetry axis")
    if not 0 < gamma:
        raise ParameterError("gamma must be positive")
    dist = min(domain.meridian_distance(z0, 0.0), abs(z0))
    if not domain.contains(z0, 0.0)[0] or dist <= 0:
        raise ParameterError(f"x0 = {z0} is not interior")
    if cutoff is None:
        cutoff = (0.4 * dist, 0.8 * dist)
    if cutoff[1] >= dist:
        raise ParameterError(f"cutoff radius {cutoff[1]} reaches the boundary or the origin")
    if mesh is None:
        opt = mesh_options or MeshOptions(h=0.1, layers=8)
        pts = tuple(opt.points) + ((z0, 0.0),)
        opt = MeshOptions(opt.h, opt.layers, opt.ratio, opt.refine, opt.min_angle, opt.focus, pts)
        mesh = generate_mesh(domain, opt.h, None, opt)
    if gamma_h is None:
        gamma_h = hardy_on_mesh(mesh).value
    if not gamma < gamma_h:
        raise ParameterError(f"gamma = {gamma} is not below the computed gamma_H = {gamma_h:.6g}")
    eta = Cutoff(*cutoff)

    def g(z, r):
        rho = np.hypot(z - z0, r)
        e, _, e2 = eta(rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = -e2 / rho - gamma * e / ((z * z + r * r) * rho)
        return np.where(rho > 0, val, 0.0)

    load = -assembly.load_vector(mesh, g)
    K = forms(mesh).K(gamma)
    beta = mesh.full(spla.splu(K.tocsc()).solve(load))
    i0 = int(np.argmin(np.hypot(mesh.nodes[:, 0] - z0, mesh.nodes[:, 1])))
    if np.hypot(mesh.nodes[i0, 0] - z0, mesh.nodes[i0, 1]) > 1e-9:
        val = float(mesh.interpolate(beta, np.array([[z0, 0.0]]))[0])
    else:
        val = float(beta[i0])
    if return_field:
        return val, beta, mesh, eta
    return val


def green_normalization(n=3):
    return 1.0 / sphere_area(n - 1)


def harnack_ratio(u, domain, annulus, mesh=None):
    """max over annulus nodes of (u/d)(x) / (u/d)(y), d the distance to the boundary."""
    if isinstance(u, tuple):
        mesh, u = u
    if isinstance(u, MeshField):
        mesh, u = u.mesh, u.values
    if mesh is None:
        raise ParameterError("harnack_ratio needs a mesh field")
    u = np.asarray(u, float)
    if len(u) == mesh.n_free:
        u = mesh.full(u)
    rad = mesh.radius()
    sel = np.flatnonzero((rad >= annulus[0]) & (rad <= annulus[1]) & ~mesh.dirichlet)
    if not len(sel):
        raise ParameterError("annulus contains no interior nodes")
    if np.any(u[sel] <= 0):
        raise ParameterError("u is not positive on the annulus")
    d = np.array([domain.meridian_distance(*mesh.nodes[i]) for i in sel])
    keep = d > 0
    w = u[sel][keep] / d[keep]
    return float(w.max() / w.min())
