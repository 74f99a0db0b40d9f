"""Closed-form constants and exponent algebra for L_gamma = -Delta - gamma/|x|^2.

All functions here are pure and cheap.  They are the ground truth the
discrete modules are checked against.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np


class ParameterError(ValueError):
    """Raised when a parameter lies outside the range the theory covers."""


class NoCknRepresentation(ParameterError):
    """gamma exceeds (n-2)^2/4, so no real Caffarelli-Kohn-Nirenberg pair maps onto it."""


def sphere_area(m):
    """Area of the unit m-sphere in R^{m+1}, by the recursion w_m = 2 pi w_{m-2} / (m-1)."""
    if m < 0 or int(m) != m:
        raise ParameterError(f"sphere dimension must be a nonnegative integer, got {m}")
    m = int(m)
    if m == 0:
        return 2.0
    if m == 1:
        return 2.0 * np.pi
    return 2.0 * np.pi / (m - 1) * sphere_area(m - 2)


def _check_n(n):
    if int(n) != n or n < 3:
        raise ParameterError(f"dimension must be an integer >= 3, got {n}")


def alpha_exponents(n, gamma):
    """Return (alpha_minus, alpha_plus), the roots of alpha (n - alpha) = gamma."""
    _check_n(n)
    disc = n * n / 4.0 - gamma
    if not disc > 0:
        raise ParameterError(f"gamma = {gamma} must be < n^2/4 = {n * n / 4}")
    root = np.sqrt(disc)
    return n / 2.0 - root, n / 2.0 + root


def critical_exponent(n, s):
    """Hardy-Sobolev exponent 2*(s) = 2 (n - s) / (n - 2)."""
    _check_n(n)
    if not 0 <= s <= 2:
        raise ParameterError(f"s = {s} must lie in [0, 2]")
    return 2.0 * (n - s) / (n - 2)


def cone_hardy_constant(n, k):
    """Best Hardy constant ((n + 2k - 2)/2)^2 of the cone {x_1, ..., x_k > 0}.

    k = 0 is the whole space.
    """
    _check_n(n)
    if int(k) != k or k < 0 or k > n:
        raise ParameterError(f"k must be an integer in [0, n], got {k}")
    return ((n + 2 * k - 2) / 2.0) ** 2


@dataclass(frozen=True)
class HardyParams:
    n: int
    gamma: float
    s: float = 0.0

    def __post_init__(self):
        _check_n(self.n)
        if not self.gamma < self.n ** 2 / 4.0:
            raise ParameterError(f"gamma = {self.gamma} must be < n^2/4")
        if not 0 <= self.s < 2:
            raise ParameterError(f"s = {self.s} must lie in [0, 2)")

    @property
    def alpha_minus(self):
        return alpha_exponents(self.n, self.gamma)[0]

    @property
    def alpha_plus(self):
        return alpha_exponents(self.n, self.gamma)[1]

    @property
    def two_star(self):
        return critical_exponent(self.n, self.s)


@dataclass(frozen=True)
class CknParams:
    a: float
    b: float
    n: int

    def __post_init__(self):
        _check_n(self.n)
        if not self.a < (self.n - 2) / 2.0:
            raise ParameterError(f"a = {self.a} must be < (n-2)/2")
        if not -1e-15 <= self.b - self.a <= 1 + 1e-15:
            raise ParameterError(f"b - a = {self.b - self.a} must lie in [0, 1]")

    @property
    def q(self):
        return 2.0 * self.n / (self.n - 2 + 2 * (self.b - self.a))


def ckn_to_hardy(ckn):
    """Map (a, b) to (gamma, s, 2*) with gamma = a(n-2-a), s = (b-a) q and 2* = q."""
    n, a = ckn.n, ckn.a
    q = ckn.q
    return a * (n - 2 - a), (ckn.b - ckn.a) * q, q


def hardy_to_ckn(n, gamma, s):
    """Inverse of ckn_to_hardy, on the branch a < (n-2)/2."""
    _check_n(n)
    disc = (n - 2) ** 2 / 4.0 - gamma
    if disc < 0:
        raise NoCknRepresentation(
            f"gamma = {gamma} > (n-2)^2/4 = {(n - 2) ** 2 / 4}: no CKN representation")
    if not 0 <= s <= 2:
        raise ParameterError(f"s = {s} must lie in [0, 2]")
    a = (n - 2) / 2.0 - np.sqrt(disc)
    b = a + s * (n - 2) / (2.0 * (n - s))
    return CknParams(a=a, b=b, n=n)


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x, x.ndim == 1


@dataclass(frozen=True)
class ClosedFormSolution:
    """x -> x_1 |x|^{-alpha}; L_gamma-harmonic when alpha(n - alpha) = gamma."""
    alpha: float

    def __call__(self, x):
        pts, single = _as_points(x)
        val = pts[:, 0] * np.linalg.norm(pts, axis=1) ** (-self.alpha)
        return val[0] if single else val


def kelvin_transform(u, n):
    """Return x -> |x|^{2-n} u(x / |x|^2)."""
    _check_n(n)

    def ku(x):
        pts, single = _as_points(x)
        r2 = np.sum(pts * pts, axis=1)
        if np.any(r2 == 0):
            raise ParameterError("Kelvin transform is undefined at x = 0")
        val = r2 ** ((2 - n) / 2.0) * np.asarray(u(pts / r2[:, None]))
        return val[0] if single else val

    return ku


def fd_laplacian(f, x, h=1e-4):
    """Second-order central difference Laplacian of f at the points x (shape (N, n))."""
    pts, single = _as_points(x)
    f0 = np.asarray(f(pts))
    lap = np.zeros_like(f0)
    for i in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[i] = h
        lap += (np.asarray(f(pts + e)) - 2 * f0 + np.asarray(f(pts - e))) / h ** 2
    return lap[0] if single else lap


def laplacian_identity_residual(alpha, n, x, h=1e-4):
    """Relative residual of -Delta(x_1 |x|^-alpha) = alpha (n - alpha) x_1 |x|^{-alpha-2}.

    Falls back to the absolute residual when alpha (n - alpha) = 0.
    """
    _check_n(n)
    pts, single = _as_points(x)
    if pts.shape[1] != n:
        raise ParameterError(f"points must have {n} coordinates")
    if np.any(pts[:, 0] <= 0):
        raise ParameterError("points must lie in the half-space x_1 > 0")
    u = ClosedFormSolution(alpha)
    c = alpha * (n - alpha)
    target = c * pts[:, 0] * np.linalg.norm(pts, axis=1) ** (-alpha - 2)
    res = np.abs(fd_laplacian(u, pts, h) + target)
    if abs(c) > 1e-14:
        res = res / np.abs(target)
    return res[0] if single else res


def bubble(n, lam=1.0):
    """Sobolev bubble U_lam(x) = lam^{(n-2)/2} (1 + lam^2 |x|^2)^{-(n-2)/2} as a function of x."""
    _check_n(n)

    def U(x):
        pts, single = _as_points(x)
        r2 = np.sum(pts * pts, axis=1)
        val = lam ** ((n - 2) / 2.0) * (1 + lam * lam * r2) ** (-(n - 2) / 2.0)
        return val[0] if single else val

    return U


def _bubble_integrals(n, nodes, lam=1.0):
    # r = tan(t) / lam on t in (0, pi/2); integrands decay fast enough for plain Gauss-Legendre
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = (t + 1) * np.pi / 4
    w = w * np.pi / 4
    r = np.tan(t) / lam
    jac = 1.0 / (lam * np.cos(t) ** 2)
    p = 2.0 * n / (n - 2)
    u = lam ** ((n - 2) / 2.0) * (1 + (lam * r) ** 2) ** (-(n - 2) / 2.0)
    du = -(n - 2) * lam ** 2 * r * u / (1 + (lam * r) ** 2)
    area = sphere_area(n - 1)
    grad = area * np.sum(w * jac * du ** 2 * r ** (n - 1))
    pot = area * np.sum(w * jac * np.abs(u) ** p * r ** (n - 1))
    return grad, pot, p


def sobolev_quotient(n, nodes=400, lam=1.0):
    grad, pot, p = _bubble_integrals(n, nodes, lam)
    return grad / pot ** (2.0 / p)


def sobolev_constant(n, nodes=400, tol=1e-10):
    """1/K(n,2)^2, the whole-space Sobolev quotient of the bubble, by radial quadrature.

    The node count doubles until two successive values agree to tol.
    """
    _check_n(n)
    prev = sobolev_quotient(n, nodes)
    for _ in range(6):
        nodes *= 2
        cur = sobolev_quotient(n, nodes)
        if abs(cur - prev) <= tol * abs(cur):
            return cur
        prev = cur
    raise RuntimeError(f"bubble quadrature did not converge (last change {abs(cur - prev):.3e})")


def bubble_integral(n, nodes=800):
    """Integral of U^{2*} over R^n for the unit bubble."""
    return _bubble_integrals(n, nodes)[1]


def closed_form_solution(alpha) -> Callable:
    return ClosedFormSolution(alpha)
