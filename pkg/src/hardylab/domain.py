"""Axisymmetric domains with the origin on the boundary.

A domain of revolution about the x_1 axis is described by its meridian
section in the (z, r) half-plane, z = x_1 and r = |x'|.  The section is
bounded by a closed loop of pieces, each tagged either ``dirichlet`` (part
of the boundary surface) or ``axis`` (a segment of the symmetry axis).
Near the origin the boundary is the graph z = psi(r) and the domain lies
on the side z > psi(r).
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .spectral import ParameterError


class DomainError(ValueError):
    pass


# ----------------------------------------------------------------------------
# boundary pieces

@dataclass(frozen=True)
class Line:
    p0: tuple
    p1: tuple
    tag: str = "dirichlet"

    def point(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return (1 - t) * np.asarray(self.p0) + t * np.asarray(self.p1)

    def tangent(self, t):
        d = np.asarray(self.p1, float) - np.asarray(self.p0, float)
        return np.broadcast_to(d, np.shape(t) + (2,))

    def length(self):
        return float(np.hypot(*(np.asarray(self.p1, float) - np.asarray(self.p0, float))))

    def closest(self, p):
        a, b = np.asarray(self.p0, float), np.asarray(self.p1, float)
        d = b - a
        t = np.clip(np.dot(p - a, d) / np.dot(d, d), 0, 1)
        return float(np.hypot(*(p - (a + t * d))))

    def to_dict(self):
        return {"type": "line", "p0": list(map(float, self.p0)), "p1": list(map(float, self.p1)),
                "tag": self.tag}


@dataclass(frozen=True)
class Arc:
    center: tuple
    radius: float
    theta0: float
    theta1: float
    tag: str = "dirichlet"

    def point(self, t):
        th = self.theta0 + (self.theta1 - self.theta0) * np.asarray(t, dtype=float)
        c = np.asarray(self.center, float)
        return c + self.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def tangent(self, t):
        th = self.theta0 + (self.theta1 - self.theta0) * np.asarray(t, dtype=float)
        k = (self.theta1 - self.theta0) * self.radius
        return k * np.stack([-np.sin(th), np.cos(th)], axis=-1)

    def length(self):
        return abs(self.theta1 - self.theta0) * self.radius

    def closest(self, p):
        c = np.asarray(self.center, float)
        v = p - c
        ang = np.arctan2(v[1], v[0])
        lo, hi = sorted((self.theta0, self.theta1))
        # bring the angle into the arc range if it lies there modulo 2 pi
        k = np.floor((ang - lo) / (2 * np.pi))
        ang = ang - 2 * np.pi * k
        if lo <= ang <= hi:
            return abs(float(np.hypot(*v)) - self.radius)
        ends = self.point(np.array([0.0, 1.0]))
        return float(np.min(np.hypot(*(ends - p).T)))

    def to_dict(self):
        return {"type": "arc", "center": list(map(float, self.center)), "radius": float(self.radius),
                "theta0": float(self.theta0), "theta1": float(self.theta1), "tag": self.tag}


@dataclass(frozen=True)
class Curve:
    """Parametric piece t -> (z(t), r(t)), t in [0, 1], given by a vectorised callable."""
    fn: object
    dfn: object
    tag: str = "dirichlet"

    def point(self, t):
        return self.fn(np.asarray(t, dtype=float))

    def tangent(self, t):
        return self.dfn(np.asarray(t, dtype=float))

    def length(self):
        t, w = np.polynomial.legendre.leggauss(64)
        t = (t + 1) / 2
        return float(np.sum(w / 2 * np.linalg.norm(self.tangent(t), axis=-1)))

    def closest(self, p):
        t = np.linspace(0, 1, 401)
        dist = np.linalg.norm(self.point(t) - p, axis=-1)
        i = int(np.argmin(dist))
        lo, hi = t[max(i - 1, 0)], t[min(i + 1, len(t) - 1)]
        res = minimize_scalar(lambda s: float(np.linalg.norm(self.point(s) - p)),
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        return float(min(res.fun, dist[i]))


def piece_from_dict(d):
    kind = d.get("type")
    if kind == "line":
        return Line(tuple(d["p0"]), tuple(d["p1"]), d.get("tag", "dirichlet"))
    if kind == "arc":
        return Arc(tuple(d["center"]), float(d["radius"]), float(d["theta0"]), float(d["theta1"]),
                   d.get("tag", "dirichlet"))
    raise DomainError(f"unknown curve piece type {kind!r}")


# ----------------------------------------------------------------------------
# graph of the boundary near the origin

@dataclass(frozen=True)
class OriginGraph:
    """psi and its first three derivatives; the boundary near 0 is z = psi(r), r < r_max."""
    kind: str
    params: tuple
    r_max: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "flat":
            z = np.zeros_like(r)
            return z, z, z, z
        if self.kind == "circle":
            # circle of radius |c| centred at (c, 0) through the origin
            (c,) = self.params
            sg = np.sign(c)
            q = np.sqrt(c * c - r * r)
            return c - sg * q, sg * r / q, sg * c * c / q ** 3, 3 * sg * c * c * r / q ** 5
        if self.kind == "bump":
            t, w = self.params
            k = np.pi / w
            inside = r < w
            cs, sn = np.cos(k * r), np.sin(k * r)
            phi = np.where(inside, (1 - cs) / 2, 1.0)
            d1 = np.where(inside, k / 2 * sn, 0.0)
            d2 = np.where(inside, k * k / 2 * cs, 0.0)
            d3 = np.where(inside, -k ** 3 / 2 * sn, 0.0)
            return -t * phi, -t * d1, -t * d2, -t * d3
        raise DomainError(f"unknown origin graph {self.kind!r}")

    def second_derivative_at_origin(self):
        return float(self(np.array([0.0]))[2][0])

    def max_curvature(self, r_hi):
        r = np.linspace(0, r_hi, 200)
        _, d1, d2, _ = self(r)
        return float(np.max(np.abs(d2) / (1 + d1 ** 2) ** 1.5))


# ----------------------------------------------------------------------------

@dataclass
class AxisymmetricDomain:
    name: str
    n: int
    pieces: list
    graph: OriginGraph
    params: dict = field(default_factory=dict)
    chart_radius: float = 0.5

    # -- geometry -----------------------------------------------------------
    def dirichlet_pieces(self):
        return [p for p in self.pieces if p.tag == "dirichlet"]

    def polygon(self, pts_per_piece=400):
        pts = []
        for p in self.pieces:
            k = 2 if isinstance(p, Line) else pts_per_piece
            pts.append(p.point(np.linspace(0, 1, k))[:-1])
        return np.concatenate(pts)

    def diameter(self):
        poly = self.polygon(200)
        ext = np.ptp(poly[:, 0])
        return float(max(ext, 2 * np.max(poly[:, 1])))

    def contains(self, z, r):
        """Point-in-section test on a fine polygon (boundary points count as inside)."""
        poly = self.polygon()
        z = np.atleast_1d(np.asarray(z, float))
        r = np.atleast_1d(np.asarray(r, float))
        inside = _points_in_polygon(poly, np.stack([z, r], axis=1))
        d = np.array([self.meridian_distance(zi, ri) for zi, ri in zip(z, r)])
        return inside | (d < 1e-12)

    def meridian_distance(self, z, r):
        p = np.array([z, r], dtype=float)
        return min(piece.closest(p) for piece in self.dirichlet_pieces())

    def validate(self):
        pieces = self.pieces
        if not pieces:
            raise DomainError("empty curve")
        for a, b in zip(pieces, pieces[1:] + pieces[:1]):
            end, start = a.point(1.0), b.point(0.0)
            if np.hypot(*(end - start)) > 1e-9:
                raise DomainError(f"curve is not closed between pieces ({end} -> {start})")
        for p in pieces:
            pts = p.point(np.linspace(0, 1, 50))
            if np.min(pts[:, 1]) < -1e-12:
                raise DomainError("curve leaves the half-plane r >= 0")
            if p.tag == "axis" and np.max(np.abs(pts[:, 1])) > 1e-12:
                raise DomainError("axis pieces must lie on r = 0")
        starts = np.array([p.point(0.0) for p in pieces])
        ends = np.array([p.point(1.0) for p in pieces])
        on_origin = [i for i in range(len(pieces)) if np.hypot(*starts[i]) < 1e-12]
        if not on_origin and not any(np.hypot(*e) < 1e-12 for e in ends):
            raise DomainError("origin not on boundary")
        # the surface of revolution is smooth where a dirichlet piece meets the axis
        for p in self.dirichlet_pieces():
            for t in (0.0, 1.0):
                x = p.point(t)
                if abs(x[1]) < 1e-12:
                    tan = p.tangent(t)
                    if abs(tan[0]) > 1e-8 * np.hypot(*tan):
                        raise DomainError(
                            f"boundary meets the axis at z = {x[0]:.6g} without being orthogonal to it")
        poly = self.polygon(200)
        if not _is_simple(poly):
            raise DomainError("curve is not simple")
        if _signed_area(poly) <= 0:
            raise DomainError("curve must be oriented counter-clockwise")
        eps = 1e-6 * self.chart_radius
        if not _points_in_polygon(poly, np.array([[eps, 0.0]]))[0]:
            raise DomainError("domain must lie on the side x_1 > 0 of its tangent plane at 0")
        return self

    def to_dict(self):
        out = {"name": self.name, "n": int(self.n)}
        if self.name == "custom":
            out["curve"] = [p.to_dict() for p in self.pieces]
        else:
            out["preset"] = self.name
            out["parameters"] = {k: float(v) if isinstance(v, (int, float)) else v
                                 for k, v in self.params.items()}
        return out


def _signed_area(poly):
    z, r = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(z * np.roll(r, -1) - np.roll(z, -1) * r))


def _points_in_polygon(poly, pts):
    z, r = poly[:, 0], poly[:, 1]
    z2, r2 = np.roll(z, -1), np.roll(r, -1)
    inside = np.zeros(len(pts), dtype=bool)
    for k, (pz, pr) in enumerate(pts):
        cross = (r > pr) != (r2 > pr)
        with np.errstate(divide="ignore", invalid="ignore"):
            zc = z + (pr - r) * (z2 - z) / (r2 - r)
        inside[k] = np.count_nonzero(cross & (pz < zc)) % 2 == 1
    return inside


def _is_simple(poly):
    a = poly
    b = np.roll(poly, -1, axis=0)
    m = len(a)

    def orient(p, q, r):
        return np.sign((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                       - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))

    for i in range(m):
        j = np.arange(i + 2, m)
        if i == 0:
            j = j[j != m - 1]
        if len(j) == 0:
            continue
        o1 = orient(a[i], b[i], a[j])
        o2 = orient(a[i], b[i], b[j])
        o3 = orient(a[j], b[j], a[i][None, :])
        o4 = orient(a[j], b[j], b[i][None, :])
        if np.any((o1 * o2 < 0) & (o3 * o4 < 0)):
            return False
    return True


# ----------------------------------------------------------------------------
# presets

def tangent_ball(R=1.0, n=3):
    if R <= 0:
        raise ParameterError("R must be positive")
    pieces = [Line((0.0, 0.0), (2 * R, 0.0), "axis"), Arc((R, 0.0), R, 0.0, np.pi)]
    return AxisymmetricDomain("tangent_ball", n, pieces, OriginGraph("circle", (R,), R),
                              {"R": R}, chart_radius=0.5 * R)


def half_ball(R=1.0, n=3):
    if R <= 0:
        raise ParameterError("R must be positive")
    pieces = [Line((0.0, 0.0), (R, 0.0), "axis"),
              Arc((0.0, 0.0), R, 0.0, np.pi / 2),
              Line((0.0, R), (0.0, 0.0))]
    return AxisymmetricDomain("half_ball", n, pieces, OriginGraph("flat", (), R),
                              {"R": R}, chart_radius=R)


def chopped_ball(R0=1.0, delta=0.2, n=3):
    rho = delta / 4.0
    if R0 <= 0 or delta <= 0 or 2 * rho >= R0:
        raise ParameterError("need R0 > 0 and 0 < delta < 2 R0")
    pieces = [Line((0.0, 0.0), (R0, 0.0), "axis"),
              Arc((0.0, 0.0), R0, 0.0, np.pi),
              Line((-R0, 0.0), (-2 * rho, 0.0), "axis"),
              Arc((-rho, 0.0), rho, np.pi, 0.0)]
    return AxisymmetricDomain("chopped_ball", n, pieces, OriginGraph("circle", (-rho,), rho),
                              {"R0": R0, "delta": delta}, chart_radius=0.5 * rho)


def bumped_halfball(R=1.0, t=0.0, width=None, profile="sin2", n=3):
    """Image of half_ball(R) under (x_1, x') -> (x_1 - t phi(|x'|), x').

    phi(r) = sin^2(pi r / (2 w)) for r < w and 1 beyond.
    """
    if profile != "sin2":
        raise ParameterError(f"unknown bump profile {profile!r}")
    w = R if width is None else width
    if R <= 0 or w <= 0:
        raise ParameterError("R and width must be positive")
    params = {"R": R, "t": t, "width": w, "profile": profile}
    if t == 0:
        # no dent: literally the half ball, so every downstream number agrees bit for bit
        flat = half_ball(R, n)
        return AxisymmetricDomain("bumped_halfball", n, flat.pieces, flat.graph, params, flat.chart_radius)
    graph = OriginGraph("bump", (t, w), R)

    def face(s):
        r = R * (1 - s)
        return np.stack([graph(r)[0], r], axis=-1)

    def dface(s):
        r = R * (1 - s)
        return np.stack([-R * graph(r)[1], -R * np.ones_like(r)], axis=-1)

    def rim(s):
        th = s * np.pi / 2
        r = R * np.sin(th)
        return np.stack([R * np.cos(th) + graph(r)[0], r], axis=-1)

    def drim(s):
        th = s * np.pi / 2
        r = R * np.sin(th)
        dr = R * np.cos(th) * np.pi / 2
        return np.stack([-R * np.sin(th) * np.pi / 2 + graph(r)[1] * dr, dr], axis=-1)

    pieces = [Line((0.0, 0.0), (R, 0.0), "axis"), Curve(rim, drim), Curve(face, dface)]
    kmax = graph.max_curvature(R)
    chart = min(0.5 * R, 0.5 * w, 0.4 / kmax if kmax > 0 else np.inf)
    return AxisymmetricDomain("bumped_halfball", n, pieces, graph, params, chart_radius=chart)


def custom(curve, n=3, name="custom"):
    pieces = [p if not isinstance(p, dict) else piece_from_dict(p) for p in curve]
    origin_piece = None
    for p in pieces:
        if p.tag != "dirichlet":
            continue
        for t in (0.0, 1.0):
            if np.hypot(*p.point(t)) < 1e-12:
                origin_piece = p
    if origin_piece is None:
        raise DomainError("origin not on boundary")
    if isinstance(origin_piece, Line):
        graph = OriginGraph("flat", (), origin_piece.length())
    elif isinstance(origin_piece, Arc):
        cz, cr = origin_piece.center
        if abs(cr) > 1e-12:
            raise DomainError("boundary meets the axis at z = 0 without being orthogonal to it")
        graph = OriginGraph("circle", (float(cz),), abs(float(cz)))
    else:
        raise DomainError("custom curves are built from line and arc pieces")
    chart = 0.5 * graph.r_max
    dom = AxisymmetricDomain(name, n, pieces, graph, {}, chart_radius=chart)
    return dom


PRESETS = {
    "tangent_ball": tangent_ball,
    "half_ball": half_ball,
    "chopped_ball": chopped_ball,
    "bumped_halfball": bumped_halfball,
}


def make_domain(preset, n=3, **params):
    """Build and validate a preset domain (or ``custom`` with ``curve=[...]``)."""
    if preset == "custom":
        dom = custom(params.pop("curve"), n=n)
    elif preset in PRESETS:
        dom = PRESETS[preset](n=n, **params)
    else:
        raise DomainError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)} or custom")
    return dom.validate()


def mean_curvature_at_origin(domain):
    """Sum of principal curvatures of the boundary at 0; positive for a tangent interior ball."""
    return (domain.n - 1) * domain.graph.second_derivative_at_origin()


def distance_to_boundary(domain, point):
    """Euclidean distance from a point of R^n (or a meridian pair (z, r)) to the boundary surface."""
    p = np.asarray(point, dtype=float)
    if p.shape == (2,) and domain.n != 2:
        z, r = p
    else:
        if p.shape != (domain.n,):
            raise DomainError(f"point must have {domain.n} coordinates")
        z, r = p[0], float(np.linalg.norm(p[1:]))
    d = domain.meridian_distance(z, r)
    if d > 1e-12 and not _points_in_polygon(domain.polygon(), np.array([[z, r]]))[0]:
        raise DomainError(f"point {tuple(p)} lies outside the domain")
    return d


# ----------------------------------------------------------------------------
# serialisation

def domain_to_json(domain):
    return json.dumps(domain.to_dict(), indent=2, sort_keys=True) + "\n"


def domain_from_dict(d):
    for key in ("name", "n"):
        if key not in d:
            raise DomainError(f"domain file: missing field {key!r}")
    n = d["n"]
    if not isinstance(n, int) or n < 3:
        raise DomainError(f"domain file: field 'n' must be an integer >= 3, got {n!r}")
    if "curve" in d:
        if not isinstance(d["curve"], list):
            raise DomainError("domain file: field 'curve' must be a list of pieces")
        return custom(d["curve"], n=n, name=d["name"]).validate()
    preset = d.get("preset", d["name"])
    params = dict(d.get("parameters", {}))
    # allow flat files such as {"preset": "tangent_ball", "R": 1, "n": 3}
    for k, v in d.items():
        if k not in ("name", "n", "preset", "parameters", "curve"):
            params[k] = v
    try:
        return make_domain(preset, n=n, **params)
    except TypeError as exc:
        raise DomainError(f"domain file: bad parameters for preset {preset!r}: {exc}") from None


def load_domain(path):
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: not valid JSON ({exc})") from None
    if "name" not in d and "preset" in d:
        d["name"] = d["preset"]
    return domain_from_dict(d)


def save_domain(domain, path):
    with open(path, "w") as fh:
        fh.write(domain_to_json(domain))
