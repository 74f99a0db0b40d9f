"""Graded meridian meshes.

The mesh has three parts:

* a structured polar core around the origin, laid out in boundary-normal
  coordinates (d, q): d is the distance along the inward normal and q the
  radius of the foot point on the boundary graph z = psi(r).  Ring radii are
  geometric, exp(-j * step), so cores of different domains share rings and a
  rescaling by exp(-k * step) maps core nodes onto core nodes;
* a small unstructured closure filling the innermost quarter disc;
* an unstructured graded remainder produced by ``triangle``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import triangle

from .domain import Line

RING_DECADE = 5          # eps ladders use 5 points per decade; rings subdivide them


class MeshError(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# boundary-normal chart

class FermiChart:
    """(d, q) -> c(q) + d nu(q) with c(q) = (psi(q), q) and nu the unit inward normal."""

    def __init__(self, graph, n):
        self.graph = graph
        self.m = n - 2

    def forward(self, d, q):
        d = np.asarray(d, float)
        q = np.asarray(q, float)
        psi, p1, _, _ = self.graph(np.abs(q))
        p1 = np.sign(q) * p1
        s = np.sqrt(1 + p1 * p1)
        return np.stack([psi + d / s, q - d * p1 / s], axis=-1)

    def inverse(self, z, r, iters=30):
        z = np.asarray(z, float)
        r = np.asarray(r, float)
        d = z - self.graph(r)[0]
        q = r.copy()
        for _ in range(iters):
            x = self.forward(d, q)
            fz, fr = x[..., 0] - z, x[..., 1] - r
            psi, p1, p2, _ = self.graph(np.abs(q))
            s = np.sqrt(1 + p1 * p1)
            kap = p2 / s ** 3
            # columns of the Jacobian: nu and s (1 - kappa d) T
            nz, nr = 1 / s, -p1 / s
            tz, tr = p1 / s, 1 / s
            hq = s * (1 - kap * d)
            # nu and T are orthonormal, so the inverse Jacobian is a rotation and a scaling
            dd = -(fz * nz + fr * nr)
            dq = -(fz * tz + fr * tr) / hq
            d, q = d + dd, q + dq
            if np.max(np.abs(dd) + np.abs(dq), initial=0) < 1e-15 * (1 + np.max(np.abs(q), initial=0)):
                break
        return d, q

    def geometry(self, d, q):
        """Scale factor h of dq and physical radius with their first derivatives."""
        psi, p1, p2, p3 = self.graph(np.abs(q))
        sg = np.sign(q)
        p1, p3 = sg * p1, sg * p3
        s = np.sqrt(1 + p1 * p1)
        kap = p2 / s ** 3
        s_q = p1 * p2 / s
        kap_q = p3 / s ** 3 - 3 * p2 * p2 * p1 / s ** 5
        h = s * (1 - kap * d)
        h_d = -s * kap
        h_q = s_q * (1 - kap * d) - s * kap_q * d
        rr = q - d * p1 / s
        r_d = -p1 / s
        r_q = 1 - kap * d
        return h, h_d, h_q, rr, r_d, r_q

    def mean_curvature(self, q):
        """Sum of the principal curvatures of the boundary at foot radius q (sphere > 0)."""
        q = np.abs(np.asarray(q, float))
        psi, p1, p2, _ = self.graph(q)
        s = np.sqrt(1 + p1 * p1)
        kap = p2 / s ** 3
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(q > 0, p1 / (s * np.where(q > 0, q, 1.0)), p2)
        return kap + self.m * g

    def mean_curvature_derivs(self, q, step=1e-4):
        q = np.abs(np.asarray(q, float))
        H = self.mean_curvature
        h1 = (H(q + step) - H(q - step)) / (2 * step)
        h2 = (H(q + step) - 2 * H(q) + H(q - step)) / step ** 2
        return H(q), h1, h2


# ----------------------------------------------------------------------------

@dataclass
class Mesh:
    nodes: np.ndarray                 # (N, 2) meridian coordinates (z, r)
    tris: np.ndarray                  # (E, 3)
    dirichlet: np.ndarray             # (N,) bool, includes the origin node
    axis: np.ndarray                  # (N,) bool
    origin: int
    n: int
    chart: FermiChart
    chart_coords: np.ndarray          # (N, 2) (d, q) for nodes inside the chart, nan elsewhere
    grading: dict = field(default_factory=dict)
    core: dict = field(default_factory=dict)
    domain: object = field(default=None, repr=False)

    @property
    def free(self):
        return np.flatnonzero(~self.dirichlet)

    @property
    def n_free(self):
        return int(np.count_nonzero(~self.dirichlet))

    def element_diameters(self):
        p = self.nodes[self.tris]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.max(np.linalg.norm(e, axis=2), axis=1)

    def min_angles(self):
        p = self.nodes[self.tris]
        ang = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            c = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return np.min(np.stack(ang, axis=1), axis=1)

    def radius(self):
        return np.hypot(self.nodes[:, 0], self.nodes[:, 1])

    def h_min(self):
        return float(np.min(self.element_diameters()))

    def full(self, u_free):
        """Embed a free-node vector into a full nodal vector (zero on Dirichlet nodes)."""
        out = np.zeros(len(self.nodes))
        out[self.free] = u_free
        return out

    def locate(self, pts, k=24):
        """Element index and barycentric coordinates of each point; -1 outside the mesh."""
        from scipy.spatial import cKDTree
        if "tree" not in self.core:
            p = self.nodes[self.tris]
            self.core["tree"] = cKDTree(p.mean(axis=1))
        tree = self.core["tree"]
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        elem = np.full(len(pts), -1)
        bary = np.zeros((len(pts), 3))
        todo = np.arange(len(pts))
        if len(pts) > 20000:
            for c in range(0, len(pts), 20000):
                e, b = self.locate(pts[c:c + 20000], k)
                elem[c:c + 20000], bary[c:c + 20000] = e, b
            return elem, bary
        for kk in (k, 4 * k):
            if not len(todo):
                break
            kk = min(kk, len(self.tris))
            _, cand = tree.query(pts[todo], k=kk)
            cand = cand.reshape(len(todo), -1)
            p = self.nodes[self.tris[cand]]                     # (P, k, 3, 2)
            x = pts[todo][:, None, :]
            d1 = p[:, :, 1] - p[:, :, 0]
            d2 = p[:, :, 2] - p[:, :, 0]
            det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
            w = x - p[:, :, 0]
            l1 = (w[..., 0] * d2[..., 1] - w[..., 1] * d2[..., 0]) / det
            l2 = (d1[..., 0] * w[..., 1] - d1[..., 1] * w[..., 0]) / det
            l0 = 1 - l1 - l2
            lam = np.stack([l0, l1, l2], axis=-1)
            worst = lam.min(axis=-1)
            best = np.argmax(worst, axis=1)
            ok = worst[np.arange(len(todo)), best] >= -1e-10
            sel = todo[ok]
            elem[sel] = cand[ok, best[ok]]
            bary[sel] = np.clip(lam[ok, best[ok]], 0, 1)
            todo = todo[~ok]
        return elem, bary

    def interpolation_matrix(self, pts):
        """Sparse matrix taking nodal values to P1 values at pts (zero rows off the mesh)."""
        import scipy.sparse as sp
        elem, bary = self.locate(pts)
        ok = np.flatnonzero(elem >= 0)
        rows = np.repeat(ok, 3)
        cols = self.tris[elem[ok]].ravel()
        return sp.csr_matrix((bary[ok].ravel(), (rows, cols)), shape=(len(elem), len(self.nodes)))

    def interpolate(self, u, pts, outside=0.0):
        """Values of the P1 field u (full nodal vector) at pts; ``outside`` off the mesh."""
        elem, bary = self.locate(pts)
        out = np.full(len(elem), outside, dtype=float)
        ok = elem >= 0
        out[ok] = np.sum(bary[ok] * u[self.tris[elem[ok]]], axis=1)
        return out

    def dump(self, path):
        """Text dump: header, node lines "z r marker", element lines "i j k"."""
        marker = np.where(self.dirichlet, 1, 0) + np.where(self.axis, 2, 0)
        marker[self.origin] = 4
        with open(path, "w") as fh:
            fh.write(f"# nodes {len(self.nodes)} elements {len(self.tris)} n {self.n}\n")
            fh.write("# markers: 0 interior, 1 dirichlet, 2 axis, 3 dirichlet+axis, 4 origin\n")
            for (z, r), m in zip(self.nodes, marker):
                fh.write(f"{float(z)!r} {float(r)!r} {m}\n")
            for t in self.tris:
                fh.write(f"{t[0]} {t[1]} {t[2]}\n")


@dataclass(frozen=True)
class MeshOptions:
    h: float = 0.1
    layers: int = 8
    ratio: float = 0.5
    refine: int = 0
    min_angle: float = 28.0
    focus: tuple = ()                 # tuples (z, r, h_focus[, slope]): refinement around a point
    points: tuple = ()                # tuples (z, r): points that must be mesh nodes

    def level(self, k):
        return MeshOptions(self.h, self.layers, self.ratio, k, self.min_angle, self.focus, self.points)


def angular_cells(h):
    return max(4, int(round(1.2 / h)))


def ring_step(n_theta, refine=0):
    base = n_theta // 2 ** refine
    dth = 0.5 * np.pi / base
    p = max(1, int(round(math.log(10) / RING_DECADE / dth))) * 2 ** refine
    return math.log(10) / (RING_DECADE * p), p


def generate_mesh(domain, target_h=0.1, grading=None, options=None):
    """Conforming graded triangulation of the meridian section of ``domain``.

    ``grading`` is a dict with keys ``layers`` and ``ratio``; the innermost
    elements have a diameter close to target_h * ratio**layers.
    """
    if options is None:
        g = {"layers": 8, "ratio": 0.5} if grading is None else dict(grading)
        options = MeshOptions(h=target_h, layers=int(g.get("layers", 8)), ratio=float(g.get("ratio", 0.5)))
    opt = options
    if not 0 < opt.ratio < 1:
        raise MeshError(f"grading ratio must lie in (0, 1), got {opt.ratio}")
    scale = length_scale(domain)
    h = opt.h / 2 ** opt.refine
    n_theta = angular_cells(opt.h / scale) * 2 ** opt.refine
    step, per_decade = ring_step(n_theta, opt.refine)
    dth = 0.5 * np.pi / n_theta
    a = h * opt.ratio ** opt.layers                     # target innermost element size
    chart = FermiChart(domain.graph, domain.n)

    covers = domain.name == "half_ball" or (domain.name == "bumped_halfball" and domain.params["t"] == 0)
    # rings sit on scale * exp(-j step), so R -> 2R with h -> 2h gives an exactly scaled mesh
    if covers:
        rho0 = float(domain.params["R"])
        j0 = 0
    else:
        j0 = int(math.ceil(-math.log(domain.chart_radius / scale) / step - 1e-9))
        rho0 = scale * math.exp(-j0 * step)
    rho_in_target = max(a / dth, 1e-300)
    n_rings = max(1, int(math.floor(math.log(rho0 / rho_in_target) / step)))
    radii = rho0 * np.exp(-step * np.arange(n_rings + 1))
    theta = np.linspace(0, 0.5 * np.pi, n_theta + 1)

    # --- structured core ---------------------------------------------------
    R_, T_ = np.meshgrid(radii, theta, indexing="ij")
    core_dq = np.stack([R_ * np.cos(T_), R_ * np.sin(T_)], axis=-1).reshape(-1, 2)
    core_dq[:, 0] = np.where(np.isclose(T_.ravel(), 0.5 * np.pi), 0.0, core_dq[:, 0])
    core_dq[:, 1] = np.where(T_.ravel() == 0, 0.0, core_dq[:, 1])
    nt1 = n_theta + 1

    def cid(j, i):
        return j * nt1 + i

    tris = []
    for j in range(n_rings):
        for i in range(n_theta):
            a0, a1, b0, b1 = cid(j, i), cid(j, i + 1), cid(j + 1, i), cid(j + 1, i + 1)
            tris.append((a0, a1, b1))
            tris.append((a0, b1, b0))
    tris = np.array(tris, dtype=np.int64)
    dq_nodes = [core_dq]
    n_core = len(core_dq)

    # --- closure of the innermost quarter disc ------------------------------
    rin = radii[-1]
    inner_ring = np.arange(cid(n_rings, 0), cid(n_rings, n_theta) + 1)
    ring_pts = core_dq[inner_ring]
    n_side = max(1, int(round(rin / (rin * dth * 1.2))))
    ax = np.stack([np.linspace(0, rin, n_side + 1)[1:-1], np.zeros(n_side - 1)], axis=1)
    bd = np.stack([np.zeros(n_side - 1), np.linspace(rin, 0, n_side + 1)[1:-1]], axis=1)
    # loop: origin -> axis -> ring (theta 0 .. pi/2) -> boundary back to origin
    loop = np.concatenate([[[0.0, 0.0]], ax, ring_pts, bd])
    k = len(loop)
    seg = np.stack([np.arange(k), (np.arange(k) + 1) % k], axis=1)
    area = 0.5 * (rin * dth) ** 2 * math.sqrt(3) / 4 * 2
    cl = triangle.triangulate({"vertices": loop / rin, "segments": seg},
                              f"pq{opt.min_angle:.0f}Ya{area / rin ** 2:.8g}")
    cl_pts = cl["vertices"] * rin
    # map closure vertices: those on the ring reuse core ids
    cl_map = np.empty(len(cl_pts), dtype=np.int64)
    n_ax = len(ax)
    idx = n_core
    new_pts = []
    for v in range(len(cl_pts)):
        if 1 + n_ax <= v < 1 + n_ax + len(ring_pts):
            cl_map[v] = inner_ring[v - 1 - n_ax]
        else:
            cl_map[v] = idx
            new_pts.append(cl_pts[v])
            idx += 1
    new_pts = np.array(new_pts)
    # exact zeros on the axis and on the boundary line
    new_pts[np.abs(new_pts[:, 1]) < 1e-13 * rin, 1] = 0.0
    new_pts[np.abs(new_pts[:, 0]) < 1e-13 * rin, 0] = 0.0
    dq_nodes.append(new_pts)
    origin = int(cl_map[0])
    tris = np.concatenate([tris, cl_map[cl["triangles"]]])
    dq = np.concatenate(dq_nodes)
    nodes = chart.forward(dq[:, 0], dq[:, 1])
    nodes[dq[:, 1] == 0, 1] = 0.0
    nodes[origin] = 0.0
    dir_mask = np.zeros(len(nodes), dtype=bool)
    dir_mask[dq[:, 0] == 0] = True
    if covers:
        dir_mask[cid(0, 0):cid(0, n_theta) + 1] = True
    axis_mask = dq[:, 1] == 0
    chart_coords = dq.copy()

    # --- unstructured remainder ---------------------------------------------
    if not covers:
        outer_ring = np.arange(cid(0, 0), cid(0, n_theta) + 1)
        out = _outer_region(domain, chart, nodes[outer_ring], rho0, h, dth, opt, scale)
        o_pts, o_tris, o_dir, o_axis, arc_order = out
        o_map = np.empty(len(o_pts), dtype=np.int64)
        o_map[:len(outer_ring)] = outer_ring[arc_order]
        extra = len(o_pts) - len(outer_ring)
        o_map[len(outer_ring):] = len(nodes) + np.arange(extra)
        nodes = np.concatenate([nodes, o_pts[len(outer_ring):]])
        dir_mask = np.concatenate([dir_mask, o_dir[len(outer_ring):]])
        axis_mask = np.concatenate([axis_mask, o_axis[len(outer_ring):]])
        tris = np.concatenate([tris, o_map[o_tris]])
        extra_dq = np.full((extra, 2), np.nan)
        chart_coords = np.concatenate([chart_coords, extra_dq])
    dir_mask[origin] = True
    axis_mask[origin] = True

    tris = _orient(nodes, tris)
    mesh = Mesh(nodes=nodes, tris=tris, dirichlet=dir_mask, axis=axis_mask, origin=origin,
                n=domain.n, chart=chart, chart_coords=chart_coords,
                grading={"layers": opt.layers, "ratio": opt.ratio, "h": h, "refine": opt.refine,
                         "inner_radius": float(rin)},
                core={"radii": radii, "n_theta": n_theta, "step": step, "per_decade": per_decade,
                      "j0": j0, "anchor": rho0, "n_core": n_core, "covers": covers},
                domain=domain)
    _check(mesh)
    return mesh


def _orient(nodes, tris):
    p = nodes[tris]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - \
          (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    tris = tris.copy()
    neg = det < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def _check(mesh):
    p = mesh.nodes[mesh.tris]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - \
          (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    diam = mesh.element_diameters()
    bad = np.flatnonzero(det <= 1e-14 * diam ** 2)
    if len(bad):
        raise MeshError(f"{len(bad)} degenerate elements, first at {p[bad[0]].tolist()}")
    if np.min(mesh.nodes[:, 1]) < 0:
        raise MeshError("mesh has nodes with r < 0")


def length_scale(domain):
    """Reference length of a preset (its R or R0); 1 for custom curves."""
    p = domain.params
    return float(p.get("R", p.get("R0", 1.0)))


def _size_fn(h, dth, focus):
    def size(x):
        rad = np.hypot(x[..., 0], x[..., 1])
        s = np.minimum(h, dth * np.maximum(rad, 1e-300))
        for fz, fr, hf, slope in focus:
            dist = np.hypot(x[..., 0] - fz, x[..., 1] - fr)
            s = np.minimum(s, hf + slope * dist)
        return s
    return size


def _sample_piece(piece, t0, t1, size, dense=2000):
    if isinstance(piece, Line) and np.allclose(piece.point(t0), piece.point(t1)):
        return np.zeros((0, 2))
    t = np.linspace(t0, t1, dense)
    x = piece.point(t)
    ds = np.linalg.norm(np.diff(x, axis=0), axis=1)
    mid = 0.5 * (x[1:] + x[:-1])
    cnt = np.concatenate([[0.0], np.cumsum(ds / size(mid))])
    m = max(1, int(math.ceil(cnt[-1])))
    levels = np.linspace(0, cnt[-1], m + 1)
    ts = np.interp(levels, cnt, t)
    return piece.point(ts)


def _locate(piece, target, near_end):
    # parameter of the point of ``piece`` closest to ``target``, searched from one end
    t = np.linspace(0, 1, 4001)
    dist = np.linalg.norm(piece.point(t) - target, axis=1)
    i = int(np.argmin(dist))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, len(t) - 1)]
    for _ in range(60):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if np.linalg.norm(piece.point(m1) - target) < np.linalg.norm(piece.point(m2) - target):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def _outer_region(domain, chart, arc_pts, rho0, h, dth, opt, scale=1.0):
    pieces = list(domain.pieces)
    # rotate so that pieces[0] starts at the origin
    k0 = next(i for i, p in enumerate(pieces) if np.hypot(*p.point(0.0)) < 1e-12)
    pieces = pieces[k0:] + pieces[:k0]
    first, last = pieces[0], pieces[-1]
    axis_pt = arc_pts[0]           # chart point (rho0, 0)
    foot_pt = arc_pts[-1]          # chart point (0, rho0)
    if first.tag == "axis":
        t_first = _locate(first, axis_pt, 0)
        t_last = _locate(last, foot_pt, 1)
        core_arc = arc_pts[::-1]   # from foot to axis, closing the loop
        arc_order = np.arange(len(arc_pts))[::-1]
    else:
        t_first = _locate(first, foot_pt, 0)
        t_last = _locate(last, axis_pt, 1)
        core_arc = arc_pts
        arc_order = np.arange(len(arc_pts))
    focus = [(f[0], f[1], f[2] / 2 ** opt.refine, f[3] if len(f) > 3 else 0.3) for f in opt.focus]
    size = _size_fn(h, dth, focus)
    verts, tags = [], []
    # core arc first so its vertices keep their indices
    for j, p in enumerate(core_arc):
        verts.append(p)
        tags.append("core")
    chain = [(first, t_first, 1.0)] + [(p, 0.0, 1.0) for p in pieces[1:-1]] + [(last, 0.0, t_last)]
    for piece, a, b in chain:
        pts = _sample_piece(piece, a, b, size)
        for p in pts[1:-1] if len(pts) > 1 else []:
            verts.append(p)
            tags.append(piece.tag)
        if len(pts) and piece is not last:
            verts.append(pts[-1])
            tags.append("corner")
    verts = np.array(verts)
    nv = len(verts)
    # the loop is core_arc[0..], then the chain, and closes back to core_arc[0]
    order = list(range(len(core_arc), nv)) + list(range(len(core_arc)))
    # chain starts where core_arc ends: orient so core_arc end meets chain start
    seg = np.array(list(zip(range(nv), list(range(1, nv)) + [0])))
    n_fixed = nv
    extra = [np.array(p, float) for p in opt.points]
    extra = [p for p in extra if domain.contains(p[0], p[1])[0]
             and np.hypot(*p) > rho0 * 1.05]
    vin = np.concatenate([verts, np.array(extra).reshape(-1, 2)])
    flags = f"pq{opt.min_angle:.0f}Y"
    # triangulate in units of the domain scale
    L = scale
    pslg = {"vertices": vin / L, "segments": seg}
    tri = triangle.triangulate(pslg, flags + f"a{math.sqrt(3) / 4 * (h / L) ** 2:.10g}")
    for _ in range(60):
        v, t = tri["vertices"], tri["triangles"]
        cen = v[t].mean(axis=1) * L
        p = v[t]
        ar = 0.5 * np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                          - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        target = math.sqrt(3) / 4 * (size(cen) / L) ** 2
        if np.all(ar <= 1.5 * target):
            break
        tri = triangle.triangulate({"vertices": v, "triangles": t, "segments": tri["segments"],
                                    "triangle_max_area": target[:, None]}, "r" + flags + "a")
    v, t = tri["vertices"] * L, tri["triangles"]
    v[:len(vin)] = vin
    # classify vertices
    o_dir = np.zeros(len(v), dtype=bool)
    o_axis = np.zeros(len(v), dtype=bool)
    for i, tg in enumerate(tags):
        if tg == "dirichlet":
            o_dir[i] = True
    # corners and later vertices: decide by geometry
    for i in range(len(v)):
        if i < len(core_arc):
            continue
        if i < nv and tags[i] == "dirichlet":
            continue
        if abs(v[i, 1]) < 1e-12:
            o_axis[i] = True
            v[i, 1] = 0.0
        d = domain.meridian_distance(v[i, 0], v[i, 1])
        if d < 1e-10 * max(1.0, np.hypot(*v[i])):
            o_dir[i] = True
    if len(v) > nv + len(extra):
        # triangle was told not to split boundary segments; interior points only
        pass
    return v, t, o_dir, o_axis, arc_order
