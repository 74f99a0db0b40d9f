from collections import Counter

import numpy as np
import pytest

from hardylab.domain import make_domain
from hardylab.mesh import MeshError, MeshOptions, generate_mesh

PRESETS = [("half_ball", {}), ("tangent_ball", {}), ("chopped_ball", {"delta": 0.2}),
           ("bumped_halfball", {"t": -0.2})]


def _edges(tris):
    e = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    return Counter(map(tuple, e))


def _signed_areas(mesh):
    p = mesh.nodes[mesh.tris]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


@pytest.fixture(scope="module")
def hb6():
    return generate_mesh(make_domain("half_ball"), options=MeshOptions(h=0.1, layers=6, ratio=0.5))


def test_grading_and_quality(hb6):
    target = 0.1 * 0.5 ** 6
    assert 0.5 * target < hb6.h_min() < 2 * target
    assert hb6.min_angles().min() > 20.0


def test_refinement_quadruples_triangles():
    dom = make_domain("half_ball")
    counts = [len(generate_mesh(dom, options=MeshOptions(h=0.1, layers=6, refine=k)).tris) for k in range(3)]
    for a, b in zip(counts, counts[1:]):
        assert 3.0 < b / a < 5.0


def test_refinement_decreases_max_diameter():
    dom = make_domain("tangent_ball")
    d = [generate_mesh(dom, options=MeshOptions(h=0.1, layers=6, refine=k)).element_diameters().max()
         for k in range(3)]
    assert d[0] > d[1] > d[2]


@pytest.mark.parametrize("preset,params", PRESETS)
def test_markers_and_conformity(preset, params):
    dom = make_domain(preset, **params)
    mesh = generate_mesh(dom, options=MeshOptions(h=0.1, layers=6))
    assert np.all(mesh.nodes[:, 1] >= 0)
    assert np.all(mesh.nodes[mesh.axis, 1] == 0.0)
    assert np.array_equal(mesh.nodes[mesh.origin], [0.0, 0.0])
    assert mesh.dirichlet[mesh.origin]
    assert np.all(_signed_areas(mesh) > 0)
    # conforming: every edge is shared by at most two triangles, boundary edges lie on the curve or axis
    edges = _edges(mesh.tris)
    assert max(edges.values()) == 2
    on_bdry = mesh.dirichlet | mesh.axis
    for (i, j), c in edges.items():
        if c == 1:
            assert on_bdry[i] and on_bdry[j]
    for i in np.flatnonzero(mesh.dirichlet):
        assert dom.meridian_distance(*mesh.nodes[i]) < 1e-6


@pytest.mark.parametrize("preset,params", PRESETS)
def test_mesh_area_matches_section(preset, params):
    dom = make_domain(preset, **params)
    mesh = generate_mesh(dom, options=MeshOptions(h=0.05, layers=6))
    poly = dom.polygon(4000)
    x, y = poly[:, 0], poly[:, 1]
    exact = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    # polygonal approximation of curved pieces: O(h^2)
    assert _signed_areas(mesh).sum() == pytest.approx(exact, rel=5e-3)


def test_deterministic():
    dom = make_domain("bumped_halfball", t=0.1)
    a = generate_mesh(dom, options=MeshOptions(h=0.1, layers=8))
    b = generate_mesh(dom, options=MeshOptions(h=0.1, layers=8))
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.tris, b.tris)


def test_scaled_domains_give_scaled_meshes():
    a = generate_mesh(make_domain("tangent_ball", R=1.0), options=MeshOptions(h=0.1, layers=6))
    b = generate_mesh(make_domain("tangent_ball", R=2.0), options=MeshOptions(h=0.2, layers=6))
    assert a.nodes.shape == b.nodes.shape
    assert np.allclose(2 * a.nodes, b.nodes, atol=1e-9)


def test_bad_ratio():
    with pytest.raises(MeshError):
        generate_mesh(make_domain("half_ball"), options=MeshOptions(ratio=1.5))


def test_grading_dict_interface():
    mesh = generate_mesh(make_domain("half_ball"), 0.1, {"layers": 4, "ratio": 0.5})
    assert 0.5 * 0.1 / 16 < mesh.h_min() < 2 * 0.1 / 16


def test_interpolation_reproduces_affine(hb6):
    f = 2.0 + hb6.nodes[:, 0] - 3 * hb6.nodes[:, 1]
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 0.7, (300, 2))
    inside = np.hypot(pts[:, 0], pts[:, 1]) < 0.99
    vals = hb6.interpolate(f, pts[inside])
    assert np.allclose(vals, 2.0 + pts[inside, 0] - 3 * pts[inside, 1], atol=1e-12)
    assert hb6.interpolate(f, np.array([[-0.5, 0.5]]), outside=np.nan)[0] != hb6.interpolate(f, [[0.1, 0.1]])[0]


def test_dump_format(tmp_path, hb6):
    p = tmp_path / "mesh.txt"
    hb6.dump(p)
    lines = p.read_text().splitlines()
    assert lines[0] == f"# nodes {len(hb6.nodes)} elements {len(hb6.tris)} n 3"
    body = [l for l in lines if not l.startswith("#")]
    assert len(body) == len(hb6.nodes) + len(hb6.tris)
    node_lines = body[:len(hb6.nodes)]
    z, r, m = node_lines[hb6.origin].split()
    assert (float(z), float(r), m) == (0.0, 0.0, "4")
    back = np.array([[float(v) for v in l.split()[:2]] for l in node_lines])
    assert np.array_equal(back, hb6.nodes)
