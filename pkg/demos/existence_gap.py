"""Strict-inequality test for extremals: compare mu on a domain with the half-space value."""
from hardylab.domain import make_domain
from hardylab.mesh import MeshOptions
from hardylab.solvers import existence_gap

opt = MeshOptions(h=0.1, layers=8)
for name, kw, gamma in [("bumped_halfball", {"t": 0.2}, 1.0),
                        ("bumped_halfball", {"t": -0.2}, 1.0),
                        ("tangent_ball", {}, 2.1)]:
    rep, _ = existence_gap(make_domain(name, **kw), gamma, 1.0, opt)
    print(f"{name:16s} {str(kw):12s} gamma {gamma}: mu = {rep.mu_domain:.4f}, "
          f"half space {rep.mu_halfspace:.4f}, gap {rep.gap:+.4f}, extremal predicted: {rep.predicts_extremal}")
