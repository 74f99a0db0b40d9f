"""Hardy constants of the presets, and how slowly the half ball creeps down to 9/4.

The minimizer concentrates at the boundary point 0, so the discrete value
approaches n^2/4 only logarithmically in the grading depth.
"""
from hardylab.domain import make_domain
from hardylab.mesh import MeshOptions
from hardylab.solvers import hardy_constant, hardy_ladder

hb = make_domain("half_ball")
for layers in (8, 16, 32):
    vals = [r.value for r in hardy_ladder(hb, MeshOptions(h=0.1, layers=layers), levels=2)]
    print(f"half_ball  layers {layers:2d}: " + "  ".join(f"{v:.4f}" for v in vals))

print()
opt = MeshOptions(h=0.1, layers=16)
for name, kw in [("tangent_ball", {}), ("chopped_ball", {"delta": 0.4}), ("chopped_ball", {"delta": 0.1}),
                 ("bumped_halfball", {"t": 0.2}), ("bumped_halfball", {"t": -0.2})]:
    r = hardy_constant(make_domain(name, **kw), opt)
    print(f"{name:16s} {str(kw):16s} gamma_H = {r.value:.4f}")
