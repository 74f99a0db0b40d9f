"""Boundary mass at gamma = 2.1: negative on round balls, increasing with the ball,
and fading on the flat truncations half_ball(R) as R grows."""
from hardylab.asymptotics import boundary_mass
from hardylab.domain import make_domain
from hardylab.mesh import MeshOptions

for R in (1.0, 2.0, 4.0):
    tb = boundary_mass(make_domain("tangent_ball", R=R), 2.1, MeshOptions(h=0.1 * R, layers=16))
    hb = boundary_mass(make_domain("half_ball", R=R), 2.1, MeshOptions(h=0.1 * R, layers=16))
    print(f"R = {R:3.1f}   tangent_ball m = {tb.mass:8.4f}   half_ball m = {hb.mass:8.4f}")
