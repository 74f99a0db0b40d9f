"""Above n^2/4 the quotient is unbounded below: J(u_eps) ~ -c (ln 1/eps)^{1/2}."""
import numpy as np

from hardylab.domain import make_domain
from hardylab.testfn import blowup_scan, default_ladder

tb = make_domain("tangent_ball")
a = blowup_scan(tb, 2.5, 1.0)
for e, J in zip(a.epsilons[::3], a.J[::3]):
    print(f"eps {e:8.1e}   J {J:9.4f}")
print(f"log-log exponent on 1e-2..1e-5: {a.slope:.3f}")
print(f"log-log exponent on 1e-3..1e-8: {blowup_scan(tb, 2.5, 1.0, default_ladder(1e-8, 1e-3)).slope:.3f}  (1/2 in the limit)")

b = blowup_scan(tb, 2.2, 1.0, (1e-2, 1e-3, 1e-4, 1e-5))
print(f"gamma = 2.2 stays bounded: J = {np.round(b.J, 4)}")
