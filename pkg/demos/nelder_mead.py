"""
Bounded Nelder-Mead on a toy objective
======================================

The optimizer the controller uses, driven directly: one hand-checkable
reflection in two dimensions, then a full run on a 5-D quadratic.
"""
import numpy as np

from autobias import optimizer as nm
from autobias.sensor import BiasBounds, BiasVector

# %%
# Two dimensions, f(x) = x0 + x1, simplex {(0,0), (1,0), (0,1)}: the worst
# vertex (0,1) is reflected through the centroid (0.5, 0) to (1,-1).
s = nm.SimplexState([], np.array([-10.0, -10.0]), np.array([10.0, 10.0]))
for p in ((0, 0), (1, 0), (0, 1)):
    s.vertices.append(s._new_vertex(np.array(p, dtype=float)))
nm.nm_step(s, lambda x: x[0] + x[1])
print("operation:", s.last_op, "vertices:", [v.x.tolist() for v in s.vertices])

# %%
# Five dimensions inside the default bias box.
c = np.array([30.0, 40.0, -10.0, 20.0, 50.0])
state = nm.minimize(lambda x: float(np.sum((x - c) ** 2)), BiasVector(), BiasBounds())
print(f"status {state.status} after {state.evaluations} evaluations")
print("best point", np.round(state.best.x, 2), "rounded", nm.best_bias(state).as_dict())
