"""The 2-D desk problem on the unit square, and where it falls short.

Run with ``python3 demos/05_two_dimensional.py`` (about ten seconds).

Same pipeline as the 1-D reconstruction demo, on a 25 x 25 spatial grid
with a 7 x 7 x 6 tensor basis.  Two runs from the same interior start:

* with the full admissible set, the method reaches the boundary of the
  cone condition within a few dozen steps and stops there
  (``BOUNDARY_MINIMIZER``);
* with the cone condition switched off, ``J`` keeps decreasing, but the
  iterate moves away from the truth: at this basis size the discrete
  minimizer of ``J`` is not close to the projected ``w*``, whose own
  residual is printed for comparison.

So in 2-D the desk basis is too coarse for the functional to pin down
``c``; a finer basis (and a longer run) is needed.
"""

from dataclasses import replace

import numpy as np

from carleman_cip.admissible import membership
from carleman_cip.datasets import build_dataset, desk_2d, sample_admissible
from carleman_cip.descent import DescentConfig, minimize
from carleman_cip.functional import FunctionalConfig, Problem, eval_functional, theorem_alpha
from carleman_cip.reconstruct import assemble_and_solve, core_mask, default_space, relative_l2

ds = build_dataset(desk_2d())
L = ds.lifting
print(f"grid {ds.grid.shape}, basis {ds.basis.shape} ({ds.basis.size} functions)")
print(f"lifting residuals: Dirichlet {L.dirichlet_residual:.2e}, Neumann {L.neumann_residual:.2e}")
print(f"projected truth is interior: {membership(ds.B_star, ds.params, ds.basis).interior}")

cfg = FunctionalConfig(0.0, theorem_alpha(1e-7, 0.0, ds.geometry.N), 3, 1e-7)
print(f"J at the projected truth: {eval_functional(ds.B_star, ds.problem, cfg):.4e}")
start = sample_admissible(ds, 1, np.random.default_rng(0), scale=0.2)[0]
core = core_mask(ds.grid, L.layer_width)


def c_error(B):
    aux = assemble_and_solve(ds.basis.synth(B)[..., 0], L.F[..., 0], ds.params.lap_f, default_space(ds.grid))
    return relative_l2(aux.field(), ds.c_true, ds.grid, core)


print(f"\nstart point: J = {eval_functional(start, ds.problem, cfg):.4e}, c error on the core {c_error(start):.4f}")

no_cone = Problem(replace(ds.params, check_cone=False), ds.basis)
for label, problem in (("full admissible set", ds.problem), ("cone condition off", no_cone)):
    trace = minimize(start, problem, cfg, DescentConfig(sigma_fraction=1.0, max_iters=2000))
    print(f"\n{label}:")
    print("  " + trace.summary().replace("\n", "\n  "))
    print(f"  c error on the core {c_error(trace.terminal):.4f}")
