# %% [markdown]
# # The entropic best response on a 2x2 grid
#
# On two points per side a coupling with fixed marginals has one free
# entry, so the best response can be found by bisection and compared with
# the log-domain Sinkhorn solver.

# %%
import numpy as np

from sfwot.inner import first_order_residual, solve_inner
from sfwot.oracles import TwoByTwoInstance, inner_oracle_2x2
from sfwot.measures import total_variation

# %% [markdown]
# A symmetric linear cost that penalizes the off-diagonal. The closed form
# of the diagonal entry is ``1 / (2 (1 + e^-1))``.

# %%
inst = TwoByTwoInstance(0.5, 0.5, np.zeros((2, 2)), np.array([[0.0, 1.0], [1.0, 0.0]]))
exact = inner_oracle_2x2(inst)
res = solve_inner(inst.kernel(), inst.phi, tol=1e-13, max_iters=1000)
print("bisection :", exact.probs[0, 0])
print("closed    :", 1 / (2 * (1 + np.exp(-1))))
print("sinkhorn  :", res.plan.probs[0, 0], "after", res.iterations, "sweeps")

# %% [markdown]
# Random instances, both update schedules. Jacobi uses the same matrix for
# both potential updates and needs more sweeps.

# %%
rng = np.random.default_rng(0)
for _ in range(5):
    inst = TwoByTwoInstance(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                            rng.uniform(-2, 2, (2, 2)), rng.uniform(-2, 2, (2, 2)))
    ref = inner_oracle_2x2(inst)
    row = []
    for sched in ("gauss_seidel", "jacobi"):
        r = solve_inner(inst.kernel(), inst.phi, tol=1e-12, max_iters=100000, schedule=sched)
        row.append(f"{sched}: TV {total_variation(r.plan, ref):.1e} in {r.iterations:3d} sweeps")
    print(" | ".join(row))

# %% [markdown]
# Adding a constant to the potential leaves the plan alone and moves the
# additive constant of the optimality system by the same amount.

# %%
a = solve_inner(inst.kernel(), inst.phi, tol=1e-13, max_iters=10000)
b = solve_inner(inst.kernel(), inst.phi + 2.0, tol=1e-13, max_iters=10000)
print("plan change     :", np.abs(a.plan.probs - b.plan.probs).max())
print("constant shift  :", b.log_constant - a.log_constant)
print("stationarity    :", first_order_residual(a, inst.kernel(), inst.phi))
