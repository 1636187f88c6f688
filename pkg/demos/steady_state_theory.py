"""Theoretical learning curves and steady-state error of MKRSL.

Run with ``python demos/steady_state_theory.py``.
"""
import numpy as np

from krsl import (
    AlgorithmSpec,
    Binary,
    Cauchy,
    ExperimentConfig,
    Gaussian,
    KrslParams,
    Laplace,
    TheoryConfig,
    compare_with_theory,
    run_experiment,
    steady_state_emse_exact,
    steady_state_emse_taylor,
)

params = KrslParams(1.0, 8.0)

# The Taylor approximation is accurate for small steps and needs no root
# finding.  Cauchy noise has no variance, yet the prediction is finite
# because the score is bounded.
print("noise      Taylor EMSE   exact EMSE")
for name, noise in (("gaussian", Gaussian(1.0)), ("binary", Binary(1.0)),
                    ("laplace", Laplace(1.0)), ("cauchy", Cauchy(1.0))):
    cfg = TheoryConfig(params, 3e-6, m=20, noise=noise)
    print(f"{name:9s}  {steady_state_emse_taylor(cfg):.6f}      {steady_state_emse_exact(cfg):.6f}")

# Transient recursion against a Monte Carlo learning curve.
exp = ExperimentConfig(true_weights=np.ones(10) / np.sqrt(10), noise=Gaussian(1.0),
                       algorithms=(AlgorithmSpec("mkrsl", 0.005, {"sigma": 1.0, "lam": 2.0}, "MKRSL"),),
                       iterations=2000, runs=200, seed=3, steady_state_window=500, input_structure="independent")
cmp = compare_with_theory(run_experiment(exp)["MKRSL"], exp)
print("\niteration   theory WEP   relative deviation of simulation")
for i in (0, 100, 250, 500, 1000, 1999):
    # deviations start after the burn-in
    dev = f"{cmp.deviation[i - cmp.burn_in]:.3f}" if i >= cmp.burn_in else "(burn-in)"
    print(f"{i:9d}   {cmp.theory_wep[i]:.5f}      {dev}")
print(f"\nsteady-state EMSE: theory {cmp.theory_emse:.5f}, simulation {cmp.simulated_emse:.5f}")
