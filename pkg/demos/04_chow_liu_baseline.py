"""Fit a Chow-Liu tree to Game-of-Life snapshots and reuse its edges as a circuit layout.

Run: python3 demos/04_chow_liu_baseline.py
"""
import numpy as np

from gbbm import ansatz as az
from gbbm import baselines as bl
from gbbm import datasets as ds
from gbbm import training as tr

rng = np.random.default_rng(0)
data = ds.gol_generate(rows=4, cols=4, steps=30, n_samples=4000, rng=rng)
train, test = ds.split(data, 0.5)
print("Hamming-weight histogram:", ds.hamming_histogram(train))

tree = bl.chow_liu_fit(train)
print("tree edges (parent, child), breadth-first from mode 0:", tree.edges)
print("mean log-likelihood, tree vs independent bits:",
      tree.log_likelihood(test).mean(), bl.independent_log_likelihood(test).mean())

spec = az.graph_spec(train.d, tree.edges, layers=1)
print("graph-layout circuit on those edges:", az.param_count(spec), "parameters")

sigma = tr.median_heuristic(train, rng=0)
for name, samples in (("chow-liu", bl.tree_sample(tree, 100_000, rng)),
                      ("uniform", bl.uniform_sample(train.d, 100_000, rng)),
                      ("training set", train)):
    print(f"{name:>12s}: exact test MMD^2 at sigma={sigma:g} is {tr.exact_mmd2(samples, test, sigma):.3e}")
