"""
Kernels and Gaussian process classification
===========================================

Kernels are written as small expressions, the same text the command line
accepts. A Laplace-approximation GP classifier is then fitted on two
separated clouds.
"""

import numpy as np

from acrosense.data import Corpus, Recording
from acrosense.gpc import fit
from acrosense.kernels import parse_kernel
from acrosense.preprocess import FeatureMatrix

k = parse_kernel("C(925.599) * RQ(l=22.788, a=23618.3)")
print(k, "-> k(x, x) =", k.diag_value())

# For very large alpha the rational quadratic turns into the RBF
d2 = np.linspace(0, 9, 5)
print(parse_kernel("RQ(l=1, a=1e6)").from_sqdist(d2) - parse_kernel("RBF(l=1)").from_sqdist(d2))

# Two clouds, one per label
rng = np.random.default_rng(0)
X = np.vstack([rng.normal(size=(20, 2)), rng.normal(size=(20, 2)) + 5])
meta = [(f"r{i}", f"A{i % 4}", "left" if i < 20 else "right") for i in range(40)]
features = FeatureMatrix(X, meta, {"channels": ["xy"], "block_size": 2})

model = fit(features, parse_kernel("C(10) * RBF(l=2)"))
print("log marginal likelihood: %.3f" % model.log_marginal_likelihood)
probe = np.array([[0.0, 0.0], [2.5, 2.5], [5.0, 5.0]])
print(np.round(model.predict_proba(probe), 3))
