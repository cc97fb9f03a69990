"""
K-fold against stratified group K-fold
======================================

Plain K-fold lets recordings of one athlete land on both sides of a fold,
so its scores tend to be optimistic. Stratified group K-fold keeps each
athlete on one side while balancing the label mix.
"""

import numpy as np

from acrosense.data import filter_rare_labels, make_split
from acrosense.evaluation import cross_validate, make_plan
from acrosense.kernels import parse_kernel
from acrosense.pipeline import split_features
from acrosense.spectral import SpectrumConfig, build_spectra_features
from acrosense.synthgen import SynthConfig, generate

corpus = filter_rare_labels(generate(SynthConfig(n_athletes=10, n_recordings=400, seed=2)))
split = make_split(corpus, 2, 80, seed=2)
train, holdout = split_features(build_spectra_features(corpus, SpectrumConfig(bins=200), split.train_ids), split)

kernel = parse_kernel("C(100) * RQ(l=30, a=30)")
for scheme in ("kf", "sgkf"):
    plan = make_plan(scheme, train, k=5, seed=0)
    groups = train.groups
    leaks = sum(bool(set(groups[tr]) & set(groups[va])) for tr, va in plan.folds)
    res = cross_validate(train, kernel, plan)
    print("%-4s folds %s  leaking folds %d  accuracy %.3f +- %.3f"
          % (scheme, plan.fold_sizes(), leaks, res.mean, res.std))
