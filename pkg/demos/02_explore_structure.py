"""
Looking for structure before training
=====================================

Project a synthetic corpus onto a few principal components, cluster it with
k-means and ask how well the clusters agree with the element labels.
Interpolated recordings usually cluster better than zero-padded ones,
because padding mixes duration into every feature.
"""

from acrosense.preprocess import PipelineConfig, build_features
from acrosense.synthgen import SynthConfig, generate
from acrosense.unsupervised import explore

corpus = generate(SynthConfig(n_athletes=8, n_recordings=300, seed=1))
longest = max(r.length for r in corpus)

for mode, length in (("interpolate", 898), ("pad", longest)):
    features = build_features(corpus, PipelineConfig(mode=mode, target_length=length), corpus.ids)
    pca, projected, report = explore(features, q=4, seed=0)
    ratios = ", ".join("%.3f" % v for v in pca.explained_variance_ratio)
    print("%-11s ratios [%s]  ARI %.3f" % (mode, ratios, report.ari))
