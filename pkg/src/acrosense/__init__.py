"""Classification of acrobatic elements from single-IMU recordings.

Gaussian process classification on autocorrelation power spectra, with
group-aware cross-validation, learning curves and permutation importance.
"""

from .data import CHANNELS, Corpus, Recording, SplitPlan, filter_rare_labels, load_corpus, make_split, write_corpus
from .errors import AcroError, NumericalError, ValidationError
from .evaluation import (
    CvPlan, SearchSpace, confusion_matrix, cross_validate, learning_curve, make_kfold, make_sgkf,
    permutation_importance, random_search,
)
from .gpc import LaplaceState, TrainedModel, fit, laplace_fit_binary
from .kernels import RBF, Constant, Matern, RationalQuadratic, kernel_eval, parse_kernel
from .preprocess import FeatureMatrix, PipelineConfig, build_features, pad_zeros, resample_linear
from .report import EvalReport
from .spectral import SpectrumConfig, build_spectra_features, fft, power_spectrum
from .synthgen import SynthConfig, generate
from .unsupervised import adjusted_rand_index, fit_pca, kmeans

__version__ = "0.1.0"
