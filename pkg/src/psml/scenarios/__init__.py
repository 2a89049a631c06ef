from .bernoulli import BernoulliModel, bernoulli_pairwise_grad, bernoulli_pairwise_prob, xi
from .gaussian import (
    LinearGaussianModel,
    gaussian_pairwise_grad,
    gaussian_pairwise_prob,
    inverse_square_cov,
)
from .knn import KnnSelectionRule, build_knn_rule
from .spectrum import SpectrumModel, spectrum_pairwise_grad, spectrum_pairwise_prob

__all__ = [
    "BernoulliModel",
    "KnnSelectionRule",
    "LinearGaussianModel",
    "SpectrumModel",
    "bernoulli_pairwise_grad",
    "bernoulli_pairwise_prob",
    "build_knn_rule",
    "gaussian_pairwise_grad",
    "gaussian_pairwise_prob",
    "inverse_square_cov",
    "spectrum_pairwise_grad",
    "spectrum_pairwise_prob",
    "xi",
]
