"""Generalized Bayes product partition models: loss-based clustering with uncertainty quantification."""

from .bregman import adjusted_centroids, bregman_divergence, bregman_kmeans, plain_centroids
from .core import (
    BERNOULLI_KL_MODEL,
    BINARY,
    CONTINUOUS,
    SQ_EUCLIDEAN_MODEL,
    CohesionModel,
    ConfigError,
    Dataset,
    DegenerateDataError,
    DomainError,
    GBPPMError,
    GibbsConfig,
    InitSpec,
    InvariantError,
    Partition,
    ResourceError,
    enumerate_partitions,
    exact_posterior,
    log_posterior_unnormalized,
    loss,
    manhattan,
    minkowski,
    pairwise_sq_euclidean,
    stirling2,
)
from .dissim import DissimMatrix, k_dissimilarities, pairwise_matrix, reallocation_delta
from .fit import MapFit, fit_map
from .gibbs import ChainSamples, ChainState, full_conditional, run_chain, sample_lambda
from .select import avg_silhouette, elbow_curve, silhouette_curve
from .sim import MixtureSpec, gen_mixture, oracle_coclustering
from .uq import (
    coclustering,
    credible_ball,
    medoids,
    misclassification,
    predictive_allocation,
    vi_distance,
    vi_point_estimate,
)

__version__ = "0.1.0"
