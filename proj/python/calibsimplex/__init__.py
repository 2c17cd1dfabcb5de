"""Calibrated likelihoods on the simplex."""

from ._core import (
    CalibError,
    CdaModel,
    LdaModel,
    QdaModel,
    a_dist,
    a_inner,
    a_norm,
    cda_fit,
    cllr,
    cllr_decompose,
    c_mc,
    divergence_matrix,
    eer,
    eer_from_mu,
    gen_circles,
    gen_gaussians,
    gen_gaussians3,
    gen_moons,
    ilr,
    ilr_inv,
    lda_fit,
    mean_chain,
    pairwise_trials,
    perturb,
    power,
    qda_fit,
    sample_family,
    sigma_from_divergences,
)

__all__ = [name for name in dir() if not name.startswith("_")]
