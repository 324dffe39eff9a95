import numpy as np
import pytest

from ppc_admix.admixture_em import AssignmentPosterior, FitConfig, FittedModel, ModelParams, fit
from ppc_admix.genotype_data import simulate_dataset


@pytest.fixture(scope="session")
def small_fit():
    dataset, truth = simulate_dataset(40, 120, 2, seed=11)
    fitted = fit(dataset, 2, FitConfig(iterations=150, seed=3))
    return dataset, truth, fitted


def make_fitted(theta, phi, z_map):
    """A FittedModel assembled from explicit parameters (no EM)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return FittedModel(
        params=ModelParams(theta=theta, phi=phi),
        posterior=AssignmentPosterior(q=None, z_map=np.asarray(z_map)),
        loglik_trace=np.zeros(1),
        config=FitConfig(iterations=1),
    )
