"""Admixture model fitted by expectation maximization.

Each allele copy ``x[i, l, j]`` has a latent population ``z[i, l, j]`` drawn
from the individual's ancestry proportions ``theta[i]``; given ``z = k`` the
allele is Bernoulli(``phi[l, k]``). The E-step computes the posterior over
``z`` for every allele copy and the M-step re-estimates ``theta`` and ``phi``
from those responsibilities.

Populations are 0-based in memory. Files written by :func:`save_model` use
1-based population numbers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .genotype_data import GenotypeDataset, empirical_maf, to_alleles
from .seeding import STREAM_INIT, rng_for

log = logging.getLogger(__name__)

INIT_CLAMP = (0.05, 0.95)
UPDATE_CLAMP = (1e-6, 1.0 - 1e-6)


@dataclass(frozen=True)
class ModelParams:
    theta: np.ndarray  # (n, K)
    phi: np.ndarray  # (L, K)
    alpha: float = 1.0
    gamma: float = 1.0

    @property
    def K(self):
        return self.theta.shape[1]


@dataclass(frozen=True)
class AssignmentPosterior:
    q: np.ndarray  # (n, L, 2, K)
    z_map: np.ndarray  # (n, L, 2), 0-based


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 1000
    seed: int = 0
    init_clamp: tuple = INIT_CLAMP
    update_clamp: tuple = UPDATE_CLAMP

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        for lo, hi in (self.init_clamp, self.update_clamp):
            if not 0.0 < lo < hi < 1.0:
                raise ValueError(f"clamp bounds must satisfy 0 < lo < hi < 1, got ({lo}, {hi})")


@dataclass
class FittedModel:
    params: ModelParams
    posterior: AssignmentPosterior
    loglik_trace: np.ndarray
    config: FitConfig
    diagnostics: dict = field(default_factory=dict)

    @property
    def theta(self):
        return self.params.theta

    @property
    def phi(self):
        return self.params.phi

    @property
    def z_map(self):
        return self.posterior.z_map

    @property
    def K(self):
        return self.params.K


def _alleles(data):
    if isinstance(data, GenotypeDataset):
        return data.alleles()
    x = np.asarray(data)
    return to_alleles(x) if x.ndim == 2 else x


def _dosage(data):
    if isinstance(data, GenotypeDataset):
        return data.genotypes
    x = np.asarray(data)
    return x if x.ndim == 2 else x.sum(axis=-1)


def init_params(dataset, K, seed=0, clamp=INIT_CLAMP):
    """Initial ``phi`` = MAF + U(0, 0.1) clamped; ``theta`` rows = normalized U(0, 1)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    g = _dosage(dataset)
    n, L = g.shape
    rng = rng_for(seed, STREAM_INIT)
    maf = empirical_maf(g)
    phi = np.clip(maf[:, None] + rng.uniform(0.0, 0.1, size=(L, K)), *clamp)
    u = rng.uniform(0.0, 1.0, size=(n, K))
    theta = u / u.sum(axis=1, keepdims=True)
    return ModelParams(theta=theta, phi=phi)


def _posterior_from_alleles(x, theta, phi):
    like = np.where(x[..., None] == 1, phi[None, :, None, :], 1.0 - phi[None, :, None, :])
    unnorm = theta[:, None, None, :] * like
    total = unnorm.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise FloatingPointError("all-zero unnormalized posterior; phi or theta degenerate")
    return unnorm / total


def e_step(dataset, params):
    """Posterior population probabilities for every allele copy.

    Ties in the MAP assignment go to the lowest population index.
    """
    x = _alleles(dataset)
    if x.shape[0] != params.theta.shape[0] or x.shape[1] != params.phi.shape[0]:
        raise ValueError("parameter dimensions do not match the dataset")
    q = _posterior_from_alleles(x, params.theta, params.phi)
    return AssignmentPosterior(q=q, z_map=np.argmax(q, axis=-1))


def _phi_update(num, den, clamp):
    empty = den <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(empty, 0.5, num / np.where(empty, 1.0, den))
    return np.clip(phi, *clamp), int(empty.sum())


def m_step(dataset, posterior, clamp=UPDATE_CLAMP, alpha=1.0, gamma=1.0):
    """Re-estimate ``theta`` and ``phi`` from allele responsibilities.

    ``phi[l, k]`` is the responsibility-weighted frequency of allele 1 among
    copies at SNP ``l``; a population with no responsibility mass at a SNP
    gets 0.5, counted in ``diagnostics['empty_phi']`` by :func:`fit`.
    """
    x = _alleles(dataset)
    q = posterior.q if isinstance(posterior, AssignmentPosterior) else np.asarray(posterior)
    L = x.shape[1]
    theta = q.sum(axis=(1, 2)) / (2.0 * L)
    num = (q * x[..., None]).sum(axis=(0, 2))
    den = q.sum(axis=(0, 2))
    phi, _ = _phi_update(num, den, clamp)
    return ModelParams(theta=theta, phi=phi, alpha=alpha, gamma=gamma)


def _loglik_from_products(g, p1, p0):
    return float(np.sum(g * np.log(p1)) + np.sum((2 - g) * np.log(p0)))


def log_likelihood(dataset, params):
    """Observed-data log-likelihood in nats, marginalizing ``z`` per copy."""
    g = _dosage(dataset).astype(np.float64)
    if g.shape != (params.theta.shape[0], params.phi.shape[0]):
        raise ValueError("parameter dimensions do not match the dataset")
    p1 = params.theta @ params.phi.T
    p0 = params.theta @ (1.0 - params.phi).T
    return _loglik_from_products(g, p1, p0)


def fit(dataset, K, config=None):
    """Run initialization followed by exactly ``config.iterations`` EM steps.

    The loop uses the dosage form of the updates: because a SNP's two copies
    share ``theta[i]`` and ``phi[l]``, the posterior depends only on the allele
    value, so ``g`` copies carry the allele-1 posterior and ``2 - g`` the
    allele-0 posterior. This is algebraically the same as
    :func:`e_step` / :func:`m_step` on the full tensor.
    """
    config = config or FitConfig()
    g_int = _dosage(dataset)
    n, L = g_int.shape
    g = g_int.astype(np.float64)
    h = 2.0 - g
    params = init_params(g_int, K, seed=config.seed, clamp=config.init_clamp)
    theta, phi = params.theta, params.phi

    trace = np.empty(config.iterations)
    empty_total = 0
    p1 = theta @ phi.T
    p0 = theta @ (1.0 - phi).T
    for it in range(config.iterations):
        w1 = g / p1  # (n, L)
        w0 = h / p0
        # responsibilities summed over copies: theta_ik * (w1 phi_lk + w0 (1-phi_lk))
        r1 = theta * (w1 @ phi)  # (n, K), allele-1 mass per individual
        r0 = theta * (w0 @ (1.0 - phi))
        new_theta = (r1 + r0) / (2.0 * L)
        num = phi * (w1.T @ theta)  # (L, K)
        den = num + (1.0 - phi) * (w0.T @ theta)
        phi, empty = _phi_update(num, den, config.update_clamp)
        empty_total += empty
        theta = new_theta
        p1 = theta @ phi.T
        p0 = theta @ (1.0 - phi).T
        trace[it] = _loglik_from_products(g, p1, p0)

    params = ModelParams(theta=theta, phi=phi)
    posterior = e_step(g_int, params)
    if empty_total:
        log.warning("%d (SNP, population) cells had zero responsibility mass", empty_total)
    return FittedModel(
        params=params,
        posterior=posterior,
        loglik_trace=trace,
        config=config,
        diagnostics={"empty_phi": empty_total},
    )


def best_permutation(theta_est, theta_true):
    """Column permutation of ``theta_est`` that best matches ``theta_true``.

    Returns ``perm`` such that ``theta_est[:, perm]`` is aligned with the truth
    (minimum total absolute error, Hungarian assignment).
    """
    cost = np.abs(theta_true[:, :, None] - theta_est[:, None, :]).sum(axis=0)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(theta_true.shape[1], dtype=int)
    perm[rows] = cols
    return perm


# ---------------------------------------------------------------------------
# serialization


def _fmt(v):
    return f"{v:.10g}"


def _write_matrix(path, rows, fmt):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in rows:
            fh.write("\t".join(fmt(v) for v in row) + "\n")


def save_model(fitted, out_dir):
    """Write ``theta.tsv``, ``phi.tsv``, ``zmap.tsv`` and ``meta.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_matrix(out / "theta.tsv", fitted.theta.tolist(), _fmt)
    _write_matrix(out / "phi.tsv", fitted.phi.tolist(), _fmt)
    n, L, _ = fitted.z_map.shape
    z = (fitted.z_map.reshape(n, 2 * L) + 1).tolist()
    _write_matrix(out / "zmap.tsv", z, str)
    meta = {
        "K": fitted.K,
        "iterations": fitted.config.iterations,
        "seed": fitted.config.seed,
        "alpha": fitted.params.alpha,
        "gamma": fitted.params.gamma,
        "init_clamp": list(fitted.config.init_clamp),
        "update_clamp": list(fitted.config.update_clamp),
        "diagnostics": fitted.diagnostics,
        "loglik_trace": [float(_fmt(v)) for v in fitted.loglik_trace],
    }
    with open(out / "meta.json", "w", encoding="ascii", newline="\n") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def load_model(model_dir, dataset=None):
    """Read a model directory written by :func:`save_model`.

    The soft posterior is recomputed from ``theta``/``phi`` when ``dataset`` is
    given; otherwise only ``z_map`` is populated.
    """
    d = Path(model_dir)
    theta = np.loadtxt(d / "theta.tsv", delimiter="\t", ndmin=2)
    phi = np.loadtxt(d / "phi.tsv", delimiter="\t", ndmin=2)
    z = np.loadtxt(d / "zmap.tsv", delimiter="\t", dtype=np.int64, ndmin=2) - 1
    with open(d / "meta.json", encoding="ascii") as fh:
        meta = json.load(fh)
    n, L = theta.shape[0], phi.shape[0]
    if z.shape != (n, 2 * L):
        raise ValueError(f"zmap.tsv has shape {z.shape}, expected {(n, 2 * L)}")
    z_map = z.reshape(n, L, 2)
    params = ModelParams(theta=theta, phi=phi, alpha=meta.get("alpha", 1.0), gamma=meta.get("gamma", 1.0))
    q = e_step(dataset, params).q if dataset is not None else None
    config = FitConfig(
        iterations=meta["iterations"],
        seed=meta["seed"],
        init_clamp=tuple(meta.get("init_clamp", INIT_CLAMP)),
        update_clamp=tuple(meta.get("update_clamp", UPDATE_CLAMP)),
    )
    return FittedModel(
        params=params,
        posterior=AssignmentPosterior(q=q, z_map=z_map),
        loglik_trace=np.asarray(meta["loglik_trace"], dtype=float),
        config=config,
        diagnostics=meta.get("diagnostics", {}),
    )
