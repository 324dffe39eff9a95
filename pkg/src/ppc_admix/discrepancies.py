"""Per-population discrepancy functions.

Every discrepancy takes an allele tensor ``x`` (``n x L x 2``, binary) and the
fixed MAP assignments ``z_map`` (same shape, 0-based populations) and
produces one value per population. A value that cannot be computed is
reported as undefined (``None`` from the scalar functions, ``defined=False``
with ``nan`` in vector form); nothing is imputed.

The scalar functions (``ibs_similarity``, ``mutual_info_ld``, ...) compute a
single population. The ``*Discrepancy`` classes precompute everything that
depends only on the latent structure so that the same statistic can be
evaluated cheaply on the observed data and on many replicates.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import betaln

from .admixture_em import _posterior_from_alleles
from .seeding import STREAM_PHENOTYPE, derive_seed

DISCREPANCY_NAMES = ("ibs", "mi", "fst", "entropy", "association")

MIN_SHARED = 500
MAX_SNPS = 10_000
DEFAULT_LAGS = tuple(range(1, 31))
PHENOTYPE_DRAWS = 10
RISK_IN_POPULATION = 0.5
RISK_OUTSIDE = 0.1
BETA_SMOOTHING = 0.1


@dataclass(frozen=True)
class DiscrepancyVector:
    values: np.ndarray  # (K,), nan where undefined
    defined: np.ndarray  # (K,) bool

    @classmethod
    def from_list(cls, vals):
        defined = np.array([v is not None for v in vals], dtype=bool)
        values = np.array([np.nan if v is None else float(v) for v in vals])
        return cls(values=values, defined=defined)


class Scenario(Enum):
    NO_MATCH = "NoMatch"
    SINGLE = "Single"
    SINGLE_DOUBLE = "SingleDouble"
    DOUBLE_DOUBLE = "DoubleDouble"


class PairMatch(NamedTuple):
    scenario: Scenario
    comparisons: list


def enumerate_pair_comparisons(z_a, z_b, k):
    """Comparable allele-copy pairs between two diploid sites for population ``k``.

    Copies are compared only when both carry assignment ``k``; the result is
    every cross pair ``(copy at a, copy at b)`` of such copies.
    """
    at_a = [j for j in (0, 1) if z_a[j] == k]
    at_b = [j for j in (0, 1) if z_b[j] == k]
    comparisons = [(ja, jb) for ja in at_a for jb in at_b]
    if not comparisons:
        return PairMatch(Scenario.NO_MATCH, [])
    if len(at_a) == 1 and len(at_b) == 1:
        return PairMatch(Scenario.SINGLE, comparisons)
    if len(at_a) == 2 and len(at_b) == 2:
        return PairMatch(Scenario.DOUBLE_DOUBLE, comparisons)
    return PairMatch(Scenario.SINGLE_DOUBLE, comparisons)


def _population_counts(x, z, k):
    """Per (individual, SNP) counts of k-assigned copies carrying allele 1 and 0."""
    m = z == k
    ones = (m & (x == 1)).sum(axis=-1, dtype=np.int64)
    zeros = (m & (x == 0)).sum(axis=-1, dtype=np.int64)
    return ones, zeros


# ---------------------------------------------------------------------------
# identity by state


def _ibs_from_counts(ones, zeros, min_shared, unit):
    a1 = ones.astype(np.float64)
    a0 = zeros.astype(np.float64)
    c = a1 + a0
    shared = a1 @ a1.T + a0 @ a0.T
    total = c @ c.T
    if unit == "alleles":
        support = total
    elif unit == "sites":
        b = (c > 0).astype(np.float64)
        support = b @ b.T
    else:
        raise ValueError(f"unknown threshold unit {unit!r}")
    iu = np.triu_indices(c.shape[0], k=1)
    keep = (support[iu] >= min_shared) & (total[iu] > 0)
    if not keep.any():
        return None
    return float(np.mean(shared[iu][keep] / total[iu][keep]))


def ibs_similarity(x, z_map, k, min_shared=MIN_SHARED, unit="alleles"):
    """Average fraction of identical k-assigned alleles over individual pairs.

    For each SNP the comparable copies of two individuals follow
    :func:`enumerate_pair_comparisons`. Pairs with fewer than ``min_shared``
    comparable allele pairs (or SNP sites when ``unit='sites'``) are skipped.
    """
    ones, zeros = _population_counts(np.asarray(x), np.asarray(z_map), k)
    return _ibs_from_counts(ones, zeros, min_shared, unit)


# ---------------------------------------------------------------------------
# mutual information between SNPs at a fixed lag


def mutual_information_bits(joint):
    """Plug-in mutual information (bits) of a 2 x 2 table of counts."""
    joint = np.asarray(joint, dtype=np.float64)
    total = joint.sum()
    if total <= 0:
        return 0.0
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    mi = 0.0
    for a in range(2):
        for b in range(2):
            if joint[a, b] > 0:
                mi += joint[a, b] / total * np.log2(joint[a, b] * total / (pa[a] * pb[b]))
    return max(mi, 0.0)


def _mi_from_counts(ones, zeros, lag):
    """Mean MI over SNP pairs ``(l, l + lag)`` with at least two observations."""
    L = ones.shape[1]
    if lag >= L:
        return None
    h1, t1 = ones[:, :-lag], ones[:, lag:]
    h0, t0 = zeros[:, :-lag], zeros[:, lag:]
    n11 = (h1 * t1).sum(axis=0)
    n10 = (h1 * t0).sum(axis=0)
    n01 = (h0 * t1).sum(axis=0)
    n00 = (h0 * t0).sum(axis=0)
    tot = n11 + n10 + n01 + n00
    ok = tot >= 2
    if not ok.any():
        return None
    cells = np.stack([n00, n01, n10, n11])[:, ok].astype(np.float64)
    tot = tot[ok].astype(np.float64)
    row = np.stack([cells[0] + cells[1], cells[0] + cells[1], cells[2] + cells[3], cells[2] + cells[3]])
    col = np.stack([cells[0] + cells[2], cells[1] + cells[3], cells[0] + cells[2], cells[1] + cells[3]])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(cells > 0, cells / tot * np.log2(cells * tot / (row * col)), 0.0)
    mi = np.maximum(terms.sum(axis=0), 0.0)
    return float(mi.mean())


def mutual_info_ld(x, z_map, k, lag, max_snps=MAX_SNPS):
    """Average MI (bits) between alleles ``lag`` SNPs apart, restricted to population ``k``.

    Within each individual, copies at SNPs ``l`` and ``l + lag`` are paired
    as in :func:`enumerate_pair_comparisons`; pairs are pooled across
    individuals into one 2 x 2 table per SNP pair. Only the first
    ``max_snps`` SNPs are used.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    x = np.asarray(x)[:, :max_snps]
    z = np.asarray(z_map)[:, :max_snps]
    ones, zeros = _population_counts(x, z, k)
    return _mi_from_counts(ones, zeros, lag)


# ---------------------------------------------------------------------------
# F_ST against reported labels


class FstResult(NamedTuple):
    per_snp: np.ndarray  # nan where the SNP is excluded
    mean: Optional[float]


def _label_codes(labels):
    _, codes = np.unique(np.asarray(labels, dtype=str), return_inverse=True)
    return codes


def _label_onehot(labels):
    codes = _label_codes(labels)
    onehot = np.zeros((codes.max() + 1, len(codes)))
    onehot[codes, np.arange(len(codes))] = 1.0
    return onehot


def _fst_from_counts(onehot, ones, zeros):
    s = onehot @ ones  # (G, L) allele-1 counts per label
    c = onehot @ (ones + zeros)  # (G, L) k-assigned copies per label
    n_tot = c.sum(axis=0)
    present = c > 0
    per_snp = np.full(c.shape[1], np.nan)
    if np.count_nonzero(present.any(axis=1)) < 2:
        return FstResult(per_snp, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        pooled = s.sum(axis=0) / n_tot
        p_g = np.where(present, s / np.where(present, c, 1.0), 0.0)
    use = (n_tot > 0) & (pooled > 0) & (pooled < 1)
    if not use.any():
        return FstResult(per_snp, None)
    sq = np.where(present, (pooled[None, :] - p_g) ** 2, 0.0)
    regions = present.sum(axis=0)
    num = sq[:, use].sum(axis=0) / regions[use]
    per_snp[use] = num / (pooled[use] * (1.0 - pooled[use]))
    return FstResult(per_snp, float(per_snp[use].mean()))


def fst_vs_labels(x, z_map, labels, k):
    """Per-SNP F_ST of k-assigned alleles across label groups, and its mean.

    Only label groups with k-assigned alleles at a SNP enter that SNP's sum,
    and SNPs whose pooled frequency is 0 or 1 are excluded. The mean is
    undefined when every k-assigned allele comes from one label.
    """
    if labels is None:
        raise ValueError("F_ST discrepancy requires reported labels")
    x = np.asarray(x)
    if len(labels) != x.shape[0]:
        raise ValueError("labels must have one entry per individual")
    ones, zeros = _population_counts(x, np.asarray(z_map), k)
    return _fst_from_counts(_label_onehot(labels), ones.astype(np.float64), zeros.astype(np.float64))


# ---------------------------------------------------------------------------
# posterior entropy


def _entropy_bits(q):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(q > 0, -q * np.log2(q), 0.0)
    return t.sum(axis=-1)


def allele_entropy(x, theta, phi):
    """Entropy (bits) of the population posterior for every allele copy."""
    return _entropy_bits(_posterior_from_alleles(np.asarray(x), theta, phi))


def average_entropy(x, theta, phi, z_map, k):
    """Mean posterior entropy over allele copies whose MAP assignment is ``k``."""
    m = np.asarray(z_map) == k
    if not m.any():
        return None
    return float(allele_entropy(x, theta, phi)[m].mean())


# ---------------------------------------------------------------------------
# association mapping


def phenotype_probability(theta, k):
    t = np.asarray(theta)[:, k]
    return RISK_IN_POPULATION * t + RISK_OUTSIDE * (1.0 - t)


def simulate_phenotype(theta, k, seed):
    """Binary phenotype with risk 0.5 inside population ``k`` and 0.1 outside."""
    rng = np.random.default_rng(seed)
    p = phenotype_probability(theta, k)
    return (rng.random(len(p)) < p).astype(np.uint8)


def phenotype_seed(seed, k, draw):
    return derive_seed(seed, STREAM_PHENOTYPE, k, draw)


def log_marginal_bernoulli(successes, trials, smoothing=BETA_SMOOTHING):
    """Log marginal likelihood of a Bernoulli sequence under Beta(a, a)."""
    s = np.asarray(successes, dtype=np.float64)
    n = np.asarray(trials, dtype=np.float64)
    return betaln(smoothing + s, smoothing + n - s) - betaln(smoothing, smoothing)


def _two_log_bf(s0, n0, s1, n1, smoothing):
    split = log_marginal_bernoulli(s0, n0, smoothing) + log_marginal_bernoulli(s1, n1, smoothing)
    pooled = log_marginal_bernoulli(s0 + s1, n0 + n1, smoothing)
    return 2.0 * (split - pooled)


def _max_bf_from_counts(case, ones, zeros, smoothing):
    c = ones + zeros
    ctrl = 1.0 - case
    s1, n1 = case @ ones, case @ c
    s0, n0 = ctrl @ ones, ctrl @ c
    ok = (n0 > 0) & (n1 > 0)
    if not ok.any():
        return None
    return float(_two_log_bf(s0[ok], n0[ok], s1[ok], n1[ok], smoothing).max())


def max_log_bf_association(x, z_map, phenotype, k, smoothing=BETA_SMOOTHING):
    """Maximum over SNPs of 2 ln BF for phenotype-split vs pooled allele counts.

    Only copies MAP-assigned to ``k`` are counted. SNPs lacking k-assigned
    copies in either phenotype class are skipped.
    """
    x = np.asarray(x)
    phenotype = np.asarray(phenotype)
    if phenotype.shape != (x.shape[0],):
        raise ValueError("phenotype must have one entry per individual")
    ones, zeros = _population_counts(x, np.asarray(z_map), k)
    return _max_bf_from_counts(phenotype.astype(np.float64), ones.astype(np.float64), zeros.astype(np.float64), smoothing)


def association_discrepancy(x, z_map, theta, k, seed, draws=PHENOTYPE_DRAWS, smoothing=BETA_SMOOTHING):
    """Mean of :func:`max_log_bf_association` over ``draws`` simulated phenotypes.

    Draw ``d`` uses ``phenotype_seed(seed, k, d)``, so the same phenotypes are
    seen by the observed data and by every replicate. Undefined draws are
    left out of the mean; the result is undefined if every draw is.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    vals = []
    for d in range(draws):
        c = simulate_phenotype(theta, k, phenotype_seed(seed, k, d))
        v = max_log_bf_association(x, z_map, c, k, smoothing)
        if v is not None:
            vals.append(v)
    return float(np.mean(vals)) if vals else None


def two_ln_to_log10(two_ln_bf):
    return two_ln_bf / (2.0 * np.log(10.0))


# ---------------------------------------------------------------------------
# batch evaluators used by the PPC engine


class Discrepancy:
    """A discrepancy bound to fixed latent structure.

    Calling it on an allele tensor returns ``(values, defined)``, both of
    shape ``(len(groups), K)``. ``groups`` is ``(None,)`` except for the LD
    discrepancy, where each group is a lag.
    """

    name = ""
    groups: tuple = (None,)

    def __init__(self, z_map, K):
        self.z_map = np.asarray(z_map)
        self.K = K
        self._masks = [self.z_map == k for k in range(K)]

    def counts(self, x, k):
        m = self._masks[k]
        ones = (m & (x == 1)).sum(axis=-1, dtype=np.int64)
        zeros = m.sum(axis=-1, dtype=np.int64) - ones
        return ones, zeros

    def population(self, x, k):
        raise NotImplementedError

    def __call__(self, x):
        x = np.asarray(x)
        vals = np.full((len(self.groups), self.K), np.nan)
        for k in range(self.K):
            out = self.population(x, k)
            for gi, v in enumerate(out):
                if v is not None:
                    vals[gi, k] = v
        return vals, ~np.isnan(vals)


class IbsDiscrepancy(Discrepancy):
    name = "ibs"

    def __init__(self, z_map, K, min_shared=MIN_SHARED, unit="alleles"):
        super().__init__(z_map, K)
        self.min_shared = min_shared
        self.unit = unit

    def population(self, x, k):
        return [_ibs_from_counts(*self.counts(x, k), self.min_shared, self.unit)]


class MutualInfoDiscrepancy(Discrepancy):
    name = "mi"

    def __init__(self, z_map, K, lags: Sequence[int] = DEFAULT_LAGS, max_snps=MAX_SNPS):
        super().__init__(np.asarray(z_map)[:, :max_snps], K)
        if not lags or min(lags) < 1:
            raise ValueError("lags must be a non-empty set of integers >= 1")
        self.groups = tuple(int(m) for m in lags)
        self.max_snps = max_snps

    def population(self, x, k):
        ones, zeros = self.counts(x[:, : self.max_snps], k)
        return [_mi_from_counts(ones, zeros, m) for m in self.groups]


class FstDiscrepancy(Discrepancy):
    name = "fst"

    def __init__(self, z_map, K, labels):
        super().__init__(z_map, K)
        if labels is None:
            raise ValueError("F_ST discrepancy requires reported labels")
        if len(labels) != self.z_map.shape[0]:
            raise ValueError("labels must have one entry per individual")
        self.onehot = _label_onehot(labels)

    def population(self, x, k):
        ones, zeros = self.counts(x, k)
        return [_fst_from_counts(self.onehot, ones.astype(np.float64), zeros.astype(np.float64)).mean]


class EntropyDiscrepancy(Discrepancy):
    name = "entropy"

    def __init__(self, z_map, K, theta, phi):
        super().__init__(z_map, K)
        n, L = self.z_map.shape[:2]
        # the posterior depends on the allele only through its value
        self.h1 = _entropy_bits(_posterior_from_alleles(np.ones((n, L, 1), np.uint8), theta, phi))[..., 0]
        self.h0 = _entropy_bits(_posterior_from_alleles(np.zeros((n, L, 1), np.uint8), theta, phi))[..., 0]

    def population(self, x, k):
        m = self._masks[k]
        if not m.any():
            return [None]
        h = np.where(x == 1, self.h1[..., None], self.h0[..., None])
        return [float(h[m].mean())]


class AssociationDiscrepancy(Discrepancy):
    name = "association"

    def __init__(self, z_map, K, theta, seed, draws=PHENOTYPE_DRAWS, smoothing=BETA_SMOOTHING):
        super().__init__(z_map, K)
        if draws < 1:
            raise ValueError("draws must be >= 1")
        self.smoothing = smoothing
        self.phenotypes = [
            [simulate_phenotype(theta, k, phenotype_seed(seed, k, d)).astype(np.float64) for d in range(draws)]
            for k in range(K)
        ]

    def population(self, x, k):
        ones, zeros = self.counts(x, k)
        ones = ones.astype(np.float64)
        zeros = zeros.astype(np.float64)
        vals = [_max_bf_from_counts(c, ones, zeros, self.smoothing) for c in self.phenotypes[k]]
        vals = [v for v in vals if v is not None]
        return [float(np.mean(vals)) if vals else None]
