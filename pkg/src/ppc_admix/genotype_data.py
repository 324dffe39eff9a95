"""Diploid genotype datasets: loading, validation, simulation.

Genotypes are stored as an ``n x L`` matrix of minor-allele dosages in
{0, 1, 2}. Models and discrepancies work on the allele representation, an
``n x L x 2`` binary tensor obtained by splitting each dosage into two allele
copies, with heterozygotes written as ``(1, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np


class GenotypeParseError(ValueError):
    """Raised when a genotype or label file is malformed."""

    def __init__(self, message, row=None, column=None, path=None):
        self.row = row
        self.column = column
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class LabelAlignmentError(ValueError):
    """Raised when labels do not line up one-to-one with individuals."""


class AllelePair(NamedTuple):
    a1: int
    a2: int


@dataclass(frozen=True)
class GenotypeDataset:
    """Immutable genotype matrix with optional per-individual labels."""

    genotypes: np.ndarray
    labels: Optional[tuple] = None
    snp_order: Optional[tuple] = None

    def __post_init__(self):
        g = np.array(self.genotypes, dtype=np.int64, copy=True)
        if g.ndim != 2:
            raise ValueError(f"genotypes must be a 2-d matrix, got shape {g.shape}")
        n, L = g.shape
        if n < 1 or L < 1:
            raise ValueError(f"need at least one individual and one SNP, got {n} x {L}")
        bad = np.argwhere((g < 0) | (g > 2))
        if len(bad):
            i, l = bad[0]
            raise GenotypeParseError(f"value {g[i, l]} not in {{0,1,2}}", row=int(i), column=int(l))
        g = g.astype(np.uint8)
        g.setflags(write=False)
        object.__setattr__(self, "genotypes", g)

        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != n:
                raise LabelAlignmentError(f"{len(labels)} labels for {n} individuals")
            object.__setattr__(self, "labels", labels)

        snps = self.snp_order
        if snps is None:
            snps = tuple(f"snp{l}" for l in range(L))
        else:
            snps = tuple(str(s) for s in snps)
        if len(snps) != L:
            raise ValueError(f"snp_order has {len(snps)} entries for {L} SNPs")
        if len(set(snps)) != L:
            raise ValueError("snp_order contains duplicate identifiers")
        object.__setattr__(self, "snp_order", snps)

    @property
    def n(self):
        return self.genotypes.shape[0]

    @property
    def L(self):
        return self.genotypes.shape[1]

    def alleles(self):
        """Return the ``n x L x 2`` binary allele tensor."""
        return to_alleles(self.genotypes)

    def with_genotypes(self, genotypes):
        return GenotypeDataset(genotypes, labels=self.labels, snp_order=self.snp_order)


@dataclass(frozen=True)
class TrueParams:
    theta_true: np.ndarray
    phi_true: np.ndarray
    z_true: np.ndarray  # 0-based population indices, shape (n, L, 2)

    @property
    def K(self):
        return self.theta_true.shape[1]


def split_diploid(genotype):
    """Split a dosage into two allele copies; heterozygotes become ``(1, 0)``."""
    if genotype not in (0, 1, 2) or isinstance(genotype, bool):
        raise ValueError(f"genotype {genotype!r} not in {{0,1,2}}")
    return AllelePair(int(genotype >= 1), int(genotype == 2))


def to_alleles(genotypes):
    g = np.asarray(genotypes)
    out = np.empty(g.shape + (2,), dtype=np.uint8)
    out[..., 0] = g >= 1
    out[..., 1] = g == 2
    return out


def from_alleles(alleles):
    return np.asarray(alleles, dtype=np.uint8).sum(axis=-1, dtype=np.uint8)


def empirical_maf(dataset):
    """Per-SNP frequency of the counted allele, ``sum_i g_il / 2n``."""
    g = dataset.genotypes if isinstance(dataset, GenotypeDataset) else np.asarray(dataset)
    return g.sum(axis=0, dtype=np.int64) / (2.0 * g.shape[0])


# ---------------------------------------------------------------------------
# file I/O


def _read_lines(path):
    with open(path, "r", encoding="ascii") as fh:
        return fh.read().split("\n")


def load_genotypes(path):
    path = Path(path)
    lines = _read_lines(path)
    while lines and lines[-1].strip() == "":
        lines.pop()
    if not lines:
        raise GenotypeParseError("empty file", path=path)
    header = lines[0].split()
    if len(header) != 2 or not all(h.isdigit() for h in header):
        raise GenotypeParseError("header must be 'n L'", row=0, path=path)
    n, L = int(header[0]), int(header[1])
    body = lines[1:]
    if len(body) != n:
        raise GenotypeParseError(f"header declares {n} individuals, found {len(body)} rows", path=path)
    g = np.empty((n, L), dtype=np.uint8)
    lookup = {"0": 0, "1": 1, "2": 2}
    for i, line in enumerate(body):
        fields = line.split()
        if len(fields) != L:
            raise GenotypeParseError(f"expected {L} values, found {len(fields)}", row=i + 1, path=path)
        for l, tok in enumerate(fields):
            v = lookup.get(tok)
            if v is None:
                raise GenotypeParseError(f"value {tok!r} not in {{0,1,2}}", row=i + 1, column=l + 1, path=path)
            g[i, l] = v
    return g


def load_labels(path, n):
    """Read ``individual_index<TAB>label`` lines (0-based indices)."""
    path = Path(path)
    lines = [x for x in _read_lines(path) if x.strip() != ""]
    if len(lines) != n:
        raise LabelAlignmentError(f"{path}: {len(lines)} labels for {n} individuals")
    labels = [None] * n
    for row, line in enumerate(lines, start=1):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip().isdigit():
            raise GenotypeParseError("expected 'index<TAB>label'", row=row, path=path)
        idx = int(parts[0])
        if idx >= n:
            raise LabelAlignmentError(f"{path}: row {row}: individual index {idx} out of range for n={n}")
        if labels[idx] is not None:
            raise LabelAlignmentError(f"{path}: row {row}: individual index {idx} listed twice")
        labels[idx] = parts[1].strip()
    return tuple(labels)


def load_dataset(genotype_path, label_path=None):
    g = load_genotypes(genotype_path)
    labels = load_labels(label_path, g.shape[0]) if label_path is not None else None
    return GenotypeDataset(g, labels=labels)


def write_genotypes(path, genotypes):
    g = np.asarray(genotypes)
    n, L = g.shape
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{n} {L}\n")
        for row in g:
            fh.write(" ".join(map(str, row.tolist())) + "\n")


def write_labels(path, labels):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for i, lab in enumerate(labels):
            fh.write(f"{i}\t{lab}\n")


# ---------------------------------------------------------------------------
# simulation

PhiSpec = Union[None, np.ndarray, Callable[[np.random.Generator, int, int], np.ndarray]]


def beta_frequencies(gamma=1.0):
    """Frequency generator drawing every entry from ``Beta(gamma, gamma)``."""

    def draw(rng, L, K):
        return rng.beta(gamma, gamma, size=(L, K))

    return draw


def separated_frequencies(means: Sequence[float], concentration=20.0):
    """Frequency generator with population ``k`` centred on ``means[k]``.

    Entries are ``Beta(m * c, (1 - m) * c)`` draws, so larger concentration
    gives tighter, better separated populations.
    """
    means = np.asarray(means, dtype=float)

    def draw(rng, L, K):
        if len(means) != K:
            raise ValueError(f"{len(means)} population means for K={K}")
        return rng.beta(means * concentration, (1.0 - means) * concentration, size=(L, K))

    return draw


def simulate_dataset(n, L, K, alpha=1.0, phi_spec: PhiSpec = None, seed=0, theta=None, gamma=1.0):
    """Draw a dataset from the admixture model.

    ``theta`` overrides the Dirichlet draw of ancestry proportions. Labels are
    ``pop<k>`` for each individual's largest true ancestry component.
    """
    if n < 1 or L < 1 or K < 1:
        raise ValueError(f"n, L, K must be >= 1, got {n}, {L}, {K}")
    alpha_vec = np.broadcast_to(np.asarray(alpha, dtype=float), (K,))
    if np.any(alpha_vec <= 0):
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(seed)

    if theta is None:
        theta = rng.dirichlet(alpha_vec, size=n)
    else:
        theta = np.array(theta, dtype=float)
        if theta.ndim == 1:
            theta = np.tile(theta, (n, 1))
        if theta.shape != (n, K) or np.any(theta < 0) or not np.allclose(theta.sum(1), 1.0, atol=1e-9):
            raise ValueError("theta must be n x K with rows on the simplex")

    if phi_spec is None:
        phi_spec = beta_frequencies(gamma)
    phi = np.array(phi_spec(rng, L, K) if callable(phi_spec) else phi_spec, dtype=float)
    if phi.shape != (L, K):
        raise ValueError(f"phi must have shape {(L, K)}, got {phi.shape}")
    if np.any(phi <= 0.0) or np.any(phi >= 1.0):
        raise ValueError("allele frequencies must lie strictly inside (0, 1)")

    cdf = np.cumsum(theta, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random((n, L, 2))
    z = np.empty((n, L, 2), dtype=np.int64)
    for i in range(n):
        z[i] = np.searchsorted(cdf[i], u[i], side="right")
    np.minimum(z, K - 1, out=z)
    p = phi[np.arange(L)[None, :, None], z]
    x = (rng.random((n, L, 2)) < p).astype(np.uint8)

    labels = tuple(f"pop{k + 1}" for k in np.argmax(theta, axis=1))
    dataset = GenotypeDataset(from_alleles(x), labels=labels)
    return dataset, TrueParams(theta_true=theta, phi_true=phi, z_true=z)


def inject_ld(dataset, block_length):
    """Copy the first SNP of every block of ``block_length`` SNPs over the rest.

    A trailing partial block is treated the same way.
    """
    if block_length < 2:
        raise ValueError(f"block_length must be >= 2, got {block_length}")
    if block_length > dataset.L:
        raise ValueError(f"block_length {block_length} exceeds L={dataset.L}")
    heads = (np.arange(dataset.L) // block_length) * block_length
    return dataset.with_genotypes(dataset.genotypes[:, heads])
