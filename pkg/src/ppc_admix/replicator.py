"""Posterior predictive replicate datasets.

A replicate redraws every allele copy from ``Bernoulli(phi[l, z_map[i, l, j]])``
with the fitted assignments and frequencies held fixed. Replicate ``r`` of a
batch uses ``derive_seed(seed, STREAM_REPLICATE, r)``, so any single replicate
can be regenerated on its own and the batch result does not depend on how
replicates are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .genotype_data import from_alleles, write_genotypes
from .seeding import STREAM_REPLICATE, derive_seed


def replicate_seed(seed, r):
    return derive_seed(seed, STREAM_REPLICATE, r)


def replicate_once(fitted, seed):
    """Draw one ``n x L x 2`` allele tensor from the fitted model."""
    z = fitted.z_map
    L = z.shape[1]
    p = fitted.phi[np.arange(L)[None, :, None], z]
    rng = np.random.default_rng(seed)
    return (rng.random(z.shape) < p).astype(np.uint8)


@dataclass(frozen=True)
class ReplicateSet:
    """Lazily generated batch of ``R`` replicates.

    Iterating produces replicates one at a time so they can be consumed and
    discarded; indexing regenerates a single replicate.
    """

    fitted: object
    R: int
    seed: int

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")

    def __len__(self):
        return self.R

    def __getitem__(self, r):
        if not 0 <= r < self.R:
            raise IndexError(r)
        return replicate_once(self.fitted, replicate_seed(self.seed, r))

    def __iter__(self):
        for r in range(self.R):
            yield self[r]

    @property
    def replicates(self):
        return [self[r] for r in range(self.R)]


def replicate_batch(fitted, R, seed):
    return ReplicateSet(fitted=fitted, R=R, seed=seed)


def dump_replicates(replicate_set, out_dir):
    """Write each replicate as ``rep_<r>.txt`` in the genotype file format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r, x in enumerate(replicate_set):
        p = out / f"rep_{r}.txt"
        write_genotypes(p, from_alleles(x))
        paths.append(p)
    return paths
