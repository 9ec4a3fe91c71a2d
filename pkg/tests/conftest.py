"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from qdil.algebra import full_algebra
from qdil.instrument import CPInstrument, OutcomeSpace


def random_cp_instrument(rng, dim_h, n_outcomes, kraus_per_outcome=1,
                         algebra=None):
    """Draw a random instrument that is trace preserving by construction.

    Ginibre blocks are whitened by the inverse square root of their
    summed Gram matrix, so completeness holds at machine precision.
    """
    blocks = [[rng.standard_normal((dim_h, dim_h))
               + 1j * rng.standard_normal((dim_h, dim_h))
               for _ in range(kraus_per_outcome)]
              for _ in range(n_outcomes)]
    total = sum(k.conj().T @ k for ks in blocks for k in ks)
    vals, vecs = np.linalg.eigh(total)
    whiten = vecs @ np.diag(vals ** -0.5) @ vecs.conj().T
    labels = tuple(str(s) for s in range(n_outcomes))
    kraus = {lab: [k @ whiten for k in ks]
             for lab, ks in zip(labels, blocks)}
    if algebra is None:
        algebra = full_algebra(dim_h)
    return CPInstrument(dim_h, algebra, OutcomeSpace(labels), kraus)


def random_state(rng, dim):
    """Random full-rank density matrix."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
