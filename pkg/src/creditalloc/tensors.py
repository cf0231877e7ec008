"""Symmetric portfolio tensors over factor indices.

An order-``n`` symmetric tensor is stored once per sorted multi-index
``k_1 <= ... <= k_n`` in a flat array addressed by the combinatorial
(colex) rank of the multi-index, i.e. ``C(N_f + n - 1, n)`` entries instead
of ``N_f ** n``. Multinomial multiplicities are applied at contraction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .errors import CapacityError, DimensionError


def n_entries(n_factors, order):
    return math.comb(n_factors + order - 1, order)


@lru_cache(maxsize=32)
def _binom(n_max_top, k_max):
    tab = np.zeros((n_max_top + 1, k_max + 1), dtype=np.int64)
    tab[:, 0] = 1
    for n in range(1, n_max_top + 1):
        tab[n, 1:] = tab[n - 1, 1:] + tab[n - 1, :-1]
    return tab


def multi_index_rank(idx, n_factors):
    """Rank of each sorted multi-index row of ``idx`` (shape ``(M, n)``)."""
    idx = np.asarray(idx, dtype=np.int64)
    n = idx.shape[-1]
    tab = _binom(n_factors + n, n)
    shifted = idx + np.arange(n)
    return tab[shifted, np.arange(1, n + 1)].sum(axis=-1)


@lru_cache(maxsize=256)
def support_patterns(s, n):
    """Sorted position patterns over a support of size ``s`` and multiplicities."""
    pats = np.array(list(combinations_with_replacement(range(s), n)), dtype=np.intp)
    pats = pats.reshape(-1, n)
    mult = np.empty(len(pats))
    fact_n = math.factorial(n)
    for k, p in enumerate(pats):
        denom = 1
        for c in np.bincount(p):
            denom *= math.factorial(int(c))
        mult[k] = fact_n / denom
    pats.setflags(write=False)
    mult.setflags(write=False)
    return pats, mult


def sorted_segment_sum(keys, values, n_keys):
    """Sum ``values`` per integer key independently of input order.

    Contributions are sorted by ``(key, value)`` before a sequential
    reduction, so any permutation of the inputs yields bit-identical sums.
    """
    keys = np.asarray(keys, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    out = np.zeros(n_keys)
    if keys.size == 0:
        return out
    order = np.lexsort((values, keys))
    k = keys[order]
    v = values[order]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    out[k[starts]] = np.add.reduceat(v, starts)
    return out


def _rows_by_support(beta):
    """Group rows of ``beta`` by support size: yields ``(rows, support)``."""
    mask = beta != 0.0
    sizes = mask.sum(axis=1)
    for s in np.unique(sizes):
        if s == 0:
            continue
        rows = np.flatnonzero(sizes == s)
        support = np.nonzero(mask[rows])[1].reshape(rows.size, s)
        yield rows, support


def _pattern_products(b, idx):
    """``prod_j b[row, idx[row, p, j]]`` for index patterns of shape (R, P, n)."""
    g = np.take_along_axis(b, idx.reshape(idx.shape[0], -1), axis=1)
    return g.reshape(idx.shape).prod(axis=2)


@dataclass
class TensorSet:
    n_factors: int
    n_max: int
    orders: dict = field(default_factory=dict)

    def __getitem__(self, n):
        return self.orders[n]

    def entry(self, n, multi_index):
        k = np.sort(np.asarray(multi_index, dtype=np.int64))
        return float(self.orders[n][multi_index_rank(k[None, :], self.n_factors)[0]])

    def to_dense(self, n):
        """Full ``N_f ** n`` array (small problems and tests only)."""
        dense = np.empty((self.n_factors,) * n)
        for idx in np.ndindex(*dense.shape):
            dense[idx] = self.entry(n, idx)
        return dense


def check_capacity(n_factors, n_max, budget):
    total = sum(n_entries(n_factors, n) for n in range(1, n_max + 1))
    if total > budget:
        raise CapacityError(
            f"{total} symmetric tensor entries for n_factors={n_factors}, "
            f"n_max={n_max} exceed the budget of {budget}; lower n_max"
        )
    return total


def build_tensors(weights, beta, n_max, n_factors, budget=20_000_000):
    """Accumulate ``P[n] = sum_rows weights[row, n-1] * beta_row^{(x) n}``.

    ``weights`` has shape ``(M, n_max)`` and already contains ``r**n * v^(n)``
    (rows are loans or borrower aggregates); ``beta`` has shape
    ``(M, n_factors)``. Rows with an all-zero weight or beta are skipped.
    """
    weights = np.asarray(weights, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 2 or beta.shape[1] != n_factors:
        raise DimensionError(f"beta must have shape (M, {n_factors})")
    if weights.shape[0] != beta.shape[0] or weights.shape[1] < n_max:
        raise DimensionError("weights must have shape (M, >= n_max) matching beta")
    check_capacity(n_factors, n_max, budget)

    live = np.any(weights[:, :n_max] != 0.0, axis=1)
    w_live = weights[live]
    b_live = beta[live]
    tensors = TensorSet(n_factors, n_max)
    for n in range(1, n_max + 1):
        keys, vals = [], []
        for rows, support in _rows_by_support(b_live):
            pats, _ = support_patterns(support.shape[1], n)
            idx = support[:, pats]                          # (R, n_pat, n)
            prod = _pattern_products(b_live[rows], idx)
            keys.append(multi_index_rank(idx.reshape(-1, n), n_factors))
            vals.append((w_live[rows, n - 1][:, None] * prod).ravel())
        size = n_entries(n_factors, n)
        if keys:
            tensors.orders[n] = sorted_segment_sum(np.concatenate(keys),
                                                   np.concatenate(vals), size)
        else:
            tensors.orders[n] = np.zeros(size)
    return tensors


def contract_rows(tensors: TensorSet, beta, n):
    """Full n-fold contraction of ``P[n]`` with each row of ``beta``."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if beta.shape[1] != tensors.n_factors:
        raise DimensionError(
            f"loadings have {beta.shape[1]} factors, tensors {tensors.n_factors}"
        )
    if n > tensors.n_max or n < 1:
        raise ValueError(f"order {n} outside 1..{tensors.n_max}")
    out = np.zeros(beta.shape[0])
    P = tensors.orders[n]
    for rows, support in _rows_by_support(beta):
        pats, mult = support_patterns(support.shape[1], n)
        idx = support[:, pats]
        prod = _pattern_products(beta[rows], idx)
        ranks = multi_index_rank(idx.reshape(-1, n), tensors.n_factors)
        out[rows] = np.sum(mult * prod * P[ranks].reshape(prod.shape), axis=1)
    return out


def contract(tensors: TensorSet, loadings, n):
    """Contract ``P[n]`` with a single loading vector (or FactorLoadings)."""
    beta = getattr(loadings, "beta", loadings)
    return float(contract_rows(tensors, np.asarray(beta)[None, :], n)[0])
