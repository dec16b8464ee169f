"""Entropy of tower-visit histograms and the information gain of merging two.

``info_gain(a, b) = H(a + b) - (H(a) + H(b)) / 2`` where ``a + b`` adds the
visit counts.  It is near zero when both histograms have the same shape and
grows with their disagreement (``ln 2`` for disjoint supports of equal mass).
All logs are natural.
"""

from __future__ import annotations

from collections import Counter
from typing import Mapping, Sequence, Union

import numba
import numpy as np

from .assignment import CostMatrix
from .model import DataError

Histogram = Mapping[int, int]


def histogram(locations: Sequence[int]) -> Counter:
    return Counter(int(v) for v in locations)


def _as_hist(h: Union[Histogram, Sequence[int], np.ndarray]) -> Counter:
    if isinstance(h, Mapping):
        return Counter({k: v for k, v in h.items() if v})
    return histogram(h)


def _entropy_counts(counts: np.ndarray) -> float:
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def entropy(h) -> float:
    """Shannon entropy of a histogram (mapping tower -> count, or a sequence
    of visited towers)."""
    h = _as_hist(h)
    if not h:
        raise DataError("entropy of an empty histogram")
    counts = np.array(sorted(h.values()), dtype=np.float64)
    if (counts < 0).any():
        raise DataError("negative visit count")
    return _entropy_counts(counts)


def info_gain(a, b) -> float:
    ha, hb = _as_hist(a), _as_hist(b)
    if not ha or not hb:
        raise DataError("info_gain of an empty sub-trajectory")
    merged = ha + hb
    keys = sorted(merged)
    return _entropy_counts(np.array([merged[k] for k in keys], dtype=np.float64)) - (
        entropy(ha) + entropy(hb)) / 2


class HistogramBatch:
    """CSR layout of one histogram per row: ``towers[ptr[i]:ptr[i+1]]``."""

    def __init__(self, ptr, towers, counts):
        self.ptr = ptr
        self.towers = towers
        self.counts = counts

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "HistogramBatch":
        rows = np.asarray(rows, dtype=np.int64)
        n, L = rows.shape
        if L == 0:
            raise DataError("empty sub-trajectories")
        srt = np.sort(rows, axis=1)
        new = np.ones_like(srt, dtype=bool)
        new[:, 1:] = srt[:, 1:] != srt[:, :-1]
        flat_new = new.ravel()
        towers = srt.ravel()[flat_new]
        starts = np.nonzero(flat_new)[0]
        ends = np.append(starts[1:], n * L)
        counts = (ends - starts).astype(np.float64)
        ptr = np.zeros(n + 1, np.int64)
        ptr[1:] = np.cumsum(new.sum(axis=1))
        return cls(ptr, towers, counts)

    def __add__(self, other: "HistogramBatch") -> "HistogramBatch":
        """Row-wise sum of two batches of equal length."""
        ptr, towers, counts = _merge_batches(self.ptr, self.towers, self.counts,
                                             other.ptr, other.towers, other.counts)
        return HistogramBatch(ptr, towers, counts)

    def take(self, rows) -> "HistogramBatch":
        rows = np.asarray(rows, dtype=np.int64)
        ptr, towers, counts = _take_rows(self.ptr, self.towers, self.counts, rows)
        return HistogramBatch(ptr, towers, counts)

    def __len__(self) -> int:
        return len(self.ptr) - 1


@numba.njit(cache=True)
def _take_rows(ptr, towers, counts, rows):
    n = rows.shape[0]
    new_ptr = np.zeros(n + 1, np.int64)
    for k in range(n):
        r = rows[k]
        new_ptr[k + 1] = new_ptr[k] + ptr[r + 1] - ptr[r]
    out_t = np.empty(new_ptr[n], np.int64)
    out_c = np.empty(new_ptr[n], np.float64)
    for k in range(n):
        r = rows[k]
        o = new_ptr[k]
        for q in range(ptr[r], ptr[r + 1]):
            out_t[o] = towers[q]
            out_c[o] = counts[q]
            o += 1
    return new_ptr, out_t, out_c


@numba.njit(cache=True)
def _merge_batches(pa, ta, ca, pb, tb, cb):
    n = pa.shape[0] - 1
    out_p = np.zeros(n + 1, np.int64)
    out_t = np.empty(ta.shape[0] + tb.shape[0], np.int64)
    out_c = np.empty(ta.shape[0] + tb.shape[0], np.float64)
    o = 0
    for i in range(n):
        x, xe = pa[i], pa[i + 1]
        y, ye = pb[i], pb[i + 1]
        while x < xe or y < ye:
            if y >= ye or (x < xe and ta[x] < tb[y]):
                out_t[o] = ta[x]
                out_c[o] = ca[x]
                x += 1
            elif x >= xe or tb[y] < ta[x]:
                out_t[o] = tb[y]
                out_c[o] = cb[y]
                y += 1
            else:
                out_t[o] = ta[x]
                out_c[o] = ca[x] + cb[y]
                x += 1
                y += 1
            o += 1
        out_p[i + 1] = o
    return out_p, out_t[:o].copy(), out_c[:o].copy()


@numba.njit(cache=True)
def _xlogx_sums(ptr, counts):
    n = ptr.shape[0] - 1
    tot = np.zeros(n)
    s = np.zeros(n)
    for i in range(n):
        for q in range(ptr[i], ptr[i + 1]):
            c = counts[q]
            tot[i] += c
            s[i] += c * np.log(c)
    return tot, s


@numba.njit(cache=True)
def _gain_matrix(lp, lt, lc, rp, rt, rc, num_towers):
    """Dense info-gain matrix from sparse histograms.

    With ``g(x) = x ln x`` and totals ``S = n_i + n_j``, the merged entropy
    is ``ln S - (A_i + B_j + sum over shared towers of
    g(a+b) - g(a) - g(b)) / S``; the shared-tower term is accumulated through
    an inverted index of the right-hand histograms.
    """
    n_l = lp.shape[0] - 1
    n_r = rp.shape[0] - 1
    ln_tot, a_sum = _xlogx_sums(lp, lc)
    rn_tot, b_sum = _xlogx_sums(rp, rc)
    h_l = np.log(ln_tot) - a_sum / ln_tot
    h_r = np.log(rn_tot) - b_sum / rn_tot
    out = np.empty((n_l, n_r))
    for i in range(n_l):
        for j in range(n_r):
            s = ln_tot[i] + rn_tot[j]
            out[i, j] = np.log(s) - (a_sum[i] + b_sum[j]) / s - 0.5 * (h_l[i] + h_r[j])
    # inverted index over right-hand towers
    deg = np.zeros(num_towers + 1, np.int64)
    for q in range(rt.shape[0]):
        deg[rt[q] + 1] += 1
    for k in range(num_towers):
        deg[k + 1] += deg[k]
    inv_row = np.empty(rt.shape[0], np.int64)
    inv_cnt = np.empty(rt.shape[0])
    fill = deg[:-1].copy()
    for j in range(n_r):
        for q in range(rp[j], rp[j + 1]):
            k = rt[q]
            inv_row[fill[k]] = j
            inv_cnt[fill[k]] = rc[q]
            fill[k] += 1
    for i in range(n_l):
        for q in range(lp[i], lp[i + 1]):
            k = lt[q]
            a = lc[q]
            ga = a * np.log(a)
            for e in range(deg[k], deg[k + 1]):
                j = inv_row[e]
                b = inv_cnt[e]
                ab = a + b
                corr = ab * np.log(ab) - ga - b * np.log(b)
                out[i, j] -= corr / (ln_tot[i] + rn_tot[j])
    return out


def gain_matrix(left: HistogramBatch, right: HistogramBatch, num_towers: int) -> np.ndarray:
    return _gain_matrix(left.ptr, left.towers, left.counts,
                        right.ptr, right.towers, right.counts, num_towers)


def crossday_cost(day_d, day_d1, num_towers: int = None) -> CostMatrix:
    """``c[i, j] = info_gain(day_d[i], day_d1[j])`` for two days of
    sub-trajectories given as ``(N, L)`` tower-index arrays or batches."""
    left = day_d if isinstance(day_d, HistogramBatch) else HistogramBatch.from_rows(day_d)
    right = day_d1 if isinstance(day_d1, HistogramBatch) else HistogramBatch.from_rows(day_d1)
    if len(left) != len(right):
        raise DataError(f"cross-day size mismatch: {len(left)} vs {len(right)}")
    if num_towers is None:
        num_towers = int(max(left.towers.max(), right.towers.max())) + 1
    return CostMatrix(gain_matrix(left, right, num_towers), unit="nats")
