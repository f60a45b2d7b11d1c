"""Sequential pseudo-observations and quadrant-event sums.

Residuals of margin ``j`` are reduced to their full-sample ranks (stable sort
on ``(value, time)``).  For a prefix of length ``m`` the pseudo-observation of
observation ``t < m`` is its rank among the first ``m`` residuals divided by
``m``; the threshold event ``U <= u`` therefore holds iff that rank is at most
``k(u, m) = max{k : k / m <= u}``.

:func:`sequential_quadrant_sums` evaluates the marked quadrant sums for every
prefix in ``O(n log n)`` using two Fenwick trees over the full-sample ranks.
When the prefix grows by one element the set of "below" observations of each
margin changes by at most two elements, which keeps the update constant work
besides the tree queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np


@dataclass(frozen=True)
class RankPanel:
    """Full-sample orderings of two residual series."""

    rank1: np.ndarray
    rank2: np.ndarray
    order1: np.ndarray
    order2: np.ndarray

    @property
    def n(self) -> int:
        return self.rank1.size

    @classmethod
    def from_residuals(cls, eps1, eps2) -> "RankPanel":
        eps1 = np.asarray(eps1, dtype=float)
        eps2 = np.asarray(eps2, dtype=float)
        if eps1.shape != eps2.shape or eps1.ndim != 1:
            raise ValueError("residual series must be 1-d and of equal length")
        o1 = np.argsort(eps1, kind="stable")
        o2 = np.argsort(eps2, kind="stable")
        r1 = np.empty_like(o1)
        r2 = np.empty_like(o2)
        r1[o1] = np.arange(o1.size)
        r2[o2] = np.arange(o2.size)
        return cls(rank1=r1, rank2=r2, order1=o1, order2=o2)

    def ranks(self, j: int) -> np.ndarray:
        return self.rank1 if j == 1 else self.rank2

    def take(self, idx) -> "RankPanel":
        """Panel of the sub-sample ``idx`` (ranks are recomputed)."""
        idx = np.asarray(idx)
        return RankPanel.from_residuals(
            self.rank1[idx].astype(float), self.rank2[idx].astype(float)
        )


@nb.njit(cache=True, nogil=True)
def below_count(u, m):
    """Largest integer ``k <= m`` with ``k / m <= u``."""
    if m <= 0:
        return 0
    k = int(math.floor(u * m))
    if k > m:
        k = m
    if k < 0:
        k = 0
    while k + 1 <= m and (k + 1) / m <= u:
        k += 1
    while k > 0 and k / m > u:
        k -= 1
    return k


def sequential_rank_u(panel: RankPanel, j: int, t: int, m: int) -> float:
    """Pseudo-observation of observation ``t`` (0-based) from the first ``m`` residuals."""
    if not (0 <= t < m <= panel.n):
        raise ValueError(f"need 0 <= t < m <= n, got t={t}, m={m}, n={panel.n}")
    r = panel.ranks(j)
    return float(np.count_nonzero(r[:m] <= r[t])) / m


def _thresholds(panel: RankPanel, u, m: int) -> tuple[int, int]:
    out = []
    for j, uj in ((1, u[0]), (2, u[1])):
        k = below_count(float(uj), m)
        if k == 0:
            out.append(-1)
        else:
            out.append(int(np.partition(panel.ranks(j)[:m], k - 1)[k - 1]))
    return out[0], out[1]


def quadrant_indicators(panel: RankPanel, u, m: int) -> np.ndarray:
    """``(m, 4)`` 0/1 matrix of the four threshold events for the first ``m`` observations."""
    if not (1 <= m <= panel.n):
        raise ValueError("prefix length out of range")
    th1, th2 = _thresholds(panel, u, m)
    a = panel.rank1[:m] <= th1
    b = panel.rank2[:m] <= th2
    return np.column_stack([a & b, a & ~b, ~a & b, ~a & ~b]).astype(np.int64)


def quadrant_counts(panel: RankPanel, u, m: int | None = None) -> np.ndarray:
    """Counts ``(N1, N2, N3, N4)`` of the quadrant events within the first ``m`` observations."""
    m = panel.n if m is None else m
    return quadrant_indicators(panel, u, m).sum(axis=0)


def weighted_quadrant_partials(panel: RankPanel, x, u, m: int | None = None) -> np.ndarray:
    """``4 x (k+1)`` matrix of ``sum_{t < m} X_t d_{j,t}``."""
    m = panel.n if m is None else m
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return quadrant_indicators(panel, u, m).T.astype(float) @ x[:m]


# ---------------------------------------------------------------------------
# O(n log n) kernel over all prefixes
# ---------------------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _fen_add(tree, pos, v):
    n = tree.shape[0] - 1
    while pos <= n:
        tree[pos] += v
        pos += pos & (-pos)


@nb.njit(cache=True, nogil=True)
def _fen_prefix(tree, pos):
    s = 0
    while pos > 0:
        s += tree[pos]
        pos -= pos & (-pos)
    return s


@nb.njit(cache=True, nogil=True)
def _fen_kth(tree, k, top):
    # smallest 1-based position whose prefix count reaches k
    n = tree.shape[0] - 1
    pos = 0
    rem = k
    step = top
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] < rem:
            pos = nxt
            rem -= tree[nxt]
        step >>= 1
    return pos + 1


@nb.njit(cache=True, nogil=True)
def _toggle(tt, join, mine, other, x, s_own, s_both):
    kp = x.shape[1]
    mine[tt] = join
    sgn = 1.0 if join else -1.0
    for c in range(kp):
        s_own[c] += sgn * x[tt, c]
    if other[tt]:
        for c in range(kp):
            s_both[c] += sgn * x[tt, c]


@nb.njit(cache=True, nogil=True)
def _move_threshold(tree, top, inv, mine, other, x, s_own, s_both, old_r, new_r, r_new, t_new, m):
    if new_r > old_r:
        idx = _fen_prefix(tree, old_r + 1) + 1
        while idx <= m:
            r = _fen_kth(tree, idx, top) - 1
            if r > new_r:
                break
            tt = inv[r]
            if not mine[tt]:
                _toggle(tt, True, mine, other, x, s_own, s_both)
            idx += 1
        if r_new <= old_r and not mine[t_new]:
            _toggle(t_new, True, mine, other, x, s_own, s_both)
    elif new_r < old_r:
        idx = _fen_prefix(tree, new_r + 1) + 1
        while idx <= m:
            r = _fen_kth(tree, idx, top) - 1
            if r > old_r:
                break
            tt = inv[r]
            if mine[tt]:
                _toggle(tt, False, mine, other, x, s_own, s_both)
            idx += 1
        if r_new <= new_r and not mine[t_new]:
            _toggle(t_new, True, mine, other, x, s_own, s_both)
    else:
        if r_new <= new_r and not mine[t_new]:
            _toggle(t_new, True, mine, other, x, s_own, s_both)


@nb.njit(cache=True, nogil=True)
def _sequential_sums(rank1, rank2, inv1, inv2, x, u1, u2):
    n = rank1.shape[0]
    kp = x.shape[1]
    out = np.zeros((n + 1, 4, kp))
    tree1 = np.zeros(n + 1, dtype=np.int64)
    tree2 = np.zeros(n + 1, dtype=np.int64)
    in1 = np.zeros(n, dtype=np.bool_)
    in2 = np.zeros(n, dtype=np.bool_)
    s_a = np.zeros(kp)
    s_b = np.zeros(kp)
    s_ab = np.zeros(kp)
    s_all = np.zeros(kp)
    top = 1
    while top * 2 <= n:
        top *= 2
    th1 = -1
    th2 = -1
    for m in range(1, n + 1):
        t = m - 1
        for c in range(kp):
            s_all[c] += x[t, c]

        _fen_add(tree1, rank1[t] + 1, 1)
        k1 = below_count(u1, m)
        new1 = _fen_kth(tree1, k1, top) - 1 if k1 > 0 else -1
        _move_threshold(tree1, top, inv1, in1, in2, x, s_a, s_ab, th1, new1, rank1[t], t, m)
        th1 = new1

        _fen_add(tree2, rank2[t] + 1, 1)
        k2 = below_count(u2, m)
        new2 = _fen_kth(tree2, k2, top) - 1 if k2 > 0 else -1
        _move_threshold(tree2, top, inv2, in2, in1, x, s_b, s_ab, th2, new2, rank2[t], t, m)
        th2 = new2

        for c in range(kp):
            out[m, 0, c] = s_ab[c]
            out[m, 1, c] = s_a[c] - s_ab[c]
            out[m, 2, c] = s_b[c] - s_ab[c]
            out[m, 3, c] = s_all[c] - s_a[c] - s_b[c] + s_ab[c]
    return out


def marks_matrix(z, n: int | None = None) -> np.ndarray:
    """Stack the constant and the state vector into ``X_t = (1, Z_t')'``."""
    if z is None:
        return np.ones((n, 1))
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    return np.column_stack([np.ones(z.shape[0]), z])


def sequential_quadrant_sums(panel: RankPanel, x, u) -> np.ndarray:
    """Marked quadrant sums for every prefix length.

    Returns an array of shape ``(n + 1, 4, k + 1)`` whose entry ``[m, j]`` is
    ``sum_{t < m} X_t d_{j,t}(u, m / n)``; row ``m = 0`` is zero.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != panel.n:
        raise ValueError("marks must be aligned with the rank panel")
    return _sequential_sums(
        panel.rank1, panel.rank2, panel.order1, panel.order2,
        np.ascontiguousarray(x), float(u[0]), float(u[1]),
    )

