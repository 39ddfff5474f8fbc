"""Hot inner loops for the fused-penalty proximal maps.

Both kernels ship in two variants: a numba-compiled loop (default) and a
pure-numpy fallback.  Set BURSTKIT_NO_NUMBA=1 to force the fallback; the
active path is reported in KERNEL_BACKEND.  `benchmarks/bench_kernels.py`
times the two paths against each other.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("BURSTKIT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")
USE_NUMBA = not _DISABLED
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

KERNEL_BACKEND = "numba" if USE_NUMBA else "numpy"


def _tv1d_loop(ubar, lam):
    """Exact total-variation proximal map, Condat's direct (taut-string) scan.

    Solves min_u 0.5*||u - ubar||^2 + lam * sum|u[i+1]-u[i]| in one forward
    pass with O(N) typical cost.
    """
    N = ubar.shape[0]
    out = np.empty(N)
    if N == 1 or lam <= 0.0:
        out[:] = ubar
        return out
    k = 0
    k0 = 0
    km = 0
    kp = 0
    umin = lam
    umax = -lam
    vmin = ubar[0] - lam
    vmax = ubar[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == N - 1:
            if umin < 0.0:
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > km:
                        break
                k = k0
                km = k0
                vmin = ubar[k]
                umin = lam
                umax = vmin + lam - vmax
            elif umax > 0.0:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kp:
                        break
                k = k0
                kp = k0
                vmax = ubar[k]
                umax = -lam
                umin = vmax - lam - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return out
        umin += ubar[k + 1] - vmin
        if umin < -lam:
            while True:
                out[k0] = vmin
                k0 += 1
                if k0 > km:
                    break
            k = k0
            km = k0
            kp = k0
            vmin = ubar[k]
            vmax = vmin + twolam
            umin = lam
            umax = -lam
        else:
            umax += ubar[k + 1] - vmax
            if umax > lam:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kp:
                        break
                k = k0
                km = k0
                kp = k0
                vmax = ubar[k]
                vmin = vmax - twolam
                umin = lam
                umax = -lam
            else:
                k += 1
                if umin >= lam:
                    km = k
                    vmin += (umin - lam) / (k - k0 + 1)
                    umin = lam
                if umax <= -lam:
                    kp = k
                    vmax += (umax + lam) / (k - k0 + 1)
                    umax = -lam


def _l0_partition_loop(ubar, lam):
    """Optimal partitioning DP for the segment-count penalty.

    Solves min_u 0.5*||u - ubar||^2 + lam * #{i : u[i+1] != u[i]} exactly in
    O(N^2).  Cost ties prefer fewer segments, then the earlier split point.
    """
    N = ubar.shape[0]
    s1 = np.empty(N + 1)
    s2 = np.empty(N + 1)
    s1[0] = 0.0
    s2[0] = 0.0
    for i in range(N):
        s1[i + 1] = s1[i] + ubar[i]
        s2[i + 1] = s2[i] + ubar[i] * ubar[i]
    F = np.empty(N + 1)
    nseg = np.zeros(N + 1, np.int64)
    back = np.zeros(N + 1, np.int64)
    F[0] = -lam
    for j in range(1, N + 1):
        bc = np.inf
        bi = 0
        bns = np.int64(2**62)
        s1j = s1[j]
        s2j = s2[j]
        for i in range(j):
            sy = s1j - s1[i]
            cost = F[i] + lam + 0.5 * ((s2j - s2[i]) - sy * sy / (j - i))
            ns = nseg[i] + 1
            if cost < bc or (cost == bc and ns < bns):
                bc = cost
                bi = i
                bns = ns
        F[j] = bc
        back[j] = bi
        nseg[j] = bns
    out = np.empty(N)
    j = N
    while j > 0:
        i = back[j]
        mean = (s1[j] - s1[i]) / (j - i)
        for t in range(i, j):
            out[t] = mean
        j = i
    return out


def _l0_partition_numpy(ubar, lam):
    """Vectorized fallback for `_l0_partition_loop` (same tie-breaking)."""
    N = ubar.shape[0]
    s1 = np.concatenate(([0.0], np.cumsum(ubar)))
    s2 = np.concatenate(([0.0], np.cumsum(ubar * ubar)))
    F = np.empty(N + 1)
    nseg = np.zeros(N + 1, np.int64)
    back = np.zeros(N + 1, np.int64)
    F[0] = -lam
    for j in range(1, N + 1):
        m = np.arange(j, 0, -1, dtype=np.float64)
        sy = s1[j] - s1[:j]
        cost = F[:j] + lam + 0.5 * ((s2[j] - s2[:j]) - sy * sy / m)
        bc = cost.min()
        ties = np.flatnonzero(cost == bc)
        bi = ties[np.argmin(nseg[ties])]
        F[j] = bc
        back[j] = bi
        nseg[j] = nseg[bi] + 1
    out = np.empty(N)
    j = N
    while j > 0:
        i = int(back[j])
        out[i:j] = (s1[j] - s1[i]) / (j - i)
        j = i
    return out


if USE_NUMBA:
    tv1d = njit(cache=True, nogil=True)(_tv1d_loop)
    l0_partition = njit(cache=True, nogil=True)(_l0_partition_loop)
else:
    tv1d = _tv1d_loop
    l0_partition = _l0_partition_numpy
