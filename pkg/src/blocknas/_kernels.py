"""Hot numeric kernels with a numba-compiled fast path.

Every kernel is written as a plain-Python loop function; the numba path is
njit() applied to the very same function, so both backends execute identical
floating-point operations in identical order and produce bit-equal results.

Backend selection: environment variable BLOCKNAS_KERNELS
    auto  (default) use numba when importable, else pure Python/numpy
    numba require numba, fail if missing
    numpy force the interpreted fallback

RNG never enters a kernel; stochastic choices stay in the caller so backend
choice can never change search results.
"""

from __future__ import annotations

import os

import numpy as np


def _eval_batch(choices, mse_table, macs_table, base_macs):
    """Batch objective evaluation.

    choices: (G, N) int64 option index per slot; mse_table/macs_table: (N, Mmax)
    padded per-slot lookup rows. Loss accumulates in slot order, matching the
    scalar surrogate so results are bit-identical.
    """
    g, n = choices.shape
    loss = np.empty(g, dtype=np.float64)
    macs = np.empty(g, dtype=np.int64)
    for i in range(g):
        s = 0.0
        c = base_macs
        for j in range(n):
            k = choices[i, j]
            s += mse_table[j, k]
            c += macs_table[j, k]
        loss[i] = s
        macs[i] = c
    return loss, macs


def _pareto_mask_sorted(loss, cost):
    """Maximal non-dominated mask over points pre-sorted by (loss, cost) asc.

    Ties on both objectives all survive; a point with the cost of an earlier
    (strictly lower loss) point is dominated and dropped.
    """
    n = loss.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    best = np.inf
    i = 0
    while i < n:
        j = i
        while j < n and loss[j] == loss[i]:
            j += 1
        gmin = cost[i]  # group sorted by cost, so first entry is the minimum
        if gmin < best:
            k = i
            while k < j and cost[k] == gmin:
                keep[k] = True
                k += 1
            best = gmin
        i = j
    return keep


def _nds_ranks(loss, cost):
    """Fast non-dominated sorting; returns the front index of every point."""
    n = loss.shape[0]
    dominates_ij = np.zeros((n, n), dtype=np.bool_)
    count = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if i != j:
                if (
                    loss[i] <= loss[j]
                    and cost[i] <= cost[j]
                    and (loss[i] < loss[j] or cost[i] < cost[j])
                ):
                    dominates_ij[i, j] = True
                    count[j] += 1
    ranks = np.full(n, -1, dtype=np.int64)
    frontier = np.empty(n, dtype=np.int64)
    size = 0
    for i in range(n):
        if count[i] == 0:
            frontier[size] = i
            size += 1
    rank = 0
    assigned = 0
    while size > 0:
        nxt = np.empty(n, dtype=np.int64)
        nxt_size = 0
        for fi in range(size):
            i = frontier[fi]
            ranks[i] = rank
            assigned += 1
        for fi in range(size):
            i = frontier[fi]
            for j in range(n):
                if dominates_ij[i, j]:
                    count[j] -= 1
                    if count[j] == 0:
                        nxt[nxt_size] = j
                        nxt_size += 1
        frontier = nxt
        size = nxt_size
        rank += 1
    return ranks


_PY_IMPLS = {
    "eval_batch": _eval_batch,
    "pareto_mask_sorted": _pareto_mask_sorted,
    "nds_ranks": _nds_ranks,
}

_FLAG = os.environ.get("BLOCKNAS_KERNELS", "auto").strip().lower()
if _FLAG not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"BLOCKNAS_KERNELS must be auto|numba|numpy, got {_FLAG!r}")

_NUMBA_IMPLS: dict[str, object] = {}
try:
    from numba import njit  # noqa: F401

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False

if _FLAG == "numba" and not _HAVE_NUMBA:
    raise RuntimeError("BLOCKNAS_KERNELS=numba but numba is not importable")

if _HAVE_NUMBA:
    for _name, _fn in _PY_IMPLS.items():
        _NUMBA_IMPLS[_name] = njit(cache=True)(_fn)

if _HAVE_NUMBA and _FLAG in ("auto", "numba"):
    BACKEND = "numba"
    eval_batch = _NUMBA_IMPLS["eval_batch"]
    pareto_mask_sorted = _NUMBA_IMPLS["pareto_mask_sorted"]
    nds_ranks = _NUMBA_IMPLS["nds_ranks"]
else:
    BACKEND = "numpy"
    eval_batch = _eval_batch
    pareto_mask_sorted = _pareto_mask_sorted
    nds_ranks = _nds_ranks


def implementations(name: str) -> dict[str, object]:
    """All available backends for one kernel, for tests and benchmarks."""
    impls = {"numpy": _PY_IMPLS[name]}
    if _HAVE_NUMBA:
        impls["numba"] = _NUMBA_IMPLS[name]
    return impls


def pareto_mask(loss: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Maximal non-dominated mask in original index order (minimization)."""
    loss = np.ascontiguousarray(loss, dtype=np.float64)
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    order = np.lexsort((cost, loss))
    keep_sorted = pareto_mask_sorted(loss[order], cost[order])
    mask = np.zeros(loss.shape[0], dtype=bool)
    mask[order[keep_sorted]] = True
    return mask


def warmup() -> None:
    """Compile every kernel on tiny inputs (no-op on the numpy backend)."""
    choices = np.zeros((2, 2), dtype=np.int64)
    table = np.zeros((2, 2), dtype=np.float64)
    imacs = np.zeros((2, 2), dtype=np.int64)
    eval_batch(choices, table, imacs, 0)
    arr = np.array([0.0, 1.0])
    pareto_mask_sorted(arr, arr)
    nds_ranks(arr, arr)
