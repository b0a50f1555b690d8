"""PAM k-medoids under cosine distance."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


def cosine_distance_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero vector has no cosine direction")
    U = X / norms
    D = 1.0 - U @ U.T
    np.clip(D, 0.0, 2.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def total_cost(D: np.ndarray, medoids) -> float:
    """Sum over points of the distance to the nearest medoid (correctly rounded)."""
    return math.fsum(D[:, list(medoids)].min(axis=1).tolist())


@dataclass
class KMedoidsResult:
    medoids: list[int]
    labels: np.ndarray
    cost: float
    iterations: int
    converged: bool


def _build(D: np.ndarray, k: int) -> list[int]:
    n = len(D)
    medoids = [int(np.argmin(D.sum(axis=1)))]
    nearest = D[:, medoids[0]].copy()
    while len(medoids) < k:
        best, best_gain = -1, -1.0
        for c in range(n):
            if c in medoids:
                continue
            gain = np.maximum(nearest - D[:, c], 0.0).sum()
            if gain > best_gain:
                best, best_gain = c, gain
        medoids.append(best)
        nearest = np.minimum(nearest, D[:, best])
    return medoids


def _candidate_costs(D: np.ndarray, medoids: list[int], slot: int, chunk: int = 1024) -> np.ndarray:
    others = [m for j, m in enumerate(medoids) if j != slot]
    near = D[:, others].min(axis=1) if others else np.full(len(D), np.inf)
    out = np.empty(len(D))
    for start in range(0, len(D), chunk):
        out[start:start + chunk] = np.minimum(near[:, None], D[:, start:start + chunk]).sum(axis=0)
    return out


def _best_swap(D: np.ndarray, medoids: list[int], cost: float):
    """Best-improvement swap, or None at a local optimum.

    Candidates are ranked with fast numpy sums; anything that might beat the
    current cost is re-checked with the exact cost so convergence means no
    swap improves `total_cost`.
    """
    slack = 1e-9 * max(1.0, abs(cost))
    best, best_cost = None, cost
    for i in range(len(medoids)):
        approx = _candidate_costs(D, medoids, i)
        for h in np.flatnonzero(approx <= cost + slack):
            h = int(h)
            if h in medoids:
                continue
            trial = medoids.copy()
            trial[i] = h
            c = total_cost(D, trial)
            if c < best_cost:
                best, best_cost = (i, h), c
    return None if best is None else (best, best_cost)


def _exhaustive(D: np.ndarray, k: int) -> list[int]:
    best, best_cost = None, math.inf
    for combo in itertools.combinations(range(len(D)), k):
        c = total_cost(D, combo)
        if c < best_cost:
            best, best_cost = list(combo), c
    return best


def pam(D: np.ndarray, k: int, seed: int = 0, init: str = "build", max_iter: int = 100,
        exact_limit: int = 2000) -> KMedoidsResult:
    """Greedy BUILD (or seeded random) initialisation followed by best-improvement SWAP.

    When there are at most `exact_limit` medoid sets, the "build" init is
    replaced by enumerating all of them, so small inputs get the global
    optimum; SWAP then only confirms it. Ties are broken by lower index
    throughout. With `init="build"` the seed has no effect; it only drives the
    random initialisation.
    """
    n = len(D)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if init == "build":
        medoids = _exhaustive(D, k) if math.comb(n, k) <= exact_limit else _build(D, k)
    elif init == "random":
        medoids = sorted(np.random.default_rng(seed).choice(n, size=k, replace=False).tolist())
    else:
        raise ValueError(f"unknown init {init!r}")

    cost = total_cost(D, medoids)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        swap = _best_swap(D, medoids, cost)
        if swap is None:
            converged = True
            break
        (i, h), cost = swap
        medoids[i] = h
    labels = np.argmin(D[:, medoids], axis=1)
    return KMedoidsResult(medoids=medoids, labels=labels, cost=cost, iterations=it, converged=converged)
