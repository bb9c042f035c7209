"""User-to-slot assignment: the round-robin greedy rule and a random baseline."""

from __future__ import annotations

import math

import numpy as np

from .model import Assignment, AssignmentError


def users_per_beam(U, M):
    """Per-beam cap ``ceil(U / M)``."""
    return math.ceil(U / M)


def _check_capacity(M, K, U):
    if M < 1 or K < 1 or U < 1:
        raise AssignmentError(f"dimensions must be positive, got M={M} K={K} U={U}")
    if U > M * K * users_per_beam(U, M):
        raise AssignmentError(f"{U} users exceed the slot capacity")


def greedy_assign(channels, M, K, U):
    """Round-robin greedy assignment.

    In each round every beam in turn takes the strongest user still
    unassigned. A beam serves its own subcarrier (``k = m``) when ``K == M``;
    otherwise the subcarrier is the one maximising the gain of the chosen
    user. Ties go to the lowest user index, then the lowest subcarrier.
    """
    _check_capacity(M, K, U)
    h = np.asarray(channels.h, dtype=float)
    if h.shape != (M, U, K):
        raise AssignmentError(f"gain tensor has shape {h.shape}, expected {(M, U, K)}")
    x = np.zeros((M, U, K), dtype=np.int8)
    pool = np.ones(U, dtype=bool)
    for _ in range(users_per_beam(U, M)):
        for m in range(M):
            if not pool.any():
                return Assignment(x)
            if K == M:
                gains = np.where(pool, h[m, :, m], -np.inf)
                u = int(np.argmax(gains))   # argmax returns the first maximum
                k = m
            else:
                gains = np.where(pool[:, None], h[m], -np.inf)
                u, k = np.unravel_index(int(np.argmax(gains)), gains.shape)
            x[m, u, k] = 1
            pool[u] = False
    return Assignment(x)


def random_assign(M, K, U, seed):
    """Random balanced assignment, deterministic in ``seed``.

    Users are dealt uniformly at random into the ``M * ceil(U / M)`` beam
    seats, so each beam serves at most ``ceil(U / M)`` users and the expected
    load is ``U / M``. The beam's subcarrier is ``k = m`` when ``K == M`` and
    uniform over the ``K`` subcarriers otherwise.
    """
    _check_capacity(M, K, U)
    rng = np.random.default_rng(seed)
    cap = users_per_beam(U, M)
    seats = np.repeat(np.arange(M), cap)
    beam_of = rng.permutation(seats)[:U]
    sub_of_beam = np.arange(M) if K == M else rng.integers(0, K, size=M)
    x = np.zeros((M, U, K), dtype=np.int8)
    x[beam_of, np.arange(U), sub_of_beam[beam_of]] = 1
    return Assignment(x)
