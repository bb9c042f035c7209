"""Log-domain SCA lower bound of the rate function ``log2(1 + gamma)``.

Around an operating SINR ``gamma0`` the bound

    log2(1 + gamma) >= tau * log2(gamma) + omega,
    tau = gamma0 / (1 + gamma0),  omega = log2(1 + gamma0) - tau * log2(gamma0)

holds for every ``gamma > 0`` and is tight at ``gamma = gamma0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SurrogatePoint:
    gamma: float
    tau: float
    omega: float


def surrogate_coeffs(gamma):
    """Expansion coefficients at SINR ``gamma``; a dead link gives ``(0, 0, 0)``."""
    if not gamma >= 0:
        raise ValueError(f"SINR must be nonnegative, got {gamma!r}")
    if gamma == 0:
        return SurrogatePoint(0.0, 0.0, 0.0)
    gamma = float(gamma)
    tau = gamma / (1.0 + gamma)
    omega = math.log2(1.0 + gamma) - tau * math.log2(gamma)
    return SurrogatePoint(gamma, tau, omega)


def surrogate_rate(point, gamma_actual, bandwidth):
    """Surrogate rate ``W * (tau * log2(gamma) + omega)`` in bits/s.

    Returns ``-inf`` when ``gamma_actual == 0`` and ``tau > 0``: the bound
    diverges there and callers have to guard against it.
    """
    if point.tau == 0.0:
        return bandwidth * point.omega
    if gamma_actual <= 0:
        return -math.inf
    return bandwidth * (point.tau * math.log2(gamma_actual) + point.omega)


def coeffs_array(gamma):
    """Vectorised :func:`surrogate_coeffs`: returns ``(tau, omega)`` arrays."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SINR must be nonnegative")
    live = gamma > 0
    safe = np.where(live, gamma, 1.0)
    tau = np.where(live, safe / (1.0 + safe), 0.0)
    omega = np.where(live, np.log2(1.0 + safe) - tau * np.log2(safe), 0.0)
    return tau, omega
