"""System model for the RSMA LEO downlink sharing spectrum with a GEO system.

Holds the domain types, the free-space channel model and the exact rate and
constraint expressions. Rates are in bits/s throughout this module.

Tensor conventions (numpy arrays):

- ``h[m, u, k]``   LEO beam ``m`` -> LEO user ``u`` on subcarrier ``k``
- ``ip[m, u, k]``  received GEO interference (g * q) at user ``u`` on ``k``
- ``f[m, k]``      LEO beam ``m`` -> GEO user on subcarrier ``k``
- ``x[m, u, k]``   binary beam/subcarrier assignment
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

SPEED_OF_LIGHT = 2.998e8


class ModelError(ValueError):
    """Invalid physical input (non-positive loss, distance, config field...)."""


class AssignmentError(ModelError):
    """Structural assignment error, e.g. a user without exactly one slot."""


def free_space_loss(distance, frequency):
    """Free-space propagation loss ``(4 pi D / (c / f))**2`` (linear)."""
    if not (distance > 0 and frequency > 0):
        raise ModelError(
            f"distance and frequency must be positive, got {distance!r}, {frequency!r}")
    wavelength = SPEED_OF_LIGHT / frequency
    return (4.0 * math.pi * distance / wavelength) ** 2


def channel_gain(link_budget, loss):
    """Linear channel gain ``G_T * G_R / loss``.

    Parameters
    ----------
    link_budget : tuple of float
        ``(G_T, G_R)`` antenna gains in linear units.
    loss : float or ndarray
        Propagation loss (linear), strictly positive.
    """
    g_t, g_r = link_budget
    loss = np.asarray(loss, dtype=float)
    if np.any(loss <= 0):
        raise ModelError("loss must be strictly positive")
    gain = g_t * g_r / loss
    return float(gain) if gain.ndim == 0 else gain


@dataclass(frozen=True)
class SystemConfig:
    num_beams: int = 5
    num_subcarriers: int = 5
    num_users: int = 10
    total_power: float = 50.0            # W
    interference_threshold: float = 2.0  # W
    min_rate: float = 1e6                # bits/s
    bandwidth: float = 10e6              # Hz per beam
    noise_variance: float = 0.1          # W, free parameter
    carrier_frequency: float = 19e9      # Hz (Ka band)
    # lumped link budget (free parameters): 100 dB + 90 dB put the nominal
    # LEO gain at ~16 dB, so SINRs against the 4 W GEO interference are
    # roughly 10-100 at default powers.
    tx_antenna_gain: float = 1e10
    rx_antenna_gain: float = 1e9
    distance: float = 600e3              # m, nominal LEO slant range

    def __post_init__(self):
        for name in ("num_beams", "num_subcarriers", "num_users"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ModelError(f"{name} must be a positive integer, got {value!r}")
        for name in ("total_power", "interference_threshold", "min_rate", "bandwidth",
                     "noise_variance", "carrier_frequency", "tx_antenna_gain",
                     "rx_antenna_gain", "distance"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ModelError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def shape(self):
        return self.num_beams, self.num_users, self.num_subcarriers

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return SystemConfig(**data)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ModelError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ChannelSet:
    """Channel gains for one scenario.

    ``ip`` is stored per ``(m, u, k)`` so that the ``g * q`` decomposition
    (GEO gain towards a user may depend on the serving configuration) and
    the flat per-``(u, k)`` value share one representation.
    """

    h: np.ndarray
    f: np.ndarray
    ip: np.ndarray
    g: np.ndarray | None = None
    q: np.ndarray | None = None

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.h.ndim != 3:
            raise ModelError("h must have shape (M, U, K)")
        M, U, K = self.h.shape
        ip = np.asarray(self.ip, dtype=float)
        if ip.shape == (U, K):
            ip = np.broadcast_to(ip, (M, U, K)).copy()
        self.ip = ip
        if self.f.shape != (M, K) or self.ip.shape != (M, U, K):
            raise ModelError(
                f"inconsistent channel shapes h{self.h.shape} f{self.f.shape} ip{self.ip.shape}")
        for name in ("h", "f", "ip"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ModelError(f"{name} must be finite and nonnegative")

    @classmethod
    def from_geo(cls, h, f, g, q):
        """Build from the GEO decomposition: ``ip[m, u, k] = g[m, u, k] * q[k]``."""
        g = np.asarray(g, dtype=float)
        q = np.asarray(q, dtype=float)
        return cls(h=h, f=f, ip=g * q[None, None, :], g=g, q=q)

    @property
    def shape(self):
        return self.h.shape

    def to_dict(self):
        out = {"h": self.h.tolist(), "f": self.f.tolist(), "I_p": self.ip.tolist()}
        if self.g is not None:
            out["g"] = self.g.tolist()
            out["q"] = self.q.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        if "g" in data and "q" in data:
            return cls.from_geo(data["h"], data["f"], data["g"], data["q"])
        if "I_p" not in data:
            raise ModelError("channels need either I_p or both g and q")
        return cls(h=data["h"], f=data["f"], ip=data["I_p"])

    def fingerprint(self):
        """Stable content hash (used to verify paired trials)."""
        import hashlib
        digest = hashlib.sha256()
        for arr in (self.h, self.f, self.ip):
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()


class Assignment:
    """Binary beam/subcarrier assignment ``x[m, u, k]``."""

    def __init__(self, x):
        x = np.asarray(x)
        if x.ndim != 3:
            raise AssignmentError("x must have shape (M, U, K)")
        if not np.all((x == 0) | (x == 1)):
            raise AssignmentError("assignment entries must be 0 or 1")
        self.x = x.astype(np.int8)

    @classmethod
    def empty(cls, M, U, K):
        return cls(np.zeros((M, U, K), dtype=np.int8))

    @property
    def shape(self):
        return self.x.shape

    def per_user(self):
        return self.x.sum(axis=(0, 2))

    def check(self):
        """Raise unless every user holds exactly one slot."""
        counts = self.per_user()
        bad = np.flatnonzero(counts != 1)
        if bad.size:
            raise AssignmentError(
                f"users {bad.tolist()} hold {counts[bad].tolist()} slots (need exactly 1)")

    def slot_of(self, u):
        m, k = np.nonzero(self.x[:, u, :])
        if m.size != 1:
            raise AssignmentError(f"user {u} is not assigned to exactly one slot")
        return int(m[0]), int(k[0])

    def users_in(self, m, k):
        return np.flatnonzero(self.x[m, :, k])

    def active_slots(self):
        """``(m, k)`` pairs with at least one user, in row-major order."""
        m, k = np.nonzero(self.x.any(axis=1))
        return list(zip(m.tolist(), k.tolist()))

    def __eq__(self, other):
        return isinstance(other, Assignment) and np.array_equal(self.x, other.x)

    def __repr__(self):
        return f"Assignment(shape={self.x.shape}, assigned={int(self.x.sum())})"


@dataclass
class AllocationState:
    p: np.ndarray      # (M, K) W
    eta0: np.ndarray   # (M, K)
    eta: np.ndarray    # (M, U, K)
    c: np.ndarray      # (M, U, K) bits/s

    @classmethod
    def zeros(cls, M, U, K):
        return cls(np.zeros((M, K)), np.zeros((M, K)), np.zeros((M, U, K)), np.zeros((M, U, K)))

    def copy(self):
        return AllocationState(self.p.copy(), self.eta0.copy(), self.eta.copy(), self.c.copy())


@dataclass
class RateReport:
    common_rate: np.ndarray    # (M, K)
    private_rate: np.ndarray   # (M, U, K)
    per_user_total: np.ndarray  # (U,)
    sum_rate: float
    slack: dict = field(default_factory=dict)

    def max_violation(self, config, constraints=("C2", "C3", "C4", "C5")):
        """Largest relative constraint violation over ``constraints`` (0 if feasible)."""
        scale = {
            "C1": config.min_rate,
            "C2": None,
            "C3": config.interference_threshold,
            "C4": 1.0,
            "C5": config.total_power,
        }
        worst = 0.0
        for name in constraints:
            s = self.slack[name]
            if name == "C2":
                ref = np.maximum(self.common_rate, config.min_rate)
                viol = np.max(-s / ref, initial=0.0)
            else:
                viol = np.max(-np.asarray(s) / scale[name], initial=0.0)
            worst = max(worst, float(viol))
        return worst


def _interference_sums(alloc, x):
    """Total private split per slot, ``sum_j x[m,j,k] eta[m,j,k]``."""
    return (x * alloc.eta).sum(axis=1)


def sinr_tensors(config, channels, alloc, assignment):
    """Common and private SINR for every ``(m, u, k)``.

    Entries for unassigned triples are zero.
    """
    x = assignment.x
    h = channels.h
    p = alloc.p[:, None, :]
    total = _interference_sums(alloc, x)[:, None, :]
    base = channels.ip + config.noise_variance
    rx = h * p
    common = rx * alloc.eta0[:, None, :] / (base + rx * total)
    private = rx * alloc.eta / (base + rx * (total - x * alloc.eta))
    return common * x, private * x


def common_sinr(config, channels, alloc, assignment, m, u, k):
    x = assignment.x
    h = channels.h[m, u, k]
    p = alloc.p[m, k]
    i0 = h * float(np.dot(x[m, :, k], alloc.eta[m, :, k])) * p
    return h * alloc.eta0[m, k] * p / (channels.ip[m, u, k] + i0 + config.noise_variance)


def common_rate(config, channels, alloc, assignment, m, k):
    """Common-stream rate of slot ``(m, k)``; 0 for an inactive slot."""
    users = assignment.users_in(m, k)
    if users.size == 0:
        return 0.0
    worst = min(common_sinr(config, channels, alloc, assignment, m, u, k) for u in users)
    return config.bandwidth * math.log2(1.0 + worst)


def private_rate(config, channels, alloc, assignment, m, u, k):
    x = assignment.x
    h = channels.h[m, u, k]
    p = alloc.p[m, k]
    others = float(np.dot(x[m, :, k], alloc.eta[m, :, k])) - x[m, u, k] * alloc.eta[m, u, k]
    sinr = h * alloc.eta[m, u, k] * p / (channels.ip[m, u, k] + h * others * p + config.noise_variance)
    return config.bandwidth * math.log2(1.0 + sinr)


def evaluate(config, channels, alloc, assignment):
    """Exact rates, sum rate and signed constraint slacks (positive = satisfied).

    Raises
    ------
    AssignmentError
        If the assignment does not give every user exactly one slot.
    """
    assignment.check()
    x = assignment.x
    W = config.bandwidth
    common, private = sinr_tensors(config, channels, alloc, assignment)
    active = x.any(axis=1)
    worst = np.where(x == 1, common, np.inf).min(axis=1)
    r_common = np.where(active, W * np.log2(1.0 + np.where(active, worst, 0.0)), 0.0)
    r_private = W * np.log2(1.0 + private) * x
    per_user = ((alloc.c + r_private) * x).sum(axis=(0, 2))
    sum_rate = float(per_user.sum())
    slack = {
        "C1": per_user - config.min_rate,
        "C2": r_common - (x * alloc.c).sum(axis=1),
        "C3": config.interference_threshold - channels.f * alloc.p,
        "C4": 1.0 - alloc.eta0 - (x * alloc.eta).sum(axis=1),
        "C5": config.total_power - float(alloc.p.sum()),
    }
    return RateReport(r_common, r_private, per_user, sum_rate, slack)
