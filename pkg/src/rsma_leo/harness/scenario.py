"""Random channel generation for Monte Carlo trials."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..model import ChannelSet, ModelError, channel_gain, free_space_loss


@dataclass(frozen=True)
class ScenarioParams:
    """Free parameters of the channel generator.

    Every user sits in the coverage of a home beam (``u mod M``); gains from
    the other beams are attenuated by ``offbeam_loss_db``.
    """

    distance_spread: float = 0.05       # distances uniform in D * [1 - s, 1 + s]
    jitter_db: float = 3.0              # log-uniform gain jitter in [-j, +j] dB
    offbeam_loss_db: float = 15.0
    f_min: float = 0.05                 # LEO -> GEO-user gain range, log-uniform
    f_max: float = 1.0
    geo_interference: float = 4.0       # W per user and subcarrier

    def __post_init__(self):
        if not 0 <= self.distance_spread < 1:
            raise ModelError("distance_spread must lie in [0, 1)")
        if self.jitter_db < 0 or self.offbeam_loss_db < 0:
            raise ModelError("jitter_db and offbeam_loss_db must be nonnegative")
        if not 0 < self.f_min <= self.f_max:
            raise ModelError("need 0 < f_min <= f_max")
        if self.geo_interference < 0:
            raise ModelError("geo_interference must be nonnegative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ModelError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**data)


def generate_scenario(config, seed, params=None):
    """Channels for ``(config, seed)``; bit-identical for identical inputs."""
    params = params or ScenarioParams()
    M, U, K = config.shape
    rng = np.random.default_rng(seed)
    s = params.distance_spread
    distance = config.distance * rng.uniform(1 - s, 1 + s, size=(M, U))
    loss = free_space_loss(1.0, config.carrier_frequency) * distance ** 2
    base = channel_gain((config.tx_antenna_gain, config.rx_antenna_gain), loss)
    jitter_db = rng.uniform(-params.jitter_db, params.jitter_db, size=(M, U, K))
    home = np.arange(U) % M
    offbeam = np.where(np.arange(M)[:, None] == home[None, :], 0.0, params.offbeam_loss_db)
    h = base[:, :, None] * 10.0 ** ((jitter_db - offbeam[:, :, None]) / 10.0)
    f = np.exp(rng.uniform(np.log(params.f_min), np.log(params.f_max), size=(M, K)))
    ip = np.full((U, K), params.geo_interference)
    return ChannelSet(h=h, f=f, ip=ip)
