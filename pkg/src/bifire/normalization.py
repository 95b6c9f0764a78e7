"""Affine unit scaling of the three state variables."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Normalization:
    """``T -> (T - T_a)/(T_scale - T_a)``, ``S_e -> S_e/S_e_scale``, ``S_x -> S_x/S_x0``."""

    T_a: float
    T_scale: float
    S_e_scale: float
    S_x0: float = 1.0

    def __post_init__(self):
        if not self.T_scale > self.T_a:
            raise ConfigError(f"T_scale ({self.T_scale}) must exceed T_a ({self.T_a})")
        if not (self.S_e_scale > 0 and self.S_x0 > 0):
            raise ConfigError("fuel scales must be positive")

    def to_dict(self):
        return asdict(self)

    def forward(self, T, S_e, S_x):
        return ((np.asarray(T) - self.T_a) / (self.T_scale - self.T_a),
                np.asarray(S_e) / self.S_e_scale,
                np.asarray(S_x) / self.S_x0)

    def inverse(self, T, S_e, S_x):
        return (self.T_a + np.asarray(T) * (self.T_scale - self.T_a),
                np.asarray(S_e) * self.S_e_scale,
                np.asarray(S_x) * self.S_x0)


def normalize(v, norm):
    """Scale ``v`` into ``[0, 1]``; out-of-range entries are clipped and logged."""
    out = []
    for name, f in zip(("T", "S_e", "S_x"), norm.forward(*v.fields)):
        n_high = int(np.count_nonzero(f > 1.0))
        if n_high:
            log.warning("normalize: %d %s entries above scale clamped to 1", n_high, name)
        out.append(np.clip(f, 0.0, 1.0))
    return v.with_fields(*out)


def denormalize(v, norm):
    return v.with_fields(*norm.inverse(*v.fields))
