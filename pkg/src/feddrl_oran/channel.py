"""Path loss x log-normal shadowing x Rayleigh fading, received power and SINR."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

FADING_MODELS = ("rayleigh", "none")
INTERFERENCE_MODES = ("overlap", "noise_limited")


@dataclass(frozen=True)
class ChannelConfig:
    pathloss_exponent: float = 3.0
    reference_distance: float = 1.0
    pathloss_intercept: float = 30.0
    shadowing_sigma: float = 8.0
    fading: str = "rayleigh"
    noise_power: float = -110.0
    interference_mode: str = "overlap"

    def __post_init__(self):
        if not self.pathloss_exponent > 0:
            raise ValueError(f"pathloss_exponent must be > 0, got {self.pathloss_exponent}")
        if not self.reference_distance > 0:
            raise ValueError(f"reference_distance must be > 0, got {self.reference_distance}")
        if not self.shadowing_sigma >= 0:
            raise ValueError(f"shadowing_sigma must be >= 0, got {self.shadowing_sigma}")
        if self.fading not in FADING_MODELS:
            raise ValueError(f"fading must be one of {FADING_MODELS}, got {self.fading!r}")
        if self.interference_mode not in INTERFERENCE_MODES:
            raise ValueError(
                f"interference_mode must be one of {INTERFERENCE_MODES}, got {self.interference_mode!r}"
            )


@dataclass(frozen=True)
class LinkRealization:
    pathloss: float | np.ndarray  # dB
    shadowing: float | np.ndarray  # dB
    fading_power: float | np.ndarray  # linear, unit mean


def db_to_lin(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


def path_loss_db(d, cfg: ChannelConfig):
    """Distance-dependent gain ``-xi - 10 phi log10(d / d0)`` in dB.

    Distances below the reference distance are clamped to it.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    d = np.maximum(d, cfg.reference_distance)
    out = -cfg.pathloss_intercept - 10.0 * cfg.pathloss_exponent * np.log10(d / cfg.reference_distance)
    return float(out) if out.ndim == 0 else out


def sample_link(rng: np.random.Generator, d, cfg: ChannelConfig) -> LinkRealization:
    d = np.asarray(d, dtype=float)
    shape = d.shape
    pl = path_loss_db(d, cfg)
    if cfg.shadowing_sigma > 0:
        shadow = rng.normal(0.0, cfg.shadowing_sigma, size=shape)
    else:
        shadow = np.zeros(shape)
    if cfg.fading == "rayleigh":
        fade = rng.exponential(1.0, size=shape)
        # exponential draws can be exactly 0 with vanishing probability
        fade = np.maximum(fade, np.finfo(float).tiny)
    else:
        fade = np.ones(shape)
    if not shape:
        return LinkRealization(float(pl), float(shadow), float(fade))
    return LinkRealization(pl, shadow, fade)


def received_power_dbm(ptx, link: LinkRealization):
    return ptx + link.pathloss + link.shadowing + lin_to_db(link.fading_power)


def sinr_db(signal: float, interferers: Iterable[float], noise: float) -> float:
    """SINR in dB with every term given in dBm and summed in milliwatts."""
    interference = sum(10.0 ** (x / 10.0) for x in interferers)
    if interference == 0.0:
        return float(signal - noise)
    return float(signal - 10.0 * np.log10(10.0 ** (noise / 10.0) + interference))
