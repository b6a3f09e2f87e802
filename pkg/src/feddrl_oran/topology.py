"""Physical layout of edge clouds, access points and mobile transmitters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class TopologyConfig:
    num_edge_clouds: int = 1
    aps_per_ec: int = 4
    transmitters: int = 12
    coverage_radius: float = 100.0
    speed: float = 3.0 / 3.6  # 3 km/h in m/s
    step_duration: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("num_edge_clouds", "aps_per_ec", "transmitters"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.coverage_radius > 0:
            raise ValueError(f"coverage_radius must be > 0, got {self.coverage_radius}")
        if not self.speed >= 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        if not self.step_duration > 0:
            raise ValueError(f"step_duration must be > 0, got {self.step_duration}")

    @property
    def num_aps(self) -> int:
        return self.num_edge_clouds * self.aps_per_ec


@dataclass(frozen=True)
class Topology:
    ap_positions: np.ndarray  # (U, 2)
    tx_positions: np.ndarray  # (N, 2)
    association: np.ndarray  # (N,) transmitter -> AP
    ec_of_ap: np.ndarray  # (U,) AP -> edge cloud
    rng: np.random.Generator = field(repr=False, compare=False)

    @property
    def num_transmitters(self) -> int:
        return len(self.tx_positions)

    @property
    def num_aps(self) -> int:
        return len(self.ap_positions)

    def transmitters_of(self, ap: int) -> np.ndarray:
        """Indices of the transmitters served by ``ap`` (the set N_u)."""
        return np.flatnonzero(self.association == ap)

    def aps_of(self, ec: int) -> np.ndarray:
        return np.flatnonzero(self.ec_of_ap == ec)

    def serving_distance(self) -> np.ndarray:
        ap = self.ap_positions[self.association]
        return np.linalg.norm(self.tx_positions - ap, axis=1)

    def distances(self) -> np.ndarray:
        """(N, U) matrix of transmitter-to-AP distances."""
        diff = self.tx_positions[:, None, :] - self.ap_positions[None, :, :]
        return np.linalg.norm(diff, axis=2)


def _grid_positions(count: int, spacing: float) -> np.ndarray:
    cols = math.ceil(math.sqrt(count))
    idx = np.arange(count)
    return np.column_stack([(idx % cols) * spacing, (idx // cols) * spacing]).astype(float)


def _uniform_in_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = rng.uniform(0.0, 2 * np.pi, n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def build_topology(cfg: TopologyConfig) -> Topology:
    """Place APs on a square grid and drop transmitters uniformly in their disks.

    Transmitters are split as evenly as possible across APs (the first
    ``N mod U`` APs take one extra) and never hand over.
    """
    n_ap = cfg.num_aps
    n_tx = cfg.transmitters
    if n_ap < 1 or n_tx < 1:
        raise ValueError("topology needs at least one AP and one transmitter")

    rng = np.random.default_rng(cfg.rng_seed)
    aps = _grid_positions(n_ap, 2 * cfg.coverage_radius)
    ec_of_ap = np.repeat(np.arange(cfg.num_edge_clouds), cfg.aps_per_ec)

    counts = np.full(n_ap, n_tx // n_ap)
    counts[: n_tx % n_ap] += 1
    association = np.repeat(np.arange(n_ap), counts)
    offsets = _uniform_in_disk(rng, n_tx, cfg.coverage_radius)
    tx = aps[association] + offsets
    return Topology(aps, tx, association, ec_of_ap, rng)


def _reflect_into_disk(rel: np.ndarray, radius: float) -> np.ndarray:
    """Mirror points outside the disk back inside along their radial line."""
    dist = np.linalg.norm(rel, axis=1)
    out = dist > radius
    if not np.any(out):
        return rel
    rel = rel.copy()
    reflected = 2 * radius - dist[out]
    rel[out] *= (reflected / dist[out])[:, None]
    # only reachable when a single step exceeds the radius
    over = np.linalg.norm(rel, axis=1) > radius
    if np.any(over):
        rel[over] *= (radius / np.linalg.norm(rel[over], axis=1))[:, None]
    return rel


def advance_mobility(topo: Topology, cfg: TopologyConfig) -> Topology:
    """Move every transmitter ``speed * step_duration`` metres in a random direction."""
    step = cfg.speed * cfg.step_duration
    if step == 0.0:
        return topo
    theta = topo.rng.uniform(0.0, 2 * np.pi, topo.num_transmitters)
    moved = topo.tx_positions + step * np.column_stack([np.cos(theta), np.sin(theta)])
    anchor = topo.ap_positions[topo.association]
    rel = _reflect_into_disk(moved - anchor, cfg.coverage_radius)
    return replace(topo, tx_positions=anchor + rel)
