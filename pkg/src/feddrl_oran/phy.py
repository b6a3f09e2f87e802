"""MCS table, PRB allocation and the per-step PHY outcome quantities."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

NUM_MCS = 29
SINR_MARGIN_DB = (-6.7, 11.7)
POWER_LEVELS_DBM = (-8.4, -2.3, 0.0, 4.0, 7.0, 9.0)
PRB_BANDWIDTH_HZ = 180e3

MCS_TABLE_SHA256 = "6978ac207436cebe00d69583e85c0c88173aa1b5299f7e4116b4bf2294d973d8"
# TS 38.214 table 1 dips by 0.0039 at the 16QAM -> 64QAM switch; anything
# larger is a corrupt file
_SE_DIP_TOLERANCE = 0.01


class McsTableError(ValueError):
    pass


@dataclass(frozen=True)
class McsTable:
    spectral_efficiency: np.ndarray  # (29,), position m-1
    sinr_threshold: np.ndarray  # (29,) dB

    def __len__(self) -> int:
        return len(self.spectral_efficiency)

    def se(self, m):
        return self.spectral_efficiency[np.asarray(m) - 1]

    def threshold(self, m):
        return self.sinr_threshold[np.asarray(m) - 1]


@dataclass(frozen=True)
class PowerSet:
    levels: tuple = POWER_LEVELS_DBM

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("power levels must be strictly increasing")

    def __len__(self) -> int:
        return len(self.levels)

    def dbm(self, k):
        """Level in dBm for the 1-based index ``k``."""
        return np.asarray(self.levels)[np.asarray(k) - 1]

    @property
    def p_max(self) -> float:
        return self.levels[-1]

    @property
    def p_min(self) -> float:
        return self.levels[0]


@dataclass(frozen=True)
class PrbAllocation:
    prbs: int = 4
    prb_bandwidth: float = PRB_BANDWIDTH_HZ
    max_prbs: int = 8
    prb_offset: int = 0

    def __post_init__(self):
        if not 1 <= self.prbs <= self.max_prbs:
            raise ValueError(f"need 1 <= prbs <= max_prbs, got prbs={self.prbs}, max_prbs={self.max_prbs}")
        if self.prb_bandwidth <= 0:
            raise ValueError("prb_bandwidth must be > 0")

    @property
    def bandwidth(self) -> float:
        return self.prbs * self.prb_bandwidth


def sinr_thresholds(n: int = NUM_MCS, margin=SINR_MARGIN_DB) -> np.ndarray:
    lo, hi = margin
    return lo + np.arange(n) * (hi - lo) / (n - 1)


def _parse_rows(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(io.StringIO("\n".join(lines)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["index", "spectral_efficiency"]:
        raise McsTableError(f"bad MCS table header: {header}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 2:
            raise McsTableError(f"row {lineno}: expected 2 fields, got {len(row)}")
        try:
            rows.append((int(row[0]), float(row[1])))
        except ValueError as exc:
            raise McsTableError(f"row {lineno}: {exc}") from None
    if len(rows) != NUM_MCS:
        raise McsTableError(f"expected {NUM_MCS} MCS rows, got {len(rows)}")
    idx = [r[0] for r in rows]
    if idx != list(range(1, NUM_MCS + 1)):
        raise McsTableError("MCS indices must run 1..29 in order")
    return np.array([r[1] for r in rows])


def load_mcs_table(source: str | Path | None = None, verify_checksum: bool = True) -> McsTable:
    """Load spectral efficiencies and attach interpolated SINR thresholds.

    With ``source=None`` the bundled 3GPP table is used and its checksum is
    verified. A path or a raw CSV string may be given instead.
    """
    if source is None:
        raw = resources.files("feddrl_oran").joinpath("data/mcs_table.csv").read_bytes()
        if verify_checksum and hashlib.sha256(raw).hexdigest() != MCS_TABLE_SHA256:
            raise McsTableError("bundled MCS table failed checksum")
        text = raw.decode()
    elif isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source

    se = _parse_rows(text)
    if np.any(se <= 0):
        raise McsTableError("spectral efficiencies must be positive")
    if np.any(np.diff(se) < -_SE_DIP_TOLERANCE) or se[-1] <= se[0]:
        raise McsTableError("spectral efficiency must increase with the MCS index")
    return McsTable(se, sinr_thresholds(len(se)))


def attempt_outcome(sinr, m, table: McsTable):
    """1 where the SINR reaches the MCS threshold (boundary inclusive), else 0."""
    out = (np.asarray(sinr) >= table.threshold(m)).astype(int)
    return int(out) if out.ndim == 0 else out


def data_bits(m, alloc: PrbAllocation, tau: float, table: McsTable):
    return alloc.bandwidth * table.se(m) * tau


def throughput(m, success, alloc: PrbAllocation, table: McsTable):
    """Delivered bit rate; zero when the attempt failed."""
    return np.asarray(success) * alloc.bandwidth * table.se(m)


def step_energy(p_dbm, tau: float):
    """Transmit energy for one step in millijoules."""
    return np.power(10.0, np.asarray(p_dbm) / 10.0) * tau


def energy_efficiency(bits, p_dbm, tau: float):
    """Bits per millijoule of transmit energy."""
    return np.asarray(bits) / step_energy(p_dbm, tau)
