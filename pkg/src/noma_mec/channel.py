"""Single-cell scenario and per-RB channel gain generation.

Gain of user u on RB r, in dB: ``-PL(d_u) + X_u + F_u^r`` with COST231-Hata
path loss, lognormal shadowing ``X_u`` and i.i.d. Rayleigh power fading
``F_u^r`` (exponential(1) in linear scale).
"""
from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass

import numpy as np

from .model import SystemConfig

PURPOSES = ("positions", "shadowing", "fading", "tasks")


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    """Independent generator per (seed, purpose) pair."""
    tag = zlib.crc32(purpose.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tag]))


@dataclass(frozen=True)
class ChannelParams:
    carrier_mhz: float = 2000.0
    bs_height: float = 15.0
    ms_height: float = 1.5
    city_correction_db: float = 0.0  # C_m: 0 medium city, 3 metropolitan
    min_distance: float = 10.0
    shadowing_std_db: float = 8.0
    shadowing: bool = True
    fading: bool = True


@dataclass(frozen=True)
class CellScenario:
    user_positions: np.ndarray  # (U, 2) metres, eNB at origin
    seed: int

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(self.user_positions[:, 0], self.user_positions[:, 1])


@dataclass(frozen=True)
class ChannelMatrix:
    gains: np.ndarray  # (U, M_f) linear power gains
    averages: np.ndarray  # (U,) mean over RBs

    @classmethod
    def from_gains(cls, gains) -> "ChannelMatrix":
        g = np.array(gains, dtype=float)
        if g.ndim != 2 or not np.all(g > 0) or not np.all(np.isfinite(g)):
            raise ValueError("channel gains must be a finite positive 2-D array")
        g.setflags(write=False)
        avg = g.mean(axis=1)
        avg.setflags(write=False)
        return cls(gains=g, averages=avg)

    @property
    def gains_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.gains)


def generate_scenario(config: SystemConfig, seed: int) -> CellScenario:
    rng = rng_for(seed, "positions")
    U = config.num_users
    # polar sampling with sqrt radial transform is uniform over the disk
    radius = config.cell_radius * np.sqrt(rng.random(U))
    angle = 2.0 * np.pi * rng.random(U)
    pos = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    pos.setflags(write=False)
    return CellScenario(user_positions=pos, seed=int(seed))


def hata_mobile_correction(carrier_mhz: float, ms_height: float) -> float:
    """a(h_m) for small/medium cities."""
    lf = np.log10(carrier_mhz)
    return (1.1 * lf - 0.7) * ms_height - (1.56 * lf - 0.8)


def path_loss_db(distance, params: ChannelParams = ChannelParams()):
    """COST231-Hata path loss in dB; distances below ``min_distance`` are clamped."""
    d = np.maximum(np.asarray(distance, dtype=float), params.min_distance)
    lf = np.log10(params.carrier_mhz)
    lhb = np.log10(params.bs_height)
    pl = (
        46.3
        + 33.9 * lf
        - 13.82 * lhb
        - hata_mobile_correction(params.carrier_mhz, params.ms_height)
        + (44.9 - 6.55 * lhb) * np.log10(d / 1000.0)
        + params.city_correction_db
    )
    return float(pl) if np.ndim(pl) == 0 else pl


def distance_clamped(distance, params: ChannelParams = ChannelParams()):
    return np.asarray(distance, dtype=float) < params.min_distance


def channel_gains(
    scenario: CellScenario,
    config: SystemConfig,
    seed: int,
    params: ChannelParams = ChannelParams(),
) -> ChannelMatrix:
    U, M = config.num_users, config.num_freq_rbs
    if scenario.user_positions.shape[0] != U:
        raise ValueError(f"scenario has {scenario.user_positions.shape[0]} users, config {U}")
    gain_db = -np.asarray(path_loss_db(scenario.distances, params), dtype=float).reshape(U)
    g = np.repeat(10.0 ** (gain_db / 10.0)[:, None], M, axis=1)
    if params.shadowing:
        shadow = rng_for(seed, "shadowing").normal(0.0, params.shadowing_std_db, size=U)
        g = g * 10.0 ** (shadow / 10.0)[:, None]
    if params.fading:
        # drawn RB-major so the first r columns do not depend on M_f
        fade = rng_for(seed, "fading").exponential(1.0, size=(M, U)).T
        g = g * np.maximum(fade, np.finfo(float).tiny)
    return ChannelMatrix.from_gains(g)


def channels_to_csv(channels: ChannelMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user", "rb", "gain_db"])
    db = channels.gains_db
    for u in range(db.shape[0]):
        for r in range(db.shape[1]):
            w.writerow([u, r, repr(float(db[u, r]))])
    return buf.getvalue()


def channels_from_csv(text: str) -> ChannelMatrix:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty channel CSV")
    U = 1 + max(int(row["user"]) for row in rows)
    M = 1 + max(int(row["rb"]) for row in rows)
    db = np.full((U, M), np.nan)
    for row in rows:
        db[int(row["user"]), int(row["rb"])] = float(row["gain_db"])
    if np.isnan(db).any():
        raise ValueError("channel CSV does not cover every (user, rb) pair")
    return ChannelMatrix.from_gains(10.0 ** (db / 10.0))


def scenario_to_csv(scenario: CellScenario) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user", "x", "y", "seed"])
    for u, (x, y) in enumerate(scenario.user_positions):
        w.writerow([u, repr(float(x)), repr(float(y)), scenario.seed])
    return buf.getvalue()


def scenario_from_csv(text: str) -> CellScenario:
    rows = list(csv.DictReader(io.StringIO(text)))
    rows.sort(key=lambda row: int(row["user"]))
    pos = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    pos.setflags(write=False)
    return CellScenario(user_positions=pos, seed=int(rows[0]["seed"]) if rows else 0)
