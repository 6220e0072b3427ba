"""Scenario generation for the desk-scale experiments: a seven-cell
wrapped-around hexagonal layout for power control and beamforming, and
fixed-pathloss links for the energy-efficiency runs.

Unit conventions: all internal arithmetic is in linear watts; dBm / dB
conversions happen only here at the configuration boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from .beamforming import MimoNetwork
from .energy import BroadcastNetwork, SingleLink
from .exceptions import ConfigError
from .power import SisoNetwork

__all__ = [
    "ScenarioKind",
    "ScenarioConfig",
    "dbm_to_watts",
    "watts_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "pathloss_db",
    "hex_centers",
    "wrap_displacements",
    "wrap_distance",
    "sample_hex_point",
    "generate_siso_hex",
    "generate_mimo_hex",
    "generate_ee_scenarios",
    "parse_config_file",
]

#: users closer to a base station than this are pushed out to avoid the
#: pathloss singularity at zero distance
MIN_DISTANCE_KM = 0.01

#: pathloss model constants (distance in km, result in dB)
_PL_OFFSET_DB = 128.1
_PL_SLOPE_DB = 37.6


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError("power must be positive")
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(linear: float) -> float:
    if linear <= 0:
        raise ValueError("value must be positive")
    return 10.0 * math.log10(linear)


def pathloss_db(d_km: float, shadow_db: float = 0.0) -> float:
    """Distance-dependent pathloss 128.1 + 37.6 log10(d) plus a
    shadowing term, in dB."""
    if d_km <= 0:
        raise ValueError("distance must be positive")
    return _PL_OFFSET_DB + _PL_SLOPE_DB * math.log10(d_km) + shadow_db


class ScenarioKind(Enum):
    SISO_HEX = "siso-hex"
    MIMO_HEX = "mimo-hex"
    EE_SINGLE = "ee-single"
    EE_BROADCAST = "ee-broadcast"
    TEXTBOOK = "textbook"


@dataclass
class ScenarioConfig:
    """Desk-scale experiment description.

    The seed is mandatory: every random draw goes through one stream
    derived from it, so a (config, seed) pair pins all outputs.
    """

    kind: ScenarioKind = ScenarioKind.SISO_HEX
    seed: int = 0
    cells: int = 7
    users_per_cell: int = 1
    bs_antennas: int = 2
    ue_antennas: int = 2
    bands: int = 1
    isd_km: float = 0.8
    shadowing_db_std: float = 8.0
    bandwidth_hz: float = 10e6
    p_max_dbm: float = 43.0
    noise_dbm: float = -100.0
    p_on_dbm: float = 5.0
    ee_pathloss_db: float = 120.0
    ee_receivers: int = 3
    algorithm: str = "closed"
    tol: float = 1e-6
    max_iters: int = 10000

    def __post_init__(self) -> None:
        if isinstance(self.kind, str):
            try:
                self.kind = ScenarioKind(self.kind)
            except ValueError:
                names = ", ".join(k.value for k in ScenarioKind)
                raise ConfigError(
                    f"scenario.kind: unknown kind {self.kind!r} (expected one of {names})"
                ) from None
        for name in ("cells", "users_per_cell", "bs_antennas", "ue_antennas",
                     "bands", "max_iters", "ee_receivers"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be a positive integer")
            setattr(self, name, int(getattr(self, name)))
        for name in ("isd_km", "bandwidth_hz", "tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.shadowing_db_std < 0:
            raise ConfigError("shadowing_db_std must be nonnegative")
        if self.cells != 7 and self.kind in (ScenarioKind.SISO_HEX,
                                             ScenarioKind.MIMO_HEX):
            raise ConfigError("the wrapped-around hexagonal layout uses 7 cells")
        self.seed = int(self.seed)

    @property
    def p_max_watts(self) -> float:
        return dbm_to_watts(self.p_max_dbm)

    @property
    def noise_watts(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def p_on_watts(self) -> float:
        return dbm_to_watts(self.p_on_dbm)


#: dotted config-file keys -> ScenarioConfig attributes
_CONFIG_KEYS = {
    "scenario.kind": ("kind", str),
    "scenario.cells": ("cells", int),
    "scenario.users_per_cell": ("users_per_cell", int),
    "scenario.bs_antennas": ("bs_antennas", int),
    "scenario.ue_antennas": ("ue_antennas", int),
    "scenario.bands": ("bands", int),
    "scenario.ee_receivers": ("ee_receivers", int),
    "channel.isd_km": ("isd_km", float),
    "channel.shadowing_db_std": ("shadowing_db_std", float),
    "channel.bandwidth_hz": ("bandwidth_hz", float),
    "channel.ee_pathloss_db": ("ee_pathloss_db", float),
    "power.p_max_dbm": ("p_max_dbm", float),
    "power.noise_dbm": ("noise_dbm", float),
    "power.p_on_dbm": ("p_on_dbm", float),
    "run.seed": ("seed", int),
    "run.algorithm": ("algorithm", str),
    "run.tol": ("tol", float),
    "run.max_iters": ("max_iters", int),
}


def parse_config_file(path: str | Path) -> ScenarioConfig:
    """Read a flat ``key = value`` configuration with dotted keys.

    Blank lines and ``#`` comments are ignored; unknown keys are errors.
    """
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        attr, cast = _CONFIG_KEYS[key]
        try:
            values[attr] = cast(text.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return ScenarioConfig(**values)


# ---------------------------------------------------------------------------
# seven-cell wrapped-around geometry


def hex_centers(isd_km: float) -> np.ndarray:
    """Centers of the seven-cell cluster: one at the origin, six at
    inter-site distance around it."""
    centers = [(0.0, 0.0)]
    for k in range(6):
        ang = math.pi / 3.0 * k
        centers.append((isd_km * math.cos(ang), isd_km * math.sin(ang)))
    return np.array(centers)


def wrap_displacements(isd_km: float) -> np.ndarray:
    """The seven mirror displacements of the cluster torus: zero plus
    the six nearest translations of the seven-cell cluster lattice."""
    t1 = isd_km * np.array([2.5, math.sqrt(3.0) / 2.0])
    t2 = isd_km * np.array([0.5, 3.0 * math.sqrt(3.0) / 2.0])
    return np.array([
        (0.0, 0.0), tuple(t1), tuple(-t1), tuple(t2), tuple(-t2),
        tuple(t1 - t2), tuple(t2 - t1),
    ])


def wrap_distance(a: np.ndarray, b: np.ndarray, isd_km: float) -> float:
    """Torus distance: minimum over the seven mirror images of b."""
    mirrors = b + wrap_displacements(isd_km)
    return float(np.min(np.linalg.norm(mirrors - a, axis=1)))


def sample_hex_point(rng: np.random.Generator, center: np.ndarray,
                     isd_km: float) -> np.ndarray:
    """Uniform point in the hexagonal cell around ``center`` (inradius
    isd/2, flat edges facing the six neighbors), by rejection from the
    bounding box."""
    r_in = 0.5 * isd_km
    r_out = isd_km / math.sqrt(3.0)
    half = math.sqrt(3.0) / 2.0
    while True:
        x = rng.uniform(-r_in, r_in)
        y = rng.uniform(-r_out, r_out)
        if (abs(x) <= r_in and abs(0.5 * x + half * y) <= r_in
                and abs(-0.5 * x + half * y) <= r_in):
            return center + np.array([x, y])


def _link_gain(d_km: float, shadow_db: float) -> float:
    return db_to_linear(-pathloss_db(max(d_km, MIN_DISTANCE_KM), shadow_db))


def generate_siso_hex(config: ScenarioConfig,
                      rng: np.random.Generator) -> SisoNetwork:
    """Seven-cell single-antenna downlink: one user per cell and band,
    uniform in its hexagon, pathloss plus lognormal shadowing, no
    small-scale fading, wrap-around distances."""
    centers = hex_centers(config.isd_km)
    B, T = config.cells, config.bands
    gains = np.empty((T, B, B))
    for t in range(T):
        users = np.array([sample_hex_point(rng, centers[i], config.isd_km)
                          for i in range(B)])
        shadows = rng.normal(0.0, config.shadowing_db_std, size=(B, B))
        for i in range(B):
            for j in range(B):
                d = wrap_distance(users[i], centers[j], config.isd_km)
                gains[t, i, j] = _link_gain(d, shadows[i, j])
    return SisoNetwork(
        gains=gains[0] if T == 1 else gains,
        weights=np.ones(B),
        noise=config.noise_watts,
        p_max=config.p_max_watts,
    )


def generate_mimo_hex(config: ScenarioConfig,
                      rng: np.random.Generator) -> MimoNetwork:
    """Seven-cell MIMO downlink: ``users_per_cell`` users uniform per
    hexagon, one stream each, i.i.d. Rayleigh entries scaled by the
    pathloss-plus-shadowing amplitude."""
    centers = hex_centers(config.isd_km)
    B, S = config.cells, config.users_per_cell
    N, M = config.ue_antennas, config.bs_antennas
    if S > M:
        raise ConfigError("users_per_cell cannot exceed bs_antennas")
    users = np.array([[sample_hex_point(rng, centers[i], config.isd_km)
                       for _ in range(S)] for i in range(B)])
    H = np.empty((B, S, B, N, M), dtype=complex)
    for i in range(B):
        for m in range(S):
            for j in range(B):
                d = wrap_distance(users[i, m], centers[j], config.isd_km)
                shadow = rng.normal(0.0, config.shadowing_db_std)
                amp = math.sqrt(_link_gain(d, shadow))
                fading = (rng.standard_normal((N, M))
                          + 1j * rng.standard_normal((N, M))) / math.sqrt(2.0)
                H[i, m, j] = amp * fading
    return MimoNetwork(
        channels=H,
        weights=np.ones((B, S)),
        noise=config.noise_watts,
        p_max=config.p_max_watts,
    )


def generate_ee_scenarios(config: ScenarioConfig, rng: np.random.Generator):
    """Energy-efficiency scenarios: an isolated fixed-pathloss link, or
    a small broadcast network with Rayleigh fading on every antenna
    pair at the same pathloss."""
    gain = db_to_linear(-config.ee_pathloss_db)
    if config.kind is ScenarioKind.EE_SINGLE:
        return SingleLink(gain=gain, noise=config.noise_watts,
                          p_max=config.p_max_watts, p_on=config.p_on_watts)
    if config.kind is not ScenarioKind.EE_BROADCAST:
        raise ConfigError(f"not an energy-efficiency scenario: {config.kind.value}")
    M_rx = config.ee_receivers
    N, M = config.ue_antennas, config.bs_antennas
    amp = math.sqrt(gain)
    H = amp * (rng.standard_normal((M_rx, N, M))
               + 1j * rng.standard_normal((M_rx, N, M))) / math.sqrt(2.0)
    return BroadcastNetwork(channels=H, noise=config.noise_watts,
                            p_max=config.p_max_watts, p_on=config.p_on_watts)
