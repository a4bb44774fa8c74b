"""Radio propagation and link-rate primitives for the drone HetNet simulator.

All functions are pure and accept scalars or numpy arrays interchangeably.
Path losses are dB quantities; SINR computations always work on linear
power gains (``g = 10**(-pl_db/10)``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ChannelParams",
    "LinkGeometry",
    "LinkKind",
    "db_to_linear",
    "linear_to_db",
    "dbm_to_watts",
    "watts_to_dbm",
    "los_probability",
    "a2g_path_loss_db",
    "a2g_gain_linear",
    "mbs_path_gain_linear",
    "access_sinr",
    "backhaul_sinr",
    "link_rate_bps",
    "access_saturation_rate_bps",
    "draw_rayleigh_fading_db",
]


def db_to_linear(value_db):
    """Power ratio from dB."""
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value):
    """dB from a positive power ratio."""
    return 10.0 * np.log10(np.asarray(value, dtype=float))


def dbm_to_watts(value_dbm):
    """Watts from dBm."""
    return 10.0 ** ((np.asarray(value_dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(value_w):
    """dBm from watts."""
    return 10.0 * np.log10(np.asarray(value_w, dtype=float)) + 30.0


@dataclass(frozen=True)
class ChannelParams:
    """Propagation and radio constants shared by every link in a scenario.

    Defaults are the suburban/urban evaluation parameters: 2 GHz carrier,
    15 kHz subcarriers, -174 dBm/Hz noise floor, 130 dB self-interference
    cancellation, 23 dBm UE transmit power and a 10 W (40 dBm) drone power
    budget.
    """

    env_a: float = 4.88
    env_b: float = 0.43
    excess_los_db: float = 0.1
    excess_nlos_db: float = 21.0
    carrier_hz: float = 2.0e9
    light_speed_m_s: float = 3.0e8
    noise_psd_dbm_hz: float = -174.0
    sc_bandwidth_hz: float = 15e3
    si_cancellation_db: float = 130.0
    ue_tx_power_dbm: float = 23.0
    dbs_power_budget_w: float = 10.0
    mbs_pl_intercept_db: float = 136.8
    mbs_pl_slope_db_per_decade: float = 39.1
    mbs_rayleigh_db: float = -8.0

    def __post_init__(self):
        if self.env_a <= 0 or self.env_b <= 0:
            raise ValueError("environment constants a, b must be positive")
        if self.si_cancellation_db <= 0:
            raise ValueError("si_cancellation_db must be positive")
        for name in ("carrier_hz", "light_speed_m_s", "sc_bandwidth_hz",
                     "dbs_power_budget_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # dBm/dBm-like fields are unrestricted in sign but must be finite.
        for name in ("noise_psd_dbm_hz", "ue_tx_power_dbm", "excess_los_db",
                     "excess_nlos_db", "mbs_rayleigh_db"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def ue_tx_power_w(self) -> float:
        return float(dbm_to_watts(self.ue_tx_power_dbm))

    @property
    def noise_psd_w_hz(self) -> float:
        return float(dbm_to_watts(self.noise_psd_dbm_hz))

    @property
    def noise_per_sc_w(self) -> float:
        """Thermal noise power of a single subcarrier (W)."""
        return self.sc_bandwidth_hz * self.noise_psd_w_hz

    @property
    def si_cancellation_linear(self) -> float:
        return float(db_to_linear(self.si_cancellation_db))


@dataclass(frozen=True)
class LinkGeometry:
    """Geometry of one air/ground link; fields may be scalars or arrays.

    ``altitude_m`` is the height of the aerial terminal above the ground
    terminal, ``horizontal_dist_m`` the planar separation and ``dist_3d_m``
    the slant range.
    """

    horizontal_dist_m: object
    altitude_m: object
    dist_3d_m: object = field(default=None)

    def __post_init__(self):
        h = np.asarray(self.horizontal_dist_m, dtype=float)
        a = np.asarray(self.altitude_m, dtype=float)
        if self.dist_3d_m is None:
            object.__setattr__(self, "dist_3d_m", np.hypot(h, a))
        d = np.asarray(self.dist_3d_m, dtype=float)
        if not np.all(d > 0):
            raise ValueError("dist_3d_m must be strictly positive")
        if not np.allclose(d * d, h * h + a * a, rtol=1e-6):
            raise ValueError("dist_3d_m inconsistent with horizontal/altitude")

    @classmethod
    def from_horizontal_altitude(cls, horizontal_m, altitude_m):
        return cls(horizontal_m, altitude_m)

    @property
    def elevation_deg(self):
        """Elevation angle seen from the ground terminal, degrees."""
        return np.degrees(np.arctan2(np.asarray(self.altitude_m, dtype=float),
                                     np.asarray(self.horizontal_dist_m, dtype=float)))


class LinkKind(enum.Enum):
    TO_MBS = "to_mbs"
    TO_DBS = "to_dbs"


def los_probability(geom: LinkGeometry, params: ChannelParams):
    """Line-of-sight probability of an air/ground link.

    ``1 / (1 + a * exp(-b * (theta_deg - a)))`` with the elevation angle in
    degrees; the NLoS probability is the complement.
    """
    theta = geom.elevation_deg
    out = 1.0 / (1.0 + params.env_a * np.exp(-params.env_b * (theta - params.env_a)))
    return out if out.ndim else float(out)


def a2g_path_loss_db(geom: LinkGeometry, params: ChannelParams):
    """Mean air/ground path loss in dB.

    LoS-probability-weighted excess loss plus free-space loss over the
    slant range: ``psi_los*(zeta_los - zeta_nlos) + fspl + zeta_nlos``.
    """
    psi = los_probability(geom, params)
    d = np.asarray(geom.dist_3d_m, dtype=float)
    fspl = 20.0 * np.log10(4.0 * np.pi * params.carrier_hz * d / params.light_speed_m_s)
    out = np.asarray(psi) * (params.excess_los_db - params.excess_nlos_db) + fspl + params.excess_nlos_db
    return out if out.ndim else float(out)


def a2g_gain_linear(geom: LinkGeometry, params: ChannelParams):
    """Linear power gain of an air/ground link."""
    return db_to_linear(-a2g_path_loss_db(geom, params))


def mbs_path_gain_linear(dist_3d_m, params: ChannelParams, fading_db=None):
    """Linear power gain of a UE-to-macro-station link.

    Log-distance loss ``intercept + slope*log10(d_km)`` plus a fixed
    Rayleigh-fading margin (``params.mbs_rayleigh_db``, a gain, so -8 dB
    adds 8 dB of loss).  Pass ``fading_db`` to override the margin, e.g.
    with a random draw from :func:`draw_rayleigh_fading_db`.
    """
    d = np.asarray(dist_3d_m, dtype=float)
    if not np.all(d > 0):
        raise ValueError("distance must be positive")
    if fading_db is None:
        fading_db = params.mbs_rayleigh_db
    pl = params.mbs_pl_intercept_db + params.mbs_pl_slope_db_per_decade * np.log10(d / 1000.0)
    out = db_to_linear(-pl + np.asarray(fading_db, dtype=float))
    return out if out.ndim else float(out)


def draw_rayleigh_fading_db(rng: np.random.Generator, size=None):
    """Random Rayleigh power fading in dB (unit-mean exponential power)."""
    power = rng.exponential(1.0, size=size)
    return 10.0 * np.log10(power)


def _check_sc_count(sc_count):
    b = np.asarray(sc_count)
    if not np.all(b >= 1):
        raise ValueError("sc_count must be >= 1")
    return np.asarray(sc_count, dtype=float)


def access_sinr(link: LinkKind, gain_linear, sc_count, params: ChannelParams,
                dbs_psd_w_per_sc=None):
    """SINR of an uplink access link over ``sc_count`` subcarriers.

    Toward the macro station the only impairment is thermal noise over the
    allocated band.  Toward a full-duplex drone the drone's own backhaul
    transmission leaks in as self-interference; with the proportional power
    rule the leaked power is ``sc_count * psd / si_cancellation``.  Pass
    ``dbs_psd_w_per_sc=0`` for a half-duplex (interference-free) drone.
    """
    b = _check_sc_count(sc_count)
    p_u = params.ue_tx_power_w
    sigma2 = params.noise_per_sc_w * b
    if link is LinkKind.TO_MBS:
        out = p_u * np.asarray(gain_linear, dtype=float) / sigma2
    elif link is LinkKind.TO_DBS:
        if dbs_psd_w_per_sc is None:
            raise ValueError("dbs_psd_w_per_sc required for drone access links")
        alpha = b * dbs_psd_w_per_sc / params.si_cancellation_linear
        out = p_u * np.asarray(gain_linear, dtype=float) / (alpha + sigma2)
    else:  # pragma: no cover - exhaustive enum
        raise ValueError(f"unknown link kind {link!r}")
    return out if out.ndim else float(out)


def backhaul_sinr(dbs_psd_w_per_sc, sc_count, mbs_gain_of_ue, dbs_to_mbs_gain,
                  params: ChannelParams):
    """SINR of a drone-to-macro backhaul link over ``sc_count`` subcarriers.

    The backhaul reuses the served UE's access spectrum, so that UE's own
    uplink is received at the macro station as interference
    (``P_U * mbs_gain_of_ue``); pass 0 when the spectrum is not reused.
    Backhaul power follows the proportional rule ``p = sc_count * psd``.
    """
    b = _check_sc_count(sc_count)
    p = b * np.asarray(dbs_psd_w_per_sc, dtype=float)
    sigma2 = params.noise_per_sc_w * b
    interference = params.ue_tx_power_w * np.asarray(mbs_gain_of_ue, dtype=float)
    out = p * np.asarray(dbs_to_mbs_gain, dtype=float) / (interference + sigma2)
    return out if out.ndim else float(out)


def link_rate_bps(sc_count, sinr_access, params: ChannelParams, sinr_backhaul=None):
    """Achievable rate of one UE link in bit/s.

    ``sc_bandwidth * sc_count * log2(1 + sinr)``; a relayed link is capped
    by the slower of its access and backhaul stages, both using the same
    subcarrier count.  ``sc_count`` may be 0 (zero rate).
    """
    b = np.asarray(sc_count, dtype=float)
    if not np.all(b >= 0):
        raise ValueError("sc_count must be >= 0")
    rate = params.sc_bandwidth_hz * b * np.log2(1.0 + np.asarray(sinr_access, dtype=float))
    if sinr_backhaul is not None:
        bh = params.sc_bandwidth_hz * b * np.log2(1.0 + np.asarray(sinr_backhaul, dtype=float))
        rate = np.minimum(rate, bh)
    return rate if rate.ndim else float(rate)


def access_saturation_rate_bps(gain_linear, params: ChannelParams,
                               dbs_psd_w_per_sc=None):
    """Supremum of the access rate over the subcarrier count.

    The per-link rate ``tau0*b*log2(1 + C/(D*b))`` grows concavely in ``b``
    and converges to ``tau0*C/(D*ln 2)`` where ``C = P_U*g`` and ``D`` is
    the per-subcarrier impairment (noise plus, for full-duplex drones,
    leaked backhaul power).  Demands at or above this bound are unservable
    at any bandwidth.
    """
    c = params.ue_tx_power_w * np.asarray(gain_linear, dtype=float)
    d = params.noise_per_sc_w
    if dbs_psd_w_per_sc is not None:
        d = d + np.asarray(dbs_psd_w_per_sc, dtype=float) / params.si_cancellation_linear
    out = params.sc_bandwidth_hz * c / (d * math.log(2.0))
    return out if np.asarray(out).ndim else float(out)
