"""Uplink channel gains: free-space loss, antenna gains and the Bessel beam pattern."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import SatelliteState, ranges_and_angles

LIGHT_SPEED = 2.99792458e8


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def dbm_per_hz_to_w_per_hz(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Link-budget constants.  Gains in dBi, noise density in dBm/Hz."""

    carrier_frequency: float = 27.5e9
    aperture_radius: float = 0.25
    gain_leo_dbi: float = 42.0
    gain_sue_dbi: float = 10.0
    gain_bs_dbi: float = 32.8
    noise_dbm_per_hz: float = -174.0
    beam_exponent: int = 2
    light_speed: float = field(default=LIGHT_SPEED)

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ValueError("carrier_frequency must be positive")
        if self.aperture_radius <= 0:
            raise ValueError("aperture_radius must be positive")
        if self.beam_exponent not in (1, 2):
            raise ValueError("beam_exponent must be 1 or 2")

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi * self.carrier_frequency / self.light_speed

    @property
    def noise_density(self) -> float:
        """Noise power spectral density in W/Hz."""
        return float(dbm_per_hz_to_w_per_hz(self.noise_dbm_per_hz))

    def terminal_gain(self, kind: str) -> float:
        if kind == "SUE":
            return float(db_to_linear(self.gain_sue_dbi))
        if kind == "BS":
            return float(db_to_linear(self.gain_bs_dbi))
        raise ValueError(f"terminal kind must be 'SUE' or 'BS', got {kind!r}")


def bessel_j1(x):
    """Bessel function of the first kind, order one.

    Accepts scalars or arrays; absolute error stays below 1e-10 for |x| <= 50.
    """
    arr = np.asarray(x, dtype=float)
    out = kernels.j1(np.ascontiguousarray(arr.ravel()))
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def beam_pattern(theta, params: ChannelParams):
    """Normalized satellite antenna gain at off-boresight angle ``theta`` (rad).

    ``4 |J1(u)/u|^e`` with ``u = k a sin(theta)``; exactly 1 on boresight.
    With the default exponent ``e = 2`` the result lies in [0, 1].
    """
    th = np.asarray(theta, dtype=float)
    u = params.wavenumber * params.aperture_radius * np.sin(th)
    on_axis = u == 0.0
    # J1(u)/u from its series near zero, where the quotient loses digits
    tiny = np.abs(u) < 1e-6
    safe_u = np.where(tiny, 1.0, u)
    ratio = np.where(tiny, 0.5 - u * u / 16.0, bessel_j1(safe_u) / safe_u)
    val = 4.0 * np.abs(ratio) ** params.beam_exponent
    val = np.where(on_axis, 1.0, val)
    return float(val) if th.ndim == 0 else val


def free_space_path_loss(d, params: ChannelParams):
    """Linear free-space loss ``(4 pi f d / c)^2``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    val = (4.0 * math.pi * params.carrier_frequency * d / params.light_speed) ** 2
    return float(val) if d.ndim == 0 else val


def channel_gain(sat: SatelliteState, terminal, terminal_kind: str, params: ChannelParams) -> float:
    """Linear end-to-end gain of one satellite/terminal link."""
    return float(gain_matrix([sat], np.atleast_2d(terminal), terminal_kind, params)[0, 0])


def gain_matrix(sats: list[SatelliteState], terminals, terminal_kind: str, params: ChannelParams) -> np.ndarray:
    """``(len(sats), len(terminals))`` matrix of linear channel gains."""
    dist, theta = ranges_and_angles(sats, terminals)
    g_ant = db_to_linear(params.gain_leo_dbi) * params.terminal_gain(terminal_kind)
    return g_ant * beam_pattern(theta, params) / free_space_path_loss(dist, params)


def first_null_angle(params: ChannelParams) -> float:
    """Off-boresight angle of the first beam-pattern null (rad), or pi/2 if beyond horizon."""
    u0 = 3.8317059702075125
    ka = params.wavenumber * params.aperture_radius
    return math.asin(u0 / ka) if u0 < ka else math.pi / 2
