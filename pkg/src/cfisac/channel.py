"""Geometric multipath channel between RRUs: path parameters and MIMO synthesis.

Each path contributes ``alpha * exp(-j 2 pi f0 tau) * exp(j 2 pi nu T_x n) * a(phi, theta)``
to the receive-array response at sample ``n``. The block-stacked form used for
joint processing (gain, steering, delay and Doppler matrices applied to the
transmit streams) is the same sum written per path, so nothing here stores it
as a separate object.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .scenario import DOWNLINK, SPEED_OF_LIGHT, UPLINK, Scenario

LOS = "LOS"
NLOS = "NLOS"


@dataclass(frozen=True)
class PathParams:
    alpha: complex
    tau: float
    nu: float
    phi: float
    theta: float
    kind: str
    source: int
    sink: int
    reflector_id: int | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"path delay must be positive, got {self.tau}")
        if abs(self.phi) > np.pi or abs(self.theta) > np.pi / 2:
            raise ValueError(f"angles out of range: phi={self.phi}, theta={self.theta}")
        if self.kind == LOS and self.reflector_id is not None:
            raise ValueError("LOS paths carry no reflector id")
        if self.kind == NLOS and self.reflector_id is None:
            raise ValueError("NLOS paths need a reflector id")
        if self.kind not in (LOS, NLOS):
            raise ValueError(f"unknown path kind {self.kind!r}")

    def to_dict(self):
        d = asdict(self)
        d["alpha"] = [self.alpha.real, self.alpha.imag]
        return d


def arrival_angles(origin, target):
    """Azimuth and elevation of ``target`` seen from ``origin``.

    ``phi = atan2(dy, dx)``, ``theta = atan2(dz, horizontal range)``, so that
    ``target = origin + |target - origin| * (cos t cos p, cos t sin p, sin t)``.
    """
    d = np.asarray(target, dtype=float) - np.asarray(origin, dtype=float)
    phi = float(np.arctan2(d[1], d[0]))
    theta = float(np.arctan2(d[2], np.hypot(d[0], d[1])))
    return phi, theta


def bistatic_doppler(p_tx, p_rx, p_r, velocity, f0, v_c=SPEED_OF_LIGHT):
    """Doppler (Hz) of a reflection off a point moving with ``velocity``.

    Sign convention: ``nu = -(f0 / v_c) * dR/dt`` with ``R`` the bistatic path
    length, i.e. the rate of the delay phase ``exp(-j 2 pi f0 R / v_c)``.
    """
    p_r = np.asarray(p_r, dtype=float)
    u_tx = np.asarray(p_tx, dtype=float) - p_r
    u_rx = np.asarray(p_rx, dtype=float) - p_r
    u_tx /= np.linalg.norm(u_tx)
    u_rx /= np.linalg.norm(u_rx)
    return float(f0 / v_c * np.dot(velocity, u_tx + u_rx))


def _los_path(p_tx, p_rx, wavelength, source, sink, v_c):
    r = float(np.linalg.norm(np.asarray(p_tx) - np.asarray(p_rx)))
    phi, theta = arrival_angles(p_rx, p_tx)
    alpha = complex(wavelength / (4 * np.pi * r))
    return PathParams(alpha, r / v_c, 0.0, phi, theta, LOS, source, sink)


def compute_paths(scenario: Scenario, d: int, u: int, v_c: float = SPEED_OF_LIGHT):
    """Ground-truth paths from downlink RRU ``d`` to uplink RRU ``u``.

    The LOS path comes first, followed by one NLOS path per reflector in
    scenario order (every reflector is visible to every pair).
    """
    if d == u:
        raise ValueError("source and sink must be distinct RRUs")
    tx, rx = scenario.rru(d), scenario.rru(u)
    if tx.role == UPLINK or rx.role == DOWNLINK:
        raise ValueError(f"RRU {d} must be downlink and RRU {u} uplink in this slot")
    lam = v_c / scenario.carrier_frequency
    paths = [_los_path(tx.position, rx.position, lam, d, u, v_c)]
    for refl in scenario.reflectors:
        r1 = float(np.linalg.norm(tx.position - refl.position))
        r2 = float(np.linalg.norm(refl.position - rx.position))
        phi, theta = arrival_angles(rx.position, refl.position)
        nu = bistatic_doppler(tx.position, rx.position, refl.position, refl.velocity,
                              scenario.carrier_frequency, v_c)
        alpha = complex(lam / (4 * np.pi * (r1 + r2)) * refl.reflection_gain)
        paths.append(PathParams(alpha, (r1 + r2) / v_c, nu, phi, theta, NLOS, d, u, refl.id))
    return paths


def compute_ue_paths(scenario: Scenario, q: int, u: int, v_c: float = SPEED_OF_LIGHT):
    """Uplink UE channel: a single LOS path from UE ``q`` to RRU ``u``."""
    ue = next((x for x in scenario.ues if x.id == q), None)
    if ue is None:
        raise KeyError(f"unknown UE id {q}")
    lam = v_c / scenario.carrier_frequency
    return [_los_path(ue.position, scenario.rru(u).position, lam, q, u, v_c)]


def steering_vector(phi, theta, M, N):
    """Uniform planar array response with half-wavelength spacing.

    Element ``(m, n)`` (flattened row-major, index ``m * N + n``) is
    ``exp(j pi (m sin(theta) cos(phi) + n sin(theta) sin(phi)))``.
    """
    if M < 1 or N < 1:
        raise ValueError("array needs M >= 1 and N >= 1")
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    st = np.sin(theta)
    return np.exp(1j * np.pi * (m * st * np.cos(phi) + n * st * np.sin(phi))).reshape(-1)


def steering_matrix(phis, thetas, M, N):
    """Stack of steering vectors, shape ``(len(phis), M * N)``."""
    phis = np.asarray(phis, dtype=float).reshape(-1, 1)
    st = np.sin(np.asarray(thetas, dtype=float)).reshape(-1, 1)
    m = np.repeat(np.arange(M), N)[None, :]
    n = np.tile(np.arange(N), M)[None, :]
    return np.exp(1j * np.pi * (m * st * np.cos(phis) + n * st * np.sin(phis)))


def path_phasors(paths, f0, T_x, samples):
    """Per-path scalar coefficient at each sample index, shape ``(L, len(samples))``."""
    samples = np.asarray(samples, dtype=float)
    alpha = np.array([p.alpha for p in paths], dtype=complex)
    tau = np.array([p.tau for p in paths])
    nu = np.array([p.nu for p in paths])
    static = alpha * np.exp(-2j * np.pi * f0 * tau)
    return static[:, None] * np.exp(2j * np.pi * T_x * nu[:, None] * samples[None, :])


def channel_matrix(paths, M, N, f0, T_x, sample_index=0):
    """Receive-array channel vector (length ``M * N``) at one sample index."""
    if not paths:
        raise ValueError("need at least one path")
    coef = path_phasors(paths, f0, T_x, [sample_index])[:, 0]
    steer = steering_matrix([p.phi for p in paths], [p.theta for p in paths], M, N)
    return coef @ steer


@dataclass(frozen=True)
class ChannelRealization:
    paths: dict

    @property
    def pairs(self):
        return list(self.paths)

    def num_paths(self, d, u):
        return len(self.paths[(d, u)])

    def to_json(self):
        return json.dumps(
            [{"d": d, "u": u, "paths": [p.to_dict() for p in ps]} for (d, u), ps in self.paths.items()],
            indent=1,
        )


def realize_channel(scenario: Scenario, v_c: float = SPEED_OF_LIGHT) -> ChannelRealization:
    """Paths for every (downlink, uplink) pair of the current slot."""
    return ChannelRealization(
        {(d, u): tuple(compute_paths(scenario, d, u, v_c))
         for d in scenario.downlink_ids for u in scenario.uplink_ids}
    )
