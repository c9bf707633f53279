"""Downlink transmit frames, received-signal assembly, cancellation and idle detection.

Waveforms are single-carrier at one sample per symbol, so every path acts on
the transmit stream as a per-sample complex phasor times the receive steering
vector. One frame per downlink RRU is transmitted and heard by all uplink RRUs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import (
    ChannelRealization,
    compute_ue_paths,
    path_phasors,
    steering_matrix,
)
from .fingerprint import FingerprintProfile, apply_fingerprint, qpsk
from .scenario import STATIC, Scenario

log = logging.getLogger(__name__)

X_UE = "X_UE"
Y_LOS = "Y_LOS"
Y_STATIC = "Y_NLOS_static"
Y_MOBILE = "Y_NLOS_mobile"
NOISE = "noise"
LABELS = (X_UE, Y_LOS, Y_STATIC, Y_MOBILE, NOISE)


@dataclass(frozen=True, eq=False)
class SymbolBlock:
    symbols: np.ndarray
    rru_id: int | None = None
    modulation: str = "QPSK"


def make_symbol_block(n_symbols, rng=None, rru_id=None, seed=None):
    rng = rng if rng is not None else np.random.default_rng(seed)
    return SymbolBlock(qpsk(n_symbols, rng), rru_id)


@dataclass(frozen=True, eq=False)
class TransmitFrame:
    samples: np.ndarray          # (ports, n) per-port streams
    beamformer: np.ndarray       # (ports, 1)
    power_coeffs: np.ndarray     # (1,)
    payload: np.ndarray          # known symbols s, unit energy
    fingerprinted: bool
    rru_id: int | None = None
    power: float = 1.0

    @property
    def stream(self):
        """Beam-domain waveform seen by the scalar transmit port of the channel."""
        f = self.beamformer[:, 0]
        return (np.conj(f) @ self.samples) / np.linalg.norm(f)

    def __len__(self):
        return self.samples.shape[1]


def make_transmit_frame(
    block: SymbolBlock,
    beamformer=None,
    power_coeffs=None,
    profile: FingerprintProfile | None = None,
    power=1.0,
    rng=None,
    sample_interval=1e-8,
) -> TransmitFrame:
    """Beamform, power-control and fingerprint one symbol block.

    The precoded block is scaled to unit drive level before the impairment chain
    (so the PA sees a calibrated input) and rescaled to ``power`` afterwards;
    the result does not depend on the absolute scale of ``power_coeffs``.
    """
    s = np.asarray(block.symbols, dtype=complex).reshape(-1)
    F = np.eye(1, dtype=complex) if beamformer is None else np.asarray(beamformer, dtype=complex)
    F = F.reshape(F.shape[0], -1)
    gamma = np.ones(1) if power_coeffs is None else np.asarray(power_coeffs, dtype=float).reshape(-1)
    if F.shape[1] != 1 or gamma.shape != (1,):
        raise ValueError(f"single-stream frame needs a (ports, 1) beamformer and one power coefficient, "
                         f"got {F.shape} and {gamma.shape}")
    if np.any(gamma < 0):
        raise ValueError("power coefficients must be non-negative")
    pre = F @ (np.sqrt(gamma)[:, None] * s[None, :])
    drive = np.mean(np.sum(np.abs(pre) ** 2, axis=0))
    if not drive > 0:
        raise ValueError("symbol block has zero power")
    x = pre / np.sqrt(drive)
    fingerprinted = profile is not None and not profile.is_identity
    if fingerprinted:
        x = apply_fingerprint(x, profile, rng=rng, sample_interval=sample_interval)
    x = x * np.sqrt(power / np.mean(np.sum(np.abs(x) ** 2, axis=0)))
    return TransmitFrame(x, F, gamma, s, fingerprinted, block.rru_id, float(power))


def mrt_beamformer(phi, theta, rows, cols):
    """Unit-norm maximum-ratio beamformer toward ``(phi, theta)``."""
    a = steering_matrix([phi], [theta], rows, cols)[0]
    return (np.conj(a) / np.linalg.norm(a)).reshape(-1, 1)


def path_components(paths, stream, steer, f0, T_x, t):
    """Per-path received contributions, shape ``(L, antennas, n)``."""
    coef = path_phasors(paths, f0, T_x, t) * stream[None, :]
    return steer[:, :, None] * coef[:, None, :]


@dataclass(frozen=True, eq=False)
class ReceivedFrame:
    samples: np.ndarray
    components: dict
    path_components: dict        # (source, reflector_id) -> (antennas, n)
    path_params: dict            # (source, reflector_id) -> PathParams (NLOS only)
    los_params: dict             # source -> PathParams of the LOS path
    path_kinds: dict             # (source, reflector_id) -> STATIC or MOBILE
    noise_psd: float
    noise_power: float
    sink: int
    sample_offset: int = 0
    rows: int = 4
    cols: int = 4

    def recompose(self):
        total = self.components[LABELS[0]]
        for label in LABELS[1:]:
            total = total + self.components[label]
        return total

    @property
    def shape(self):
        return self.samples.shape


def assemble_received(
    scenario: Scenario,
    channel: ChannelRealization,
    frames: dict,
    u: int,
    ue_signals: dict | None = None,
    noise_psd=0.0,
    seed=None,
    rng=None,
    sample_offset=0,
) -> ReceivedFrame:
    """Signal at uplink RRU ``u``: UE uplink + LOS + static and mobile NLOS + noise.

    Noise is circularly-symmetric complex Gaussian with per-sample variance
    ``noise_psd / T_x`` (bandwidth equal to the sample rate). Every component
    is kept separately, and ``samples`` is their sum in :data:`LABELS` order.
    """
    rx = scenario.rru(u)
    f0, T_x = scenario.carrier_frequency, scenario.sample_interval
    missing = set(scenario.downlink_ids) - set(frames)
    if missing:
        raise ValueError(f"no transmit frame for downlink RRUs {sorted(missing)}")
    lengths = {len(f) for f in frames.values()}
    if len(lengths) != 1:
        raise ValueError("all transmit frames must have the same length")
    n = lengths.pop()
    A = rx.n_antennas
    t = sample_offset + np.arange(n)
    kinds = {r.id: r.kind for r in scenario.reflectors}

    comps = {label: np.zeros((A, n), dtype=complex) for label in LABELS}
    per_path, params, los, path_kinds = {}, {}, {}, {}
    for d in scenario.downlink_ids:
        paths = channel.paths[(d, u)]
        steer = steering_matrix([p.phi for p in paths], [p.theta for p in paths], rx.rows, rx.cols)
        contrib = path_components(paths, frames[d].stream, steer, f0, T_x, t)
        los[d] = paths[0]
        comps[Y_LOS] += contrib[0]
        for p, c in zip(paths[1:], contrib[1:]):
            key = (d, p.reflector_id)
            per_path[key] = c
            params[key] = p
            path_kinds[key] = kinds[p.reflector_id]
            comps[Y_STATIC if kinds[p.reflector_id] == STATIC else Y_MOBILE] += c

    for q, wave in (ue_signals or {}).items():
        ue = next(x for x in scenario.ues if x.id == q)
        if not ue.active:
            continue
        paths = compute_ue_paths(scenario, q, u)
        steer = steering_matrix([p.phi for p in paths], [p.theta for p in paths], rx.rows, rx.cols)
        comps[X_UE] += path_components(paths, np.asarray(wave, dtype=complex), steer, f0, T_x, t).sum(axis=0)

    noise_power = noise_psd / T_x
    if noise_power > 0:
        rng = rng if rng is not None else np.random.default_rng(seed)
        comps[NOISE] = np.sqrt(noise_power / 2) * (rng.standard_normal((A, n)) + 1j * rng.standard_normal((A, n)))

    frame = ReceivedFrame(
        samples=np.zeros((A, n), dtype=complex), components=comps, path_components=per_path,
        path_params=params, los_params=los, path_kinds=path_kinds, noise_psd=float(noise_psd), noise_power=float(noise_power),
        sink=u, sample_offset=int(sample_offset), rows=rx.rows, cols=rx.cols,
    )
    object.__setattr__(frame, "samples", frame.recompose())
    return frame


@dataclass(frozen=True, eq=False)
class ResidualFrame:
    samples: np.ndarray
    components_removed: frozenset = field(default_factory=frozenset)
    sanity_ok: bool = True
    sink: int | None = None
    noise_power: float = 0.0


def cancel_known(frame: ReceivedFrame, known_los, historical_clutter=None) -> ResidualFrame:
    """Subtract the known LOS signal and the learned static clutter.

    A residual stronger than the frame itself means the subtracted estimates
    add rather than cancel; ``sanity_ok`` is then False and a warning logged.
    """
    known_los = np.asarray(known_los)
    if known_los.shape != frame.samples.shape:
        raise ValueError(f"LOS estimate shape {known_los.shape} does not match frame {frame.samples.shape}")
    residual = frame.samples - known_los
    removed = {Y_LOS}
    if historical_clutter is not None:
        historical_clutter = np.asarray(historical_clutter)
        if historical_clutter.shape != frame.samples.shape:
            raise ValueError(
                f"clutter estimate shape {historical_clutter.shape} does not match frame {frame.samples.shape}"
            )
        residual = residual - historical_clutter
        removed.add(Y_STATIC)
    sane = bool(np.mean(np.abs(residual) ** 2) <= np.mean(np.abs(frame.samples) ** 2))
    if not sane:
        log.warning("cancellation at RRU %s increased signal power; LOS/clutter estimate mismatched", frame.sink)
    return ResidualFrame(residual, frozenset(removed), sane, frame.sink, frame.noise_power)


def residual_power(residual: ResidualFrame):
    if residual.samples.size == 0:
        raise ValueError("empty residual frame")
    return float(np.mean(np.abs(residual.samples) ** 2))


def detect_uplink_idle(residual: ResidualFrame, threshold, nlos_power_estimate=0.0) -> bool:
    """True when no UE uplink energy is seen above ``threshold`` (watts per sample).

    ``nlos_power_estimate`` is the expected mobile-reflector power, removed
    before the comparison.
    """
    return residual_power(residual) - nlos_power_estimate < threshold


def calibrate_idle_threshold(null_powers, percentile=99.9):
    """Threshold at a percentile of residual powers observed without UE traffic."""
    null_powers = np.asarray(null_powers, dtype=float)
    if null_powers.size == 0:
        raise ValueError("need at least one null observation")
    return float(np.percentile(null_powers, percentile))


def estimate_clutter(history_residuals, history_streams, current_streams):
    """Static-clutter signal for the current frame, learned from past frames.

    Each past post-LOS residual ``R_k`` (antennas x n) is regressed on the known
    transmit streams ``X_k`` (downlink RRUs x n) to get a clutter channel
    ``G_k = R_k X_k^H (X_k X_k^H)^-1``; the channels are averaged over the
    window and applied to the current streams.
    """
    if len(history_residuals) == 0 or len(history_residuals) != len(history_streams):
        raise ValueError("need matching, nonempty residual and stream histories")
    acc = None
    for R, X in zip(history_residuals, history_streams):
        X = np.atleast_2d(X)
        G = np.linalg.solve((X @ X.conj().T).T, (R @ X.conj().T).T).T
        acc = G if acc is None else acc + G
    return (acc / len(history_residuals)) @ np.atleast_2d(current_streams)


# -- binary export -----------------------------------------------------------

def write_frame(frame: ReceivedFrame, stem):
    """Write ``<stem>.bin`` (little-endian interleaved complex64 blocks) and ``<stem>.json``.

    Blocks are stored in the order listed under ``"blocks"`` in the sidecar,
    each ``antennas x samples`` in row-major order.
    """
    stem = Path(stem)
    blocks = ["samples", *LABELS]
    data = [frame.samples] + [frame.components[k] for k in LABELS]
    with open(stem.with_suffix(".bin"), "wb") as fh:
        for arr in data:
            fh.write(np.ascontiguousarray(arr, dtype="<c8").tobytes())
    meta = {
        "format": "interleaved-complex64-le",
        "antennas": int(frame.samples.shape[0]),
        "samples": int(frame.samples.shape[1]),
        "blocks": blocks,
        "noise_psd": frame.noise_psd,
        "noise_power": frame.noise_power,
        "sink": frame.sink,
        "sample_offset": frame.sample_offset,
    }
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=1))
    return stem.with_suffix(".bin"), stem.with_suffix(".json")


def read_frame_blocks(stem):
    """Read back the blocks written by :func:`write_frame` as a dict of arrays."""
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    shape = (meta["antennas"], meta["samples"])
    raw = np.fromfile(stem.with_suffix(".bin"), dtype="<c8")
    size = shape[0] * shape[1]
    if raw.size != size * len(meta["blocks"]):
        raise ValueError(f"{stem}: size does not match sidecar")
    return {name: raw[i * size:(i + 1) * size].reshape(shape) for i, name in enumerate(meta["blocks"])}, meta
