"""Per-RRU transmitter impairments acting as an RF fingerprint.

The impairment chain is applied to the baseband stream of one RF chain:
IQ imbalance, carrier frequency offset, a memoryless cubic power amplifier and
a random-walk phase noise, in that order. Profile strength is calibrated so
that the residual (impaired minus ideal waveform) has a requested power
relative to a reference noise power.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

# Reference noise power for calibration, relative to a unit-power waveform
# (a 20 dB reference SNR).
DEFAULT_NOISE_POWER = 0.01
REFERENCE_LENGTH = 10_000
SEPARATION_THRESHOLD = 0.5
N_SHAPE = 6
_PA_WEIGHT = 0.5
_PN_SHARE = 0.01
_CFO_PHASE = np.sqrt(1.5)


@dataclass(frozen=True)
class FingerprintProfile:
    rru_id: int
    iq_gain_imbalance: float = 1.0
    iq_phase_imbalance: float = 0.0
    carrier_freq_offset: float = 0.0
    pa_a1: complex = 1.0 + 0.0j
    pa_a3: complex = 0.0j
    phase_noise_std: float = 0.0
    # position in the normalized parameter space used for library separation
    shape: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if abs(self.pa_a1) == 0:
            raise ValueError("pa_a1 must be nonzero")
        if self.phase_noise_std < 0:
            raise ValueError("phase_noise_std must be non-negative")

    @property
    def is_identity(self):
        return (
            self.iq_gain_imbalance == 1.0
            and self.iq_phase_imbalance == 0.0
            and self.carrier_freq_offset == 0.0
            and self.pa_a1 == 1.0
            and self.pa_a3 == 0.0
            and self.phase_noise_std == 0.0
        )

    def to_dict(self):
        d = asdict(self)
        d["pa_a1"] = [self.pa_a1.real, self.pa_a1.imag]
        d["pa_a3"] = [self.pa_a3.real, self.pa_a3.imag]
        d["shape"] = [float(v) for v in self.shape]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["pa_a1"] = complex(*d["pa_a1"])
        d["pa_a3"] = complex(*d["pa_a3"])
        d["shape"] = tuple(d.get("shape", ()))
        return cls(**d)


def apply_fingerprint(waveform, profile: FingerprintProfile, seed=None, sample_interval=1e-8, rng=None):
    """Pass ``waveform`` (samples along the last axis) through the impairment chain.

    Deterministic stages are skipped when nominal, so the identity profile
    returns a bit-identical copy. Phase noise is one oscillator shared by all
    rows; its randomness comes from ``rng`` or ``seed``.
    """
    x = np.asarray(waveform, dtype=complex)
    if x.size == 0 or x.shape[-1] == 0:
        raise ValueError("waveform must be nonempty")
    y = x.copy()
    n = np.arange(x.shape[-1])
    p = profile
    if p.iq_gain_imbalance != 1.0 or p.iq_phase_imbalance != 0.0:
        y = p.iq_gain_imbalance * y.real + 1j * np.exp(1j * p.iq_phase_imbalance) * y.imag
    if p.carrier_freq_offset != 0.0:
        y = y * np.exp(2j * np.pi * p.carrier_freq_offset * sample_interval * n)
    if p.pa_a1 != 1.0 or p.pa_a3 != 0.0:
        y = p.pa_a1 * y + p.pa_a3 * y * np.abs(y) ** 2
    if p.phase_noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng(seed)
        walk = np.cumsum(rng.normal(0.0, p.phase_noise_std, x.shape[-1]))
        y = y * np.exp(1j * walk)
    return y


def qpsk(n, rng):
    """Unit-energy QPSK symbols."""
    bits = rng.integers(0, 2, size=(2, n))
    return ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / np.sqrt(2)


def residual_power(profile, length=REFERENCE_LENGTH, seed=0, sample_interval=1e-8):
    """Mean power of ``apply_fingerprint(x) - x`` on a unit-power QPSK block."""
    rng = np.random.default_rng(seed)
    x = qpsk(length, rng)
    y = apply_fingerprint(x, profile, rng=rng, sample_interval=sample_interval)
    return float(np.mean(np.abs(y - x) ** 2))


def _profile_from_shape(rru_id, shape, kappa, sample_interval, length):
    u = shape
    cfo_unit = _CFO_PHASE / (2 * np.pi * sample_interval * length)
    return FingerprintProfile(
        rru_id=rru_id,
        iq_gain_imbalance=float(1.0 + kappa * u[0]),
        iq_phase_imbalance=float(kappa * u[1]),
        carrier_freq_offset=float(kappa * cfo_unit * u[2]),
        pa_a3=complex(kappa * _PA_WEIGHT * u[3], kappa * _PA_WEIGHT * u[4]),
        phase_noise_std=float(kappa * abs(u[5]) * np.sqrt(2 * _PN_SHARE / length)),
        shape=tuple(float(v) for v in u),
    )


def sample_profile(
    rru_id,
    impairment_scale,
    seed,
    noise_power=DEFAULT_NOISE_POWER,
    sample_interval=1e-8,
    reference_length=REFERENCE_LENGTH,
    tolerance=0.01,
    shape=None,
):
    """Draw a profile whose residual power is ``impairment_scale * noise_power``.

    The impairment mix comes from a direction ``shape`` in a 6-D normalized
    parameter space (IQ gain, IQ phase, CFO, Re/Im of the cubic PA term, phase
    noise); one common magnitude is then rescaled against the residual measured
    on a reference QPSK block until it is within ``tolerance``.
    """
    if impairment_scale < 0:
        raise ValueError("impairment_scale must be non-negative")
    rng = np.random.default_rng(seed)
    if shape is None:
        shape = rng.uniform(-1.0, 1.0, N_SHAPE)
    shape = np.asarray(shape, dtype=float)
    if impairment_scale == 0:
        return FingerprintProfile(rru_id, shape=tuple(float(v) for v in shape))
    ref_seed = int(rng.integers(2**32))
    target = impairment_scale * noise_power

    def measure(k):
        prof = _profile_from_shape(rru_id, shape, k, sample_interval, reference_length)
        return prof, residual_power(prof, reference_length, ref_seed, sample_interval)

    kappa = 1e-3
    for _ in range(30):
        prof, got = measure(kappa)
        if got <= 0:
            raise ValueError("impairment shape produces no residual")
        if abs(got / target - 1) <= tolerance:
            return prof
        kappa *= np.sqrt(target / got)
    raise RuntimeError("fingerprint calibration did not converge")


def profile_distance(a: FingerprintProfile, b: FingerprintProfile):
    return float(np.linalg.norm(np.asarray(a.shape) - np.asarray(b.shape)))


@dataclass(frozen=True)
class FingerprintLibrary:
    profiles: dict
    impairment_scale: float = 0.0
    noise_power: float = DEFAULT_NOISE_POWER

    def __getitem__(self, rru_id):
        return self.profiles[rru_id]

    def __len__(self):
        return len(self.profiles)

    def to_json(self):
        return json.dumps(
            {
                "version": 1,
                "impairment_scale": self.impairment_scale,
                "noise_power": self.noise_power,
                "profiles": [p.to_dict() for _, p in sorted(self.profiles.items())],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported library version {doc.get('version')}")
        profiles = {p["rru_id"]: FingerprintProfile.from_dict(p) for p in doc["profiles"]}
        return cls(profiles, doc["impairment_scale"], doc["noise_power"])


def build_library(
    rru_ids,
    impairment_scale,
    seed,
    threshold=SEPARATION_THRESHOLD,
    noise_power=DEFAULT_NOISE_POWER,
    sample_interval=1e-8,
    max_attempts=1000,
) -> FingerprintLibrary:
    """One calibrated profile per RRU, pairwise at least ``threshold`` apart."""
    seeds = iter(np.random.SeedSequence(seed).generate_state(len(rru_ids) * max_attempts))
    chosen = {}
    for rid in rru_ids:
        for _ in range(max_attempts):
            rng = np.random.default_rng(next(seeds))
            shape = rng.uniform(-1.0, 1.0, N_SHAPE)
            if all(np.linalg.norm(shape - np.asarray(p.shape)) >= threshold for p in chosen.values()):
                chosen[rid] = sample_profile(
                    rid, impairment_scale, int(rng.integers(2**32)), noise_power=noise_power,
                    sample_interval=sample_interval, shape=shape,
                )
                break
        else:
            raise RuntimeError("could not draw separated fingerprint profiles")
    return FingerprintLibrary(chosen, float(impairment_scale), float(noise_power))
