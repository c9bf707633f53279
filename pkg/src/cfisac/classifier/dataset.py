"""Fingerprint dataset construction through the full downlink/uplink chain."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ..channel import realize_channel
from ..fingerprint import DEFAULT_NOISE_POWER, build_library
from ..sensing import combine_path, separate_paths
from ..signal_chain import (
    Y_LOS,
    Y_STATIC,
    assemble_received,
    cancel_known,
    make_symbol_block,
    make_transmit_frame,
)
from .. import kernels

TEST_FRACTION = 0.2


@dataclass(frozen=True)
class NoiseConfig:
    """Noise seen by the classifier.

    ``path_noise`` is the power of the per-path estimation error relative to
    that path's own power, added to each combined path stream; fingerprint
    strengths are calibrated against the same quantity. ``receiver_snr_db``
    optionally adds thermal noise at the receiver, set relative to the mean
    per-antenna power of the mobile NLOS paths.
    """
    path_noise: float = DEFAULT_NOISE_POWER
    receiver_snr_db: float | None = None

    def __post_init__(self):
        if self.path_noise < 0:
            raise ValueError("path_noise must be non-negative")


@dataclass(frozen=True)
class FingerprintSample:
    features: np.ndarray
    label: int
    sink: int
    path_index: int
    snr_db: float


@dataclass(frozen=True, eq=False)
class FingerprintDataset:
    features: np.ndarray       # (n, n_features)
    labels: np.ndarray         # source RRU id per sample
    sinks: np.ndarray
    path_index: np.ndarray     # reflector id per sample
    snr_db: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return FingerprintSample(self.features[i], int(self.labels[i]), int(self.sinks[i]),
                                 int(self.path_index[i]), float(self.snr_db[i]))

    @property
    def label_set(self):
        return sorted(int(v) for v in np.unique(self.labels))

    def train(self):
        return self.features[self.train_idx], self.labels[self.train_idx]

    def test(self):
        return self.features[self.test_idx], self.labels[self.test_idx]

    def with_split(self, train_idx, test_idx):
        return FingerprintDataset(self.features, self.labels, self.sinks, self.path_index, self.snr_db,
                                  np.asarray(train_idx), np.asarray(test_idx), self.seed)

    def to_json(self):
        return json.dumps({
            "version": 1,
            "seed": self.seed,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "sinks": self.sinks.tolist(),
            "path_index": self.path_index.tolist(),
            "snr_db": self.snr_db.tolist(),
            "train_idx": self.train_idx.tolist(),
            "test_idx": self.test_idx.tolist(),
        })

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported dataset version {doc.get('version')}")
        n_feat = kernels.N_FEATURES
        return cls(
            np.asarray(doc["features"], dtype=float).reshape(-1, n_feat),
            np.asarray(doc["labels"], dtype=np.int64),
            np.asarray(doc["sinks"], dtype=np.int64),
            np.asarray(doc["path_index"], dtype=np.int64),
            np.asarray(doc["snr_db"], dtype=float),
            np.asarray(doc["train_idx"], dtype=np.int64),
            np.asarray(doc["test_idx"], dtype=np.int64),
            doc["seed"],
        )


def stratified_split(labels, seed, test_fraction=TEST_FRACTION):
    """Per-label random split; returns sorted (train, test) index arrays."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for lab in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == lab))
        n_test = int(round(test_fraction * len(idx)))
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def build_dataset(
    scenario,
    n_samples_per_rru,
    n_symbols,
    impairment_scale,
    noise_config: NoiseConfig | None = None,
    seed=0,
    library=None,
    leakage=0.0,
):
    """Labeled fingerprint samples from simulated frames.

    Every frame, each downlink RRU sends a fresh random QPSK payload through its
    impairment profile. At each uplink RRU the LOS and static-clutter signals
    are cancelled (with exact knowledge), the mobile-reflector paths separated
    and combined, and each one becomes a sample labeled with its true source.
    Frames are generated until every RRU has ``n_samples_per_rru`` samples.
    """
    noise_config = noise_config or NoiseConfig()
    downlinks, uplinks = scenario.downlink_ids, scenario.uplink_ids
    if len(downlinks) < 2:
        raise ValueError("need at least two downlink RRUs to classify sources")
    n_mobile = len(scenario.mobile_reflectors)
    if n_mobile == 0:
        raise ValueError("scenario has no mobile reflectors, so no NLOS paths to sample")
    lib_seed, payload_seed, noise_seed, split_seed = (
        int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(4))
    if library is None:
        library = build_library(downlinks, impairment_scale, lib_seed,
                                noise_power=noise_config.path_noise or DEFAULT_NOISE_POWER,
                                sample_interval=scenario.sample_interval)
    missing = set(downlinks) - set(library.profiles)
    if missing:
        raise ValueError(f"no fingerprint profile for RRUs {sorted(missing)}")

    channel = realize_channel(scenario)
    per_frame = len(uplinks) * n_mobile
    n_frames = math.ceil(n_samples_per_rru / per_frame)
    payload_rng = np.random.default_rng(payload_seed)
    noise_rng = np.random.default_rng(noise_seed)
    noise_psd = _receiver_noise_psd(scenario, channel, noise_config)
    rows_out = []
    for k in range(n_frames):
        frames = {}
        for d in downlinks:
            block = make_symbol_block(n_symbols, payload_rng, rru_id=d)
            frames[d] = make_transmit_frame(block, profile=library[d], power=scenario.tx_power,
                                            rng=payload_rng, sample_interval=scenario.sample_interval)
        for u in uplinks:
            rx = assemble_received(scenario, channel, frames, u, noise_psd=noise_psd, rng=noise_rng,
                                   sample_offset=k * n_symbols)
            residual = cancel_known(rx, rx.components[Y_LOS], rx.components[Y_STATIC])
            for sp in separate_paths(residual, rx, leakage):
                params = rx.path_params[sp.key]
                z = combine_path(sp, params, rx.rows, rx.cols)
                power = float(np.mean(np.abs(rx.path_components[sp.key][0]) ** 2))
                if noise_config.path_noise > 0:
                    sd = math.sqrt(noise_config.path_noise * power / 2)
                    z = z + sd * (noise_rng.standard_normal(z.shape) + 1j * noise_rng.standard_normal(z.shape))
                floor = noise_config.path_noise * power + rx.noise_power / (rx.rows * rx.cols)
                snr_db = 10 * math.log10(power / floor) if floor > 0 else math.inf
                rows_out.append((z, frames[sp.true_source].payload, sp.true_source, u, sp.path_index, snr_db))
    # trim to exactly n_samples_per_rru per label, in generation order
    keep, count = [], {d: 0 for d in downlinks}
    for i, row in enumerate(rows_out):
        if count[row[2]] < n_samples_per_rru:
            count[row[2]] += 1
            keep.append(i)
    rows_out = [rows_out[i] for i in keep]
    feats = kernels.residual_features(np.stack([r[0] for r in rows_out]), np.stack([r[1] for r in rows_out]))
    labels = np.array([r[2] for r in rows_out], dtype=np.int64)
    train_idx, test_idx = stratified_split(labels, split_seed)
    return FingerprintDataset(
        feats, labels,
        np.array([r[3] for r in rows_out], dtype=np.int64),
        np.array([r[4] for r in rows_out], dtype=np.int64),
        np.array([r[5] for r in rows_out], dtype=float),
        train_idx, test_idx, int(seed) if np.ndim(seed) == 0 else 0,
    )


def _receiver_noise_psd(scenario, channel, noise_config):
    if noise_config.receiver_snr_db is None:
        return 0.0
    mobile = {r.id for r in scenario.mobile_reflectors}
    powers = [abs(p.alpha) ** 2 * scenario.tx_power
              for paths in channel.paths.values() for p in paths[1:] if p.reflector_id in mobile]
    return float(np.mean(powers)) * 10 ** (-noise_config.receiver_snr_db / 10) * scenario.sample_interval

