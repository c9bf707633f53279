"""Fingerprint features of separated NLOS paths.

A separated path is combined onto its arrival direction and compared with the
payload its transmitter is known to have sent (the edge unit schedules all
downlink data). What remains after removing the payload and the complex path
gain is the transmitter's impairment plus noise; the eight statistics are
documented on :func:`cfisac.kernels.residual_features`.
"""
import numpy as np

from .. import kernels
from ..sensing import combine_path

FEATURE_NAMES = (
    "i_gain",
    "i_gain_spread",
    "q_gain",
    "q_gain_spread",
    "i_from_q",
    "q_from_i",
    "cubic_correlate",
    "phase_slope",
)
assert len(FEATURE_NAMES) == kernels.N_FEATURES


def path_features(paths, params, payloads, rows, cols):
    """Feature matrix ``(len(paths), 8)`` for separated paths.

    ``params[i]`` gives the arrival direction of ``paths[i]`` and
    ``payloads[i]`` the known symbols it carries.
    """
    if not paths:
        return np.zeros((0, kernels.N_FEATURES))
    z = np.stack([combine_path(p, q, rows, cols) for p, q in zip(paths, params)])
    return kernels.residual_features(z, np.stack(payloads))


def stream_features(streams, payloads):
    """Features of already-combined streams, ``(P, n)`` each."""
    return kernels.residual_features(np.atleast_2d(streams), np.atleast_2d(payloads))
