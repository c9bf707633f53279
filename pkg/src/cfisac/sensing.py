"""Oracle-assisted path separation and Gaussian parameter-error injection.

Multipath separation itself (tensor decomposition and friends) is out of scope:
the ground-truth per-path components stand in for it, optionally blurred by a
``leakage`` fraction of the other paths. Estimated parameters are the truth plus
zero-mean Gaussian errors, with the delay error expressed as a range in meters.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .channel import PathParams, steering_vector
from .scenario import SPEED_OF_LIGHT, STATIC
from .signal_chain import Y_STATIC, ReceivedFrame, ResidualFrame


@dataclass(frozen=True, eq=False)
class SeparatedPath:
    samples: np.ndarray          # (antennas, n)
    true_source: int             # hidden from the classifier, kept for scoring
    sink: int
    path_index: int              # reflector id of the path

    @property
    def key(self):
        return (self.true_source, self.path_index)


@dataclass(frozen=True)
class ErrorInjection:
    sigma_range: float = 0.0     # meters, applied as sigma_range / v_c to the delay
    sigma_angle: float = 0.0     # radians, to each of phi and theta
    sigma_doppler: float = 0.0   # hertz
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_range", "sigma_angle", "sigma_doppler"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def is_zero(self):
        return self.sigma_range == 0 and self.sigma_angle == 0 and self.sigma_doppler == 0


@dataclass(frozen=True)
class ExtractedParams:
    tau0: float
    phi0: float
    theta0: float
    nu0: float                   # extracted but unused by localization
    alpha0: complex
    error_model: ErrorInjection
    source: int
    sink: int
    reflector_id: int | None = None

    def __post_init__(self):
        vals = (self.tau0, self.phi0, self.theta0, self.nu0, self.alpha0)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("extracted parameters must be finite")
        if not self.tau0 > 0:
            raise ValueError(f"tau0 must be positive, got {self.tau0}")

    @property
    def is_los(self):
        return self.reflector_id is None


def wrap_angle(x):
    """Map angles to (-pi, pi]; values already in range pass through unchanged."""
    x = np.asarray(x, dtype=float)
    inside = (x > -np.pi) & (x <= np.pi)
    return np.where(inside, x, np.pi - np.mod(np.pi - x, 2 * np.pi))


def separate_paths(residual: ResidualFrame, truth: ReceivedFrame, leakage=0.0):
    """Split a post-cancellation residual into one signal per NLOS path.

    Paths of components already removed from the residual are skipped, so after
    static-clutter removal only mobile-reflector paths remain. Each output is
    ``component_l + leakage * sum_{k != l} component_k + P_l @ remainder`` where
    ``remainder`` is the part of the residual not explained by any path (noise,
    plus UE signal if one is present) and ``P_l`` projects onto the path's
    receive steering vector.
    """
    if not 0 <= leakage < 1:
        raise ValueError("leakage must lie in [0, 1)")
    if residual.samples.shape != truth.samples.shape:
        raise ValueError("residual and truth frames differ in shape")
    drop_static = Y_STATIC in residual.components_removed
    keys = [k for k in truth.path_params if not (drop_static and truth.path_kinds[k] == STATIC)]
    if not keys:
        return []
    comps = np.stack([truth.path_components[k] for k in keys])
    total = comps.sum(axis=0)
    remainder = residual.samples - total
    out = []
    for i, key in enumerate(keys):
        p = truth.path_params[key]
        a = steering_vector(p.phi, p.theta, truth.rows, truth.cols)
        share = np.outer(a, a.conj() @ remainder) / np.vdot(a, a).real
        sig = comps[i] + share
        if leakage:
            sig = sig + leakage * (total - comps[i])
        out.append(SeparatedPath(sig, key[0], truth.sink, key[1]))
    return out


def separation_remainder(residual: ResidualFrame, paths):
    """What is left of ``residual`` after removing every separated path."""
    rest = residual.samples.copy()
    for sp in paths:
        rest = rest - sp.samples
    return rest


def combine_path(path: SeparatedPath, params: PathParams, rows, cols):
    """Maximum-ratio combine a separated path onto its arrival direction -> (n,)."""
    a = steering_vector(params.phi, params.theta, rows, cols)
    return (a.conj() @ path.samples) / np.vdot(a, a).real


LOS_KEY = 2**31 - 1            # stands in for the reflector id of a LOS path in seed keys


def _path_rng(inj: ErrorInjection, truth: PathParams):
    key = (truth.source, truth.sink, LOS_KEY if truth.reflector_id is None else truth.reflector_id)
    return np.random.default_rng(np.random.SeedSequence(inj.seed, spawn_key=key))


def extract_params(path: SeparatedPath | None, truth: PathParams, inj: ErrorInjection,
                   v_c=SPEED_OF_LIGHT) -> ExtractedParams:
    """Truth plus zero-mean Gaussian errors.

    The draw depends only on ``inj.seed`` and the path identity (source, sink,
    reflector), so repeated calls agree and distinct paths get independent errors.
    """
    if path is not None and (path.true_source, path.path_index) != (truth.source, truth.reflector_id):
        raise ValueError("separated path does not match the truth parameters")
    z = _path_rng(inj, truth).standard_normal(4)
    return _perturb(truth, z, inj, v_c)


def _perturb(truth: PathParams, z, inj, v_c):
    return ExtractedParams(
        tau0=truth.tau + inj.sigma_range / v_c * z[0],
        phi0=float(wrap_angle(truth.phi + inj.sigma_angle * z[1])),
        theta0=truth.theta + inj.sigma_angle * z[2],
        nu0=truth.nu + inj.sigma_doppler * z[3],
        alpha0=truth.alpha,
        error_model=inj,
        source=truth.source,
        sink=truth.sink,
        reflector_id=truth.reflector_id,
    )


def extract_batch(truths, inj: ErrorInjection, normals=None, v_c=SPEED_OF_LIGHT):
    """Inject errors into many paths at once.

    ``normals`` (shape ``(len(truths), 4)``) lets a caller reuse the same
    standard-normal draws across different sigmas; by default they come from
    ``inj.seed``.
    """
    if normals is None:
        normals = np.random.default_rng(inj.seed).standard_normal((len(truths), 4))
    normals = np.asarray(normals, dtype=float)
    if normals.shape != (len(truths), 4):
        raise ValueError(f"normals must have shape ({len(truths)}, 4)")
    return [_perturb(t, z, inj, v_c) for t, z in zip(truths, normals)]


def angle_error(extracted: ExtractedParams, truth: PathParams):
    """Direction error sqrt(dphi^2 + dtheta^2), azimuth difference wrapped."""
    dphi = float(wrap_angle(extracted.phi0 - truth.phi))
    return float(np.hypot(dphi, extracted.theta0 - truth.theta))


def range_error(extracted: ExtractedParams, truth: PathParams, v_c=SPEED_OF_LIGHT):
    return float(v_c * (extracted.tau0 - truth.tau))


CSV_FIELDS = ("d", "u", "l", "tau0", "phi0", "theta0", "nu0")


def params_to_csv(params, stream=None):
    """Rows ``d,u,l,tau0,phi0,theta0,nu0``; ``l`` is the reflector id or ``LOS``."""
    buf = stream if stream is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for p in params:
        path = "LOS" if p.reflector_id is None else p.reflector_id
        w.writerow([p.source, p.sink, path, *(repr(float(v)) for v in (p.tau0, p.phi0, p.theta0, p.nu0))])
    return buf.getvalue() if stream is None else None


def injection_to_dict(inj: ErrorInjection):
    return asdict(inj)
