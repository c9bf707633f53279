"""Reflector localization from extracted path parameters.

An NLOS path from downlink RRU ``d`` to uplink RRU ``u`` with bistatic range
``R = v_c * tau0`` puts the reflector on the ellipsoid with foci ``p_d`` and
``p_u``; the arrival direction ``dir(phi0, theta0)`` picks one point on it.
Writing ``p = p_u + s * dir`` and ``D = p_d - p_u``,

    |D - s dir| = R - s   =>   s = (R^2 - |D|^2) / (2 (R - D . dir)),

which zeroes the range residual exactly; it needs ``R > |D|`` (an NLOS path
cannot be shorter than the LOS path).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .scenario import SPEED_OF_LIGHT, Reflector, Scenario
from .sensing import ExtractedParams

DEFAULT_EPS_R = 5.0
DEFAULT_MAX_RANGE = 300.0
DEFAULT_CLUSTER_RADIUS = 10.0
VOLUME_INFLATION = 1.1
# accepted estimates must close the range equation to this relative accuracy
RESIDUAL_TOLERANCE = 1e-6


@dataclass(frozen=True)
class DetectionHypothesis:
    params: ExtractedParams
    claimed_source: int
    sink: int
    # LOS estimate from the true transmitter, seen in the same separated group
    los_params: ExtractedParams | None = None

    @property
    def is_los(self):
        return self.params.is_los


@dataclass(frozen=True, eq=False)
class ReflectorEstimate:
    position: np.ndarray
    residual: float
    hypothesis: DetectionHypothesis
    accepted: bool
    ray_distance: float = float("nan")


@dataclass(frozen=True, eq=False)
class FusedReflector:
    position: np.ndarray
    members: tuple
    spread: float
    perception_error: float | None = None

    @property
    def count(self):
        return len(self.members)


def _positions(positions):
    if isinstance(positions, Scenario):
        return positions.positions()
    return positions


def _lookup(positions, rru_id):
    try:
        return np.asarray(positions[rru_id], dtype=float)
    except KeyError:
        raise KeyError(f"unknown RRU id {rru_id}") from None


def direction(phi, theta):
    ct = np.cos(theta)
    return np.array([ct * np.cos(phi), ct * np.sin(phi), np.sin(theta)])


def validate_los(hyp: DetectionHypothesis, positions, eps_r=DEFAULT_EPS_R, v_c=SPEED_OF_LIGHT):
    """Check the claimed source against the measured LOS range.

    Uses the hypothesis' own parameters when it is an LOS path, otherwise the
    LOS estimate attached to it. True iff ``| |p_d - p_u| - v_c tau0 | < eps_r``.
    """
    positions = _positions(positions)
    los = hyp.params if hyp.is_los else hyp.los_params
    if los is None:
        raise ValueError("hypothesis carries no LOS estimate to validate against")
    p_d = _lookup(positions, hyp.claimed_source)
    p_u = _lookup(positions, hyp.sink)
    return bool(abs(np.linalg.norm(p_d - p_u) - v_c * los.tau0) < eps_r)


def _range_residual(p_d, p_u, pos, R):
    return abs(np.linalg.norm(p_d - pos) + np.linalg.norm(pos - p_u) - R)


def line_search(p_d, p_u, R, phi, theta):
    """Minimize the range residual along the arrival ray numerically.

    Returns ``(position, s, residual)``. :func:`solve_reflector` uses it to
    report the closest ray point when the closed form has no admissible root.
    """
    dirv = direction(phi, theta)
    upper = max(R, 1.0)
    res = minimize_scalar(lambda s: _range_residual(p_d, p_u, p_u + s * dirv, R),
                          bounds=(0.0, upper), method="bounded", options={"xatol": 1e-9 * upper})
    s = float(res.x)
    pos = p_u + s * dirv
    return pos, s, float(_range_residual(p_d, p_u, pos, R))


def solve_reflector(hyp: DetectionHypothesis, positions, v_c=SPEED_OF_LIGHT) -> ReflectorEstimate:
    """Place the reflector of an NLOS hypothesis on its ray and ellipsoid."""
    if hyp.is_los:
        raise ValueError("solve_reflector needs an NLOS hypothesis")
    positions = _positions(positions)
    p_d = _lookup(positions, hyp.claimed_source)
    p_u = _lookup(positions, hyp.sink)
    R = v_c * hyp.params.tau0
    pos, s, res, ok = kernels.solve_rays(p_d[None], p_u[None], np.array([R]),
                                         np.array([hyp.params.phi0]), np.array([hyp.params.theta0]))
    if ok[0]:
        accepted = bool(res[0] <= RESIDUAL_TOLERANCE * R)
        return ReflectorEstimate(pos[0].copy(), float(res[0]), hyp, accepted, float(s[0]))
    # infeasible or collapsed ellipsoid: report the best ray point, but never accept it
    pos, s, res = line_search(p_d, p_u, R, hyp.params.phi0, hyp.params.theta0)
    return ReflectorEstimate(pos, res, hyp, False, s)


def solve_many(hyps, positions, v_c=SPEED_OF_LIGHT):
    """Vectorized :func:`solve_reflector` for a batch of NLOS hypotheses.

    Infeasible rows are returned rejected with a NaN position instead of
    running the line search.
    """
    if not hyps:
        return []
    positions = _positions(positions)
    p_d = np.array([_lookup(positions, h.claimed_source) for h in hyps])
    p_u = np.array([_lookup(positions, h.sink) for h in hyps])
    R = v_c * np.array([h.params.tau0 for h in hyps])
    phi = np.array([h.params.phi0 for h in hyps])
    theta = np.array([h.params.theta0 for h in hyps])
    pos, s, res, ok = kernels.solve_rays(p_d, p_u, R, phi, theta)
    accepted = ok & (res <= RESIDUAL_TOLERANCE * R)
    return [ReflectorEstimate(pos[i], float(res[i]), h, bool(accepted[i]), float(s[i]))
            for i, h in enumerate(hyps)]


def reject_outliers(estimates, positions, max_range=DEFAULT_MAX_RANGE, volume=None,
                    inflation=VOLUME_INFLATION):
    """Drop rejected estimates, those beyond ``max_range`` of their sink, and
    those outside ``volume`` (extents from the origin) inflated about its center.
    """
    positions = _positions(positions)
    if volume is not None:
        ext = np.asarray(volume, dtype=float)
        lo = ext / 2 - inflation * ext / 2
        hi = ext / 2 + inflation * ext / 2
    kept = []
    for est in estimates:
        if not est.accepted:
            continue
        p = est.position
        if np.linalg.norm(p - _lookup(positions, est.hypothesis.sink)) > max_range:
            continue
        if volume is not None and not (np.all(p >= lo) and np.all(p <= hi)):
            continue
        kept.append(est)
    return kept


def fuse_detections(estimates, cluster_radius=DEFAULT_CLUSTER_RADIUS):
    """Single-linkage clustering of estimates; each cluster reports its mean.

    ``spread`` is the RMS distance of the members from the cluster mean.
    Clusters are ordered by their first member.
    """
    if not estimates:
        return []
    pts = np.array([e.position for e in estimates], dtype=float)
    labels = kernels.single_linkage(pts, float(cluster_radius))
    fused = []
    for lab in range(int(labels.max()) + 1):
        idx = np.flatnonzero(labels == lab)
        members = pts[idx]
        mean = members.sum(axis=0) / len(idx)
        spread = float(np.sqrt(np.mean(np.sum((members - mean) ** 2, axis=1))))
        fused.append(FusedReflector(mean, tuple(estimates[i] for i in idx), spread))
    return fused


def perception_error(fused: FusedReflector, truth) -> float:
    """Euclidean distance from the fused mean to the true reflector position."""
    p = truth.position if isinstance(truth, Reflector) else np.asarray(truth, dtype=float)
    return float(np.linalg.norm(fused.position - p))


@dataclass(frozen=True)
class MatchResult:
    matches: tuple        # (fused index, truth index, perception error)
    misses: tuple         # unmatched truth indices
    false_alarms: tuple   # unmatched fused indices

    @property
    def errors(self):
        return [m[2] for m in self.matches]


def match_truth(fused, truths, gate):
    """Greedy nearest-pair matching of fused clusters to true reflectors.

    Pairs are taken in order of increasing distance while within ``gate``;
    each cluster and each truth is used at most once.
    """
    tpos = np.array([t.position if isinstance(t, Reflector) else t for t in truths], dtype=float).reshape(-1, 3)
    fpos = np.array([f.position for f in fused], dtype=float).reshape(-1, 3)
    if len(fpos) and len(tpos):
        dist = np.linalg.norm(fpos[:, None, :] - tpos[None, :, :], axis=2)
    else:
        dist = np.zeros((len(fpos), len(tpos)))
    order = np.argsort(dist, axis=None, kind="stable")
    used_f, used_t, matches = set(), set(), []
    for flat in order:
        i, j = divmod(int(flat), len(tpos))
        if dist[i, j] > gate:
            break
        if i in used_f or j in used_t:
            continue
        used_f.add(i)
        used_t.add(j)
        matches.append((i, j, float(dist[i, j])))
    misses = tuple(j for j in range(len(tpos)) if j not in used_t)
    false_alarms = tuple(i for i in range(len(fpos)) if i not in used_f)
    return MatchResult(tuple(sorted(matches)), misses, false_alarms)


def fused_to_csv(fused, stream=None):
    """One row per fused reflector: ``x,y,z,P,spread,eps_p`` (blank eps_p if unscored)."""
    buf = stream if stream is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "z", "P", "spread", "eps_p"])
    for f in fused:
        eps = "" if f.perception_error is None else repr(float(f.perception_error))
        w.writerow([repr(float(v)) for v in f.position] + [f.count, repr(float(f.spread)), eps])
    return buf.getvalue() if stream is None else None
