"""Pure numpy implementations of the hot kernels.

These define the reference semantics; ``_kernels.pyx`` must agree with them to
floating-point round-off.
"""
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

N_FEATURES = 8
# ellipsoids with R^2 - |delta|^2 below this fraction of R^2 have collapsed onto the segment
DEGENERATE = 1e-12


def solve_rays(pd, pu, ranges, phi, theta):
    """Intersect arrival rays with bistatic ellipsoids.

    Parameters
    ----------
    pd, pu : (n, 3) float arrays
        Transmitter and receiver positions.
    ranges : (n,) float array
        Bistatic path lengths ``v_c * tau``.
    phi, theta : (n,) float arrays
        Azimuth and elevation of arrival at the receiver.

    Returns
    -------
    pos : (n, 3) array
        Ray points ``pu + s * dir``; NaN where the geometry is infeasible.
    s : (n,) array
        Distance along the ray (NaN where infeasible).
    residual : (n,) array
        ``| |pd - pos| + |pos - pu| - R |`` (NaN where infeasible).
    ok : (n,) bool array
        False for infeasible geometry (claimed path not longer than the
        direct one) and for ellipsoids collapsed onto the segment.
    """
    pd = np.asarray(pd, dtype=float).reshape(-1, 3)
    pu = np.asarray(pu, dtype=float).reshape(-1, 3)
    ranges = np.asarray(ranges, dtype=float).reshape(-1)
    phi = np.asarray(phi, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float).reshape(-1)

    ct = np.cos(theta)
    direction = np.stack([ct * np.cos(phi), ct * np.sin(phi), np.sin(theta)], axis=1)
    delta = pd - pu
    num = ranges**2 - np.einsum("ij,ij->i", delta, delta)
    den = 2.0 * ranges - 2.0 * np.einsum("ij,ij->i", delta, direction)
    ok = (den > 0.0) & (num > DEGENERATE * ranges**2)

    s = np.full(ranges.shape, np.nan)
    s[ok] = num[ok] / den[ok]
    pos = pu + s[:, None] * direction
    residual = np.abs(
        np.linalg.norm(pd - pos, axis=1) + np.linalg.norm(pos - pu, axis=1) - ranges
    )
    return pos, s, residual, ok


def single_linkage(points, radius):
    """Label points by single-linkage clusters with linkage distance ``radius``.

    Labels are numbered by first appearance, so the output is independent of
    the graph algorithm used.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    diff = points[:, None, :] - points[None, :, :]
    close = np.einsum("ijk,ijk->ij", diff, diff) <= radius * radius
    rows, cols = np.nonzero(np.triu(close, k=1))
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    return _canonical_labels(raw)


def _canonical_labels(raw):
    mapping = {}
    out = np.empty(len(raw), dtype=np.int64)
    for i, lab in enumerate(raw):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def residual_features(received, payload):
    """Fingerprint features of received streams against their known payloads.

    Both inputs are ``(P, N)`` complex arrays. Each row of ``received`` is
    normalized by its least-squares complex gain on the payload row before the
    statistics below are taken; columns of the ``(P, 8)`` output are

    0. I-branch gain (regression of Re z on Re s)
    1. I-branch gain spread (weighted RMS deviation)
    2. Q-branch gain
    3. Q-branch gain spread
    4. I-from-Q cross term (regression of Re z on Im s)
    5. Q-from-I cross term (regression of Im z on Re s)
    6. cubic-distortion correlate: mean of Re(e s*) (|z|^2 - mean|z|^2), e = z - s
    7. phase slope of z s* in radians per sample (CFO estimate)
    """
    r = np.atleast_2d(np.asarray(received, dtype=complex))
    s = np.atleast_2d(np.asarray(payload, dtype=complex))
    if r.shape != s.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {s.shape}")
    n = r.shape[1]
    out = np.zeros((r.shape[0], N_FEATURES))
    if n == 0:
        return out

    energy = np.sum(np.abs(s) ** 2, axis=1)
    gain = np.sum(r * np.conj(s), axis=1) / np.where(energy > 0, energy, 1.0)
    valid = np.abs(gain) > 0
    z = np.where(valid[:, None], r / np.where(valid, gain, 1.0)[:, None], 0.0)

    xr, xi = s.real, s.imag
    zr, zi = z.real, z.imag
    sxx = np.maximum(np.sum(xr * xr, axis=1), 1e-300)
    syy = np.maximum(np.sum(xi * xi, axis=1), 1e-300)

    g_i = np.sum(zr * xr, axis=1) / sxx
    g_q = np.sum(zi * xi, axis=1) / syy
    out[:, 0] = g_i
    out[:, 1] = np.sqrt(np.maximum(np.sum((zr - g_i[:, None] * xr) ** 2, axis=1) / sxx, 0.0))
    out[:, 2] = g_q
    out[:, 3] = np.sqrt(np.maximum(np.sum((zi - g_q[:, None] * xi) ** 2, axis=1) / syy, 0.0))
    out[:, 4] = np.sum(zr * xi, axis=1) / syy
    out[:, 5] = np.sum(zi * xr, axis=1) / sxx

    err = z - s
    proj = (err * np.conj(s)).real
    mag2 = np.abs(z) ** 2
    out[:, 6] = np.mean(proj * (mag2 - mag2.mean(axis=1, keepdims=True)), axis=1)

    ang = np.angle(z * np.conj(s))
    t = np.arange(n, dtype=float)
    tc = t - t.mean()
    denom = np.sum(tc * tc)
    out[:, 7] = (ang @ tc) / denom if denom > 0 else 0.0
    out[~valid] = 0.0
    return out
