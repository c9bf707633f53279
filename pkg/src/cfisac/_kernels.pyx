# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics mirror ``_kernels_py``."""
import numpy as np

from libc.math cimport atan2, cos, fabs, sin, sqrt, NAN

N_FEATURES = 8
# ellipsoids with R^2 - |delta|^2 below this fraction of R^2 have collapsed onto the segment
cdef double DEGENERATE = 1e-12


def solve_rays(pd, pu, ranges, phi, theta):
    cdef double[:, ::1] PD = np.ascontiguousarray(pd, dtype=np.float64).reshape(-1, 3)
    cdef double[:, ::1] PU = np.ascontiguousarray(pu, dtype=np.float64).reshape(-1, 3)
    cdef double[::1] R = np.ascontiguousarray(ranges, dtype=np.float64).reshape(-1)
    cdef double[::1] PH = np.ascontiguousarray(phi, dtype=np.float64).reshape(-1)
    cdef double[::1] TH = np.ascontiguousarray(theta, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = R.shape[0]
    pos_arr = np.empty((n, 3))
    s_arr = np.empty(n)
    res_arr = np.empty(n)
    ok_arr = np.zeros(n, dtype=np.bool_)
    cdef double[:, ::1] pos = pos_arr
    cdef double[::1] s = s_arr
    cdef double[::1] res = res_arr
    cdef unsigned char[::1] ok = ok_arr.view(np.uint8)

    cdef Py_ssize_t i, k
    cdef double ct, dx, dy, dz, d0, d1, d2, num, den, si, a, b, c
    for i in range(n):
        ct = cos(TH[i])
        dx = ct * cos(PH[i])
        dy = ct * sin(PH[i])
        dz = sin(TH[i])
        d0 = PD[i, 0] - PU[i, 0]
        d1 = PD[i, 1] - PU[i, 1]
        d2 = PD[i, 2] - PU[i, 2]
        num = R[i] * R[i] - (d0 * d0 + d1 * d1 + d2 * d2)
        den = 2.0 * R[i] - 2.0 * (d0 * dx + d1 * dy + d2 * dz)
        if den > 0.0 and num > DEGENERATE * R[i] * R[i]:
            si = num / den
            ok[i] = 1
            s[i] = si
            pos[i, 0] = PU[i, 0] + si * dx
            pos[i, 1] = PU[i, 1] + si * dy
            pos[i, 2] = PU[i, 2] + si * dz
            a = PD[i, 0] - pos[i, 0]
            b = PD[i, 1] - pos[i, 1]
            c = PD[i, 2] - pos[i, 2]
            res[i] = fabs(sqrt(a * a + b * b + c * c) + sqrt(
                (pos[i, 0] - PU[i, 0]) ** 2 + (pos[i, 1] - PU[i, 1]) ** 2
                + (pos[i, 2] - PU[i, 2]) ** 2) - R[i])
        else:
            s[i] = NAN
            res[i] = NAN
            for k in range(3):
                pos[i, k] = NAN
    return pos_arr, s_arr, res_arr, ok_arr


cdef Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def single_linkage(points, double radius):
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t n = P.shape[0]
    parent_arr = np.arange(n, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    cdef Py_ssize_t i, j, ri, rj
    cdef double r2 = radius * radius, a, b, c
    for i in range(n):
        for j in range(i + 1, n):
            a = P[i, 0] - P[j, 0]
            b = P[i, 1] - P[j, 1]
            c = P[i, 2] - P[j, 2]
            if a * a + b * b + c * c <= r2:
                ri = _find(parent, i)
                rj = _find(parent, j)
                if ri != rj:
                    if ri < rj:
                        parent[rj] = ri
                    else:
                        parent[ri] = rj
    labels_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] labels = labels_arr
    remap_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] remap = remap_arr
    cdef long long next_label = 0
    for i in range(n):
        ri = _find(parent, i)
        if remap[ri] < 0:
            remap[ri] = next_label
            next_label += 1
        labels[i] = remap[ri]
    return labels_arr


def residual_features(received, payload):
    r_arr = np.atleast_2d(np.ascontiguousarray(received, dtype=np.complex128))
    s_arr = np.atleast_2d(np.ascontiguousarray(payload, dtype=np.complex128))
    if r_arr.shape != s_arr.shape:
        raise ValueError(f"shape mismatch: {r_arr.shape} vs {s_arr.shape}")
    cdef double complex[:, ::1] r = r_arr
    cdef double complex[:, ::1] s = s_arr
    cdef Py_ssize_t P = r.shape[0], N = r.shape[1]
    out_arr = np.zeros((P, N_FEATURES))
    cdef double[:, ::1] out = out_arr
    if N == 0:
        return out_arr

    cdef Py_ssize_t p, n
    cdef double complex g, zc, sc, e
    cdef double energy, gr, gi, g2, xr, xi, zr, zi
    cdef double sxx, syy, szx, szy, szz_r, szz_i, sxi_zr, sxr_zi
    cdef double mag2, sum_mag2, sum_proj, sum_proj_mag2, proj
    cdef double ang, sum_ang_t, tmean, tden, tc
    tmean = (N - 1) / 2.0
    tden = 0.0
    for n in range(N):
        tc = n - tmean
        tden += tc * tc

    for p in range(P):
        energy = 0.0
        g = 0.0
        for n in range(N):
            sc = s[p, n]
            energy += sc.real * sc.real + sc.imag * sc.imag
            g = g + r[p, n] * sc.conjugate()
        if energy <= 0.0:
            continue
        g = g / energy
        g2 = g.real * g.real + g.imag * g.imag
        if g2 == 0.0:
            continue
        sxx = 0.0
        syy = 0.0
        szx = 0.0
        szy = 0.0
        szz_r = 0.0
        szz_i = 0.0
        sxi_zr = 0.0
        sxr_zi = 0.0
        sum_mag2 = 0.0
        sum_proj = 0.0
        sum_proj_mag2 = 0.0
        sum_ang_t = 0.0
        for n in range(N):
            sc = s[p, n]
            zc = r[p, n] / g
            xr = sc.real
            xi = sc.imag
            zr = zc.real
            zi = zc.imag
            sxx += xr * xr
            syy += xi * xi
            szx += zr * xr
            szy += zi * xi
            szz_r += zr * zr
            szz_i += zi * zi
            sxi_zr += zr * xi
            sxr_zi += zi * xr
            e = zc - sc
            proj = e.real * xr + e.imag * xi
            mag2 = zr * zr + zi * zi
            sum_mag2 += mag2
            sum_proj += proj
            sum_proj_mag2 += proj * mag2
            # angle of z * conj(s)
            ang = atan2(zi * xr - zr * xi, zr * xr + zi * xi)
            sum_ang_t += ang * (n - tmean)
        if sxx < 1e-300:
            sxx = 1e-300
        if syy < 1e-300:
            syy = 1e-300
        gr = szx / sxx
        gi = szy / syy
        out[p, 0] = gr
        out[p, 1] = sqrt(max((szz_r - 2.0 * gr * szx + gr * gr * sxx) / sxx, 0.0))
        out[p, 2] = gi
        out[p, 3] = sqrt(max((szz_i - 2.0 * gi * szy + gi * gi * syy) / syy, 0.0))
        out[p, 4] = sxi_zr / syy
        out[p, 5] = sxr_zi / sxx
        out[p, 6] = (sum_proj_mag2 - sum_proj * sum_mag2 / N) / N
        out[p, 7] = sum_ang_t / tden if tden > 0.0 else 0.0
    return out_arr
