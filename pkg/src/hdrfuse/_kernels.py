"""Compiled per-pixel kernels for the reconstruction passes.

Every output pixel is fitted independently; parallel loops write disjoint
output elements, so results are identical for any thread count. All math is
float64 without fastmath so runs are bit-reproducible.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# fit status codes
_OK = 0
_TOO_FEW = 1
_ILL_CONDITIONED = 2


@njit(cache=True)
def _ncoef(order):
    return (order + 1) * (order + 2) // 2


@njit(cache=True)
def _sym_eig_range(A, p):
    """(lmin, lmax) of the leading p x p symmetric block of A."""
    if p == 1:
        return A[0, 0], A[0, 0]
    if p == 2:
        a = A[0, 0]
        c = A[1, 1]
        b = A[0, 1]
        m = 0.5 * (a + c)
        d = math.hypot(0.5 * (a - c), b)
        return m - d, m + d
    if p == 3:
        a11 = A[0, 0]
        a22 = A[1, 1]
        a33 = A[2, 2]
        a12 = A[0, 1]
        a13 = A[0, 2]
        a23 = A[1, 2]
        q = (a11 + a22 + a33) / 3.0
        p1 = a12 * a12 + a13 * a13 + a23 * a23
        p2 = (a11 - q) ** 2 + (a22 - q) ** 2 + (a33 - q) ** 2 + 2.0 * p1
        scale = abs(a11) + abs(a22) + abs(a33) + 1e-300
        if p2 <= 1e-30 * scale * scale:
            return q, q
        pp = math.sqrt(p2 / 6.0)
        b11 = (a11 - q) / pp
        b22 = (a22 - q) / pp
        b33 = (a33 - q) / pp
        b12 = a12 / pp
        b13 = a13 / pp
        b23 = a23 / pp
        detb = (
            b11 * (b22 * b33 - b23 * b23)
            - b12 * (b12 * b33 - b23 * b13)
            + b13 * (b12 * b23 - b22 * b13)
        )
        r = detb / 2.0
        if r < -1.0:
            r = -1.0
        elif r > 1.0:
            r = 1.0
        phi = math.acos(r) / 3.0
        lmax = q + 2.0 * pp * math.cos(phi)
        lmin = q + 2.0 * pp * math.cos(phi + 2.0 * math.pi / 3.0)
        return lmin, lmax
    w = np.linalg.eigvalsh(np.ascontiguousarray(A[:p, :p]))
    return w[0], w[p - 1]


@njit(cache=True)
def _chol_solve(A, b, p, coef, L, work):
    """Solve the p x p SPD system using caller-provided scratch; False on pivot failure."""
    for i in range(p):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return False
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    # forward then backward substitution
    for i in range(p):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * work[k]
        work[i] = s / L[i, i]
    for i in range(p - 1, -1, -1):
        s = work[i]
        for k in range(i + 1, p):
            s -= L[k, i] * coef[k]
        coef[i] = s / L[i, i]
    return True


@njit(cache=True)
def _fit_at(
    qx,
    qy,
    h11,
    h12,
    h22,
    radius,
    order,
    cond_threshold,
    packed,
    use_sigma,
    cell_start,
    gx0,
    gy0,
    gnx,
    gny,
    coef,
    A,
    rhs,
    phi,
    L,
    work,
):
    """Accumulate the weighted normal equations around one query and solve them.

    ``packed`` rows are (x, y, value, variance) in cell order. Weights are
    exp(-dX^T Hinv dX) over the variance (or its square root) for samples
    with |dX| <= radius; the constant Gaussian prefactor cancels in the
    solve and is omitted. All scratch arrays are caller-provided so the hot
    loop performs no allocations.
    """
    p = _ncoef(order)
    A[:] = 0.0
    rhs[:] = 0.0
    count = 0
    r2 = radius * radius

    cx_lo = int(math.floor(qx - radius)) - gx0
    cx_hi = int(math.floor(qx + radius)) - gx0
    cy_lo = int(math.floor(qy - radius)) - gy0
    cy_hi = int(math.floor(qy + radius)) - gy0
    if cx_lo < 0:
        cx_lo = 0
    if cy_lo < 0:
        cy_lo = 0
    if cx_hi >= gnx:
        cx_hi = gnx - 1
    if cy_hi >= gny:
        cy_hi = gny - 1

    for cy in range(cy_lo, cy_hi + 1):
        row = cy * gnx
        for cx in range(cx_lo, cx_hi + 1):
            cell = row + cx
            for k in range(cell_start[cell], cell_start[cell + 1]):
                dx = packed[k, 0] - qx
                dy = packed[k, 1] - qy
                if dx * dx + dy * dy > r2:
                    continue
                q = h11 * dx * dx + 2.0 * h12 * dx * dy + h22 * dy * dy
                den = packed[k, 3]
                if use_sigma:
                    den = math.sqrt(den)
                w = math.exp(-q) / den
                phi[0] = 1.0
                if order >= 1:
                    phi[1] = dx
                    phi[2] = dy
                if order >= 2:
                    phi[3] = dx * dx
                    phi[4] = dx * dy
                    phi[5] = dy * dy
                for a in range(p):
                    wa = w * phi[a]
                    rhs[a] += wa * packed[k, 2]
                    for bcol in range(a, p):
                        A[a, bcol] += wa * phi[bcol]
                count += 1

    if count < p:
        return _TOO_FEW
    # mirror the upper triangle
    for a in range(p):
        for bcol in range(a + 1, p):
            A[bcol, a] = A[a, bcol]
    if p == 1:
        if A[0, 0] <= 0.0:
            return _TOO_FEW
        coef[0] = rhs[0] / A[0, 0]
        return _OK
    lmin, lmax = _sym_eig_range(A, p)
    if lmin <= 0.0 or lmax > cond_threshold * lmin:
        return _ILL_CONDITIONED
    if not _chol_solve(A, rhs, p, coef, L, work):
        return _ILL_CONDITIONED
    return _OK


@njit(cache=True, parallel=True)
def lpa_evaluate(
    qx,
    qy,
    an_h11,
    an_h12,
    an_h22,
    an_r0,
    iso_h11,
    iso_h12,
    iso_h22,
    iso_r0,
    two_phase,
    order0,
    max_radius,
    cond_threshold,
    packed,
    use_sigma,
    cell_start,
    gx0,
    gy0,
    gnx,
    gny,
    chunk_map,
    out_val,
    out_gx,
    out_gy,
):
    """Adaptive local polynomial fit at each query point.

    Per query: try the primary window at its base radius, expand the support
    by 1.5x up to max_radius on rank deficiency, fall back to the secondary
    (isotropic) window when two_phase is set, then reduce the polynomial
    order and repeat. Order 0 succeeds whenever at least one sample lies
    within max_radius; otherwise the output is NaN.

    Queries are processed in chunks of 1024 so scratch buffers are allocated
    once per chunk, not per pixel (heap traffic would serialize the threads).
    ``chunk_map`` permutes chunk order; an interleaved order keeps the static
    thread split balanced when cost varies across the frame (saturated
    regions carry fewer samples). Results are per-query, so the order never
    affects them.
    """
    m = qx.shape[0]
    chunk = 1024
    n_chunks = chunk_map.shape[0]
    for j in prange(n_chunks):
        c = chunk_map[j]
        coef = np.zeros(6)
        A = np.zeros((6, 6))
        rhs = np.zeros(6)
        phi = np.zeros(6)
        Lbuf = np.zeros((6, 6))
        work = np.zeros(6)
        for i in range(c * chunk, min((c + 1) * chunk, m)):
            done = False
            for order in range(order0, -1, -1):
                if done:
                    break
                nphase = 2 if two_phase else 1
                for phase in range(nphase):
                    if done:
                        break
                    if phase == 0:
                        h11 = an_h11[i]
                        h12 = an_h12[i]
                        h22 = an_h22[i]
                        r = an_r0[i]
                    else:
                        h11 = iso_h11[i]
                        h12 = iso_h12[i]
                        h22 = iso_h22[i]
                        r = iso_r0[i]
                    if r > max_radius:
                        r = max_radius
                    while True:
                        status = _fit_at(
                            qx[i], qy[i], h11, h12, h22, r, order, cond_threshold,
                            packed, use_sigma, cell_start, gx0, gy0, gnx, gny,
                            coef, A, rhs, phi, Lbuf, work,
                        )
                        if status == _OK:
                            out_val[i] = coef[0]
                            if order >= 1:
                                out_gx[i] = coef[1]
                                out_gy[i] = coef[2]
                            else:
                                out_gx[i] = np.nan
                                out_gy[i] = np.nan
                            done = True
                            break
                        if r >= max_radius * (1.0 - 1e-12):
                            break
                        r = min(r * 1.5, max_radius)
            if not done:
                out_val[i] = np.nan
                out_gx[i] = np.nan
                out_gy[i] = np.nan


@njit(cache=True)
def _eig2_minmax(a, b, c):
    m = 0.5 * (a + c)
    d = math.hypot(0.5 * (a - c), b)
    return m - d, m + d


@njit(cache=True, parallel=True)
def steering_field_kernel(
    gx,
    gy,
    half,
    wstd,
    lam1,
    lam2,
    alpha,
    sigma_max,
    theta,
    sigma,
    gamma,
):
    """Orientation/elongation/scaling parameters from windowed gradient energy.

    At each pixel the weighted gradient matrix G (rows sqrt(w) * grad) is
    summarized through the eigendecomposition of G^T G; singular values are
    the square roots of its eigenvalues. NaN gradients are skipped; a window
    with no finite gradients yields identity steering.
    """
    h, w = gx.shape
    for yy in prange(h):
        for xx in range(w):
            s11 = 0.0
            s12 = 0.0
            s22 = 0.0
            n = 0
            for dy in range(-half, half + 1):
                iy = yy + dy
                if iy < 0 or iy >= h:
                    continue
                for dx in range(-half, half + 1):
                    ix = xx + dx
                    if ix < 0 or ix >= w:
                        continue
                    g1 = gx[iy, ix]
                    g2 = gy[iy, ix]
                    if not (math.isfinite(g1) and math.isfinite(g2)):
                        continue
                    wgt = math.exp(-(dx * dx + dy * dy) / (2.0 * wstd * wstd))
                    s11 += wgt * g1 * g1
                    s12 += wgt * g1 * g2
                    s22 += wgt * g2 * g2
                    n += 1
            if n == 0:
                theta[yy, xx] = 0.0
                sigma[yy, xx] = 1.0
                gamma[yy, xx] = 1.0
                continue
            lmin, lmax = _eig2_minmax(s11, s12, s22)
            if lmin < 0.0:
                lmin = 0.0
            s1 = math.sqrt(lmax)
            s2 = math.sqrt(lmin)
            # eigenvector of G^T G for the smaller eigenvalue = second column of V
            if abs(s12) > 1e-300:
                v1 = s12
                v2 = lmin - s11
                if v1 == 0.0 and v2 == 0.0:
                    v1 = 1.0
            else:
                if s11 <= s22:
                    v1 = 1.0
                    v2 = 0.0
                else:
                    v1 = 0.0
                    v2 = 1.0
            th = math.atan2(v1, v2)
            if th <= -0.5 * math.pi:
                th += math.pi
            elif th > 0.5 * math.pi:
                th -= math.pi
            denom = s2 + lam1
            if denom == 0.0:
                sg = 1.0 if s1 + lam1 == 0.0 else sigma_max
            else:
                sg = (s1 + lam1) / denom
            if sg > sigma_max:
                sg = sigma_max
            theta[yy, xx] = th
            sigma[yy, xx] = sg
            gamma[yy, xx] = ((s1 * s2 + lam2) / n) ** alpha


def warmup():
    """Trigger JIT compilation on a tiny problem so timed runs are steady-state."""
    sx = np.array([0.0, 1.0, 0.0, 1.0, 0.5])
    sy = np.array([0.0, 0.0, 1.0, 1.0, 0.5])
    cell = (np.floor(sy).astype(np.int64)) * 2 + np.floor(sx).astype(np.int64)
    order = np.argsort(cell, kind="stable")
    packed = np.column_stack(
        [sx[order], sy[order], np.arange(5.0)[order], np.ones(5)]
    )
    counts = np.bincount(cell, minlength=4)
    cell_start = np.zeros(5, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])
    q = np.array([0.5])
    ones = np.ones(1)
    out = np.zeros(1)
    ogx = np.zeros(1)
    ogy = np.zeros(1)
    chunk_map = np.zeros(1, dtype=np.int64)
    for order0 in (0, 1, 2):
        for use_sigma in (False, True):
            lpa_evaluate(
                q, q, ones, ones * 0.0, ones, ones * 2.0,
                ones, ones * 0.0, ones, ones * 2.0,
                True, order0, 4.0, 1e8,
                packed, use_sigma, cell_start, 0, 0, 2, 2,
                chunk_map,
                out, ogx, ogy,
            )
    g = np.zeros((4, 4))
    steering_field_kernel(g, g, 1, 1.0, 1.0, 0.001, 0.0, 50.0,
                          np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)))
