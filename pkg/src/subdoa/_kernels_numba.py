"""Batched small-matrix kernels, numba implementation.

Mirrors ``subdoa._kernels_numpy`` function for function; see that module
for the contracts.  All kernels are nopython-compiled with on-disk
caching so the JIT cost is paid once per machine.
"""

import numpy as np
from numba import njit

MAX_SWEEPS = 30
OFF_TOL = 1e-13
COND_LIMIT = 1e10
PHASE_TOL = 1e-12
ALPHA_TOL = 1e-12

_LEVELS = np.array([0.0, 1e-10, 1e-8, 1e-6])


@njit(cache=True)
def _off_norm_single(a):
    n = a.shape[0]
    off = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            off += abs(a[i, j]) ** 2
    return np.sqrt(2.0 * off)


@njit(cache=True)
def _jacobi_single(work, v):
    n = work.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += abs(work[i, j]) ** 2
    limit = OFF_TOL * max(np.sqrt(scale), 1e-300)
    for _ in range(MAX_SWEEPS):
        if _off_norm_single(work) <= limit:
            return True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = work[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                tau = (work[q, q].real - work[p, p].real) / (2.0 * mag)
                t = 1.0 / (abs(tau) + np.hypot(1.0, tau))
                if tau < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                sp = s * np.conj(phase)
                cp = c * np.conj(phase)
                for i in range(n):
                    colp = work[i, p]
                    colq = work[i, q]
                    work[i, p] = c * colp - sp * colq
                    work[i, q] = s * colp + cp * colq
                for j in range(n):
                    rowp = work[p, j]
                    rowq = work[q, j]
                    work[p, j] = c * rowp - s * phase * rowq
                    work[q, j] = s * rowp + c * phase * rowq
                work[p, q] = 0.0
                work[q, p] = 0.0
                for i in range(n):
                    vcp = v[i, p]
                    vcq = v[i, q]
                    v[i, p] = c * vcp - sp * vcq
                    v[i, q] = s * vcp + cp * vcq
    return _off_norm_single(work) <= limit


@njit(cache=True)
def jacobi_evd(a):
    b = a.shape[0]
    n = a.shape[1]
    work = a.copy()
    w = np.empty((b, n), np.float64)
    v = np.zeros((b, n, n), np.complex128)
    ok = np.zeros(b, np.bool_)
    wtmp = np.empty(n, np.float64)
    vtmp = np.empty((n, n), np.complex128)
    used = np.empty(n, np.bool_)
    for ib in range(b):
        for i in range(n):
            v[ib, i, i] = 1.0
        ok[ib] = _jacobi_single(work[ib], v[ib])
        for i in range(n):
            wtmp[i] = work[ib, i, i].real
        # stable descending order, ties keep index order
        for i in range(n):
            used[i] = False
        for k in range(n):
            best = -1
            for i in range(n):
                if not used[i] and (best < 0 or wtmp[i] > wtmp[best]):
                    best = i
            used[best] = True
            w[ib, k] = wtmp[best]
            for i in range(n):
                vtmp[i, k] = v[ib, i, best]
        # deterministic phase per column
        for k in range(n):
            ref = 0.0 + 0.0j
            for i in range(n):
                if abs(vtmp[i, k]) > PHASE_TOL:
                    ref = vtmp[i, k]
                    break
            mag = abs(ref)
            if mag > 0.0:
                rot = np.conj(ref) / mag
                for i in range(n):
                    vtmp[i, k] = vtmp[i, k] * rot
        for i in range(n):
            for k in range(n):
                v[ib, i, k] = vtmp[i, k]
    return w, v, ok


@njit(cache=True)
def _chol_single(a, loading, out):
    n = a.shape[0]
    tr = 0.0
    for i in range(n):
        tr += a[i, i].real
    floor = max(tr / n, 0.0) * 1e-15
    for j in range(n):
        acc = a[j, j].real + loading
        for k in range(j):
            acc -= out[j, k].real ** 2 + out[j, k].imag ** 2
        if acc <= floor:
            return False
        piv = np.sqrt(acc)
        out[j, j] = piv
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= out[i, k] * np.conj(out[j, k])
            out[i, j] = s / piv
    return True


@njit(cache=True)
def cholesky(a):
    b = a.shape[0]
    n = a.shape[1]
    low = np.zeros((b, n, n), np.complex128)
    loading = np.zeros(b, np.float64)
    ok = np.zeros(b, np.bool_)
    for ib in range(b):
        tr = 0.0
        for i in range(n):
            tr += a[ib, i, i].real
        scale = tr / n
        for lev in range(_LEVELS.shape[0]):
            load = _LEVELS[lev] * scale
            for i in range(n):
                for j in range(n):
                    low[ib, i, j] = 0.0
            if _chol_single(a[ib], load, low[ib]):
                loading[ib] = load
                ok[ib] = True
                break
        if not ok[ib]:
            for i in range(n):
                for j in range(n):
                    low[ib, i, j] = 0.0
    return low, loading, ok


@njit(cache=True)
def solve_lower(low, rhs):
    b = rhs.shape[0]
    n = rhs.shape[1]
    m = rhs.shape[2]
    x = np.empty((b, n, m), np.complex128)
    for ib in range(b):
        for col in range(m):
            for i in range(n):
                s = rhs[ib, i, col]
                for k in range(i):
                    s -= low[ib, i, k] * x[ib, k, col]
                x[ib, i, col] = s / low[ib, i, i]
    return x


@njit(cache=True)
def solve_lower_herm(low, rhs):
    b = rhs.shape[0]
    n = rhs.shape[1]
    m = rhs.shape[2]
    x = np.empty((b, n, m), np.complex128)
    for ib in range(b):
        for col in range(m):
            for i in range(n - 1, -1, -1):
                s = rhs[ib, i, col]
                for k in range(i + 1, n):
                    s -= np.conj(low[ib, k, i]) * x[ib, k, col]
                x[ib, i, col] = s / np.conj(low[ib, i, i])
    return x


@njit(cache=True)
def whiten(phi, low):
    b = phi.shape[0]
    n = phi.shape[1]
    out = np.empty((b, n, n), np.complex128)
    tmp = np.empty((n, n), np.complex128)
    tmp2 = np.empty((n, n), np.complex128)
    for ib in range(b):
        for col in range(n):
            for i in range(n):
                s = phi[ib, i, col]
                for k in range(i):
                    s -= low[ib, i, k] * tmp[k, col]
                tmp[i, col] = s / low[ib, i, i]
        for col in range(n):
            for i in range(n):
                s = np.conj(tmp[col, i])
                for k in range(i):
                    s -= low[ib, i, k] * tmp2[k, col]
                tmp2[i, col] = s / low[ib, i, i]
        for i in range(n):
            for j in range(n):
                out[ib, i, j] = np.conj(tmp2[j, i])
        for i in range(n):
            out[ib, i, i] = out[ib, i, i].real + 0.0j
            for j in range(i + 1, n):
                m = 0.5 * (out[ib, i, j] + np.conj(out[ib, j, i]))
                out[ib, i, j] = m
                out[ib, j, i] = np.conj(m)
    return out


@njit(cache=True)
def completion_r(q_ha, q_e):
    b = q_ha.shape[0]
    m = q_ha.shape[1]
    r = np.zeros((b, m), np.complex128)
    cond = np.empty(b, np.float64)
    ok = np.zeros(b, np.bool_)
    qh = np.empty((m, m), np.complex128)
    gram = np.empty((m, m), np.complex128)
    gv = np.empty((m, m), np.complex128)
    x = np.empty(m, np.complex128)
    for ib in range(b):
        for i in range(m):
            for j in range(m):
                qh[i, j] = np.conj(q_ha[ib, j, i])
        for i in range(m):
            for j in range(m):
                s = 0.0 + 0.0j
                for k in range(m):
                    s += qh[i, k] * q_ha[ib, k, j]
                gram[i, j] = s
        for i in range(m):
            for j in range(m):
                gv[i, j] = 0.0
            gv[i, i] = 1.0
        gwork = gram.copy()
        _jacobi_single(gwork, gv)
        lo = gwork[0, 0].real
        hi = gwork[0, 0].real
        for i in range(1, m):
            d = gwork[i, i].real
            if d < lo:
                lo = d
            if d > hi:
                hi = d
        if lo > 0.0:
            cond[ib] = np.sqrt(max(hi, 0.0) / lo)
        else:
            cond[ib] = np.inf
        if not (np.isfinite(cond[ib]) and cond[ib] <= COND_LIMIT):
            continue
        # LU with partial pivoting on qh, rhs conj(q_e)
        lu = qh.copy()
        for i in range(m):
            x[i] = np.conj(q_e[ib, i])
        singular = False
        for k in range(m):
            pmax = abs(lu[k, k])
            prow = k
            for i in range(k + 1, m):
                if abs(lu[i, k]) > pmax:
                    pmax = abs(lu[i, k])
                    prow = i
            if pmax < 1e-300:
                singular = True
                break
            if prow != k:
                for j in range(m):
                    t = lu[k, j]
                    lu[k, j] = lu[prow, j]
                    lu[prow, j] = t
                t = x[k]
                x[k] = x[prow]
                x[prow] = t
            for i in range(k + 1, m):
                f = lu[i, k] / lu[k, k]
                lu[i, k] = f
                for j in range(k + 1, m):
                    lu[i, j] -= f * lu[k, j]
                x[i] -= f * x[k]
        if singular:
            cond[ib] = np.inf
            continue
        for i in range(m - 1, -1, -1):
            s = x[i]
            for j in range(i + 1, m):
                s -= lu[i, j] * x[j]
            x[i] = s / lu[i, i]
        for i in range(m):
            r[ib, i] = x[i]
        ok[ib] = True
    return r, cond, ok


@njit(cache=True)
def complete_elements(a_set_w, r):
    b = a_set_w.shape[0]
    ndir = a_set_w.shape[1]
    m = a_set_w.shape[2]
    elem = np.zeros((b, ndir), np.complex128)
    degen = np.zeros((b, ndir), np.bool_)
    for ib in range(b):
        for i in range(ndir):
            denom = 0.0 + 0.0j
            norm2 = 0.0
            for k in range(m):
                av = a_set_w[ib, i, k]
                denom += np.conj(av) * r[ib, k]
                norm2 += av.real ** 2 + av.imag ** 2
            if norm2 <= 0.0 or abs(denom) < ALPHA_TOL * norm2:
                degen[ib, i] = True
            else:
                elem[ib, i] = -norm2 / denom
    return elem, degen


@njit(cache=True)
def music(principal, cand):
    b = cand.shape[0]
    ndir = cand.shape[1]
    n = cand.shape[2]
    p = np.empty((b, ndir), np.float64)
    for ib in range(b):
        for i in range(ndir):
            proj = 0.0 + 0.0j
            cn2 = 0.0
            for k in range(n):
                cv = cand[ib, i, k]
                proj += np.conj(principal[ib, k]) * cv
                cn2 += cv.real ** 2 + cv.imag ** 2
            resid = cn2 - (proj.real ** 2 + proj.imag ** 2)
            if resid < 1e-30:
                resid = 1e-30
            p[ib, i] = 1.0 / resid
    return p


@njit(cache=True)
def rtf_match(ghat, cand):
    b = cand.shape[0]
    ndir = cand.shape[1]
    n = cand.shape[2]
    p = np.empty((b, ndir), np.float64)
    for ib in range(b):
        gn2 = 0.0
        for k in range(n):
            gv = ghat[ib, k]
            gn2 += gv.real ** 2 + gv.imag ** 2
        gn = np.sqrt(gn2)
        for i in range(ndir):
            ip = 0.0 + 0.0j
            cn2 = 0.0
            for k in range(n):
                cv = cand[ib, i, k]
                ip += np.conj(cv) * ghat[ib, k]
                cn2 += cv.real ** 2 + cv.imag ** 2
            denom = np.sqrt(cn2) * gn
            if denom > 0.0:
                cosang = abs(ip) / denom
            else:
                cosang = 0.0
            if cosang > 1.0:
                cosang = 1.0
            p[ib, i] = -np.arccos(cosang)
    return p


@njit(cache=True)
def rtf_from_whitened(low, a_set_w, ref):
    b = a_set_w.shape[0]
    ndir = a_set_w.shape[1]
    n = a_set_w.shape[2]
    g = np.zeros((b, ndir, n), np.complex128)
    degen = np.zeros((b, ndir), np.bool_)
    raw = np.empty(n, np.complex128)
    for ib in range(b):
        for i in range(ndir):
            nrm2 = 0.0
            for row in range(n):
                s = 0.0 + 0.0j
                for k in range(n):
                    s += low[ib, row, k] * a_set_w[ib, i, k]
                raw[row] = s
                nrm2 += s.real ** 2 + s.imag ** 2
            refv = raw[ref]
            if abs(refv) < PHASE_TOL * np.sqrt(nrm2):
                degen[ib, i] = True
            else:
                for row in range(n):
                    g[ib, i, row] = raw[row] / refv
    return g, degen


@njit(cache=True)
def rir_accumulate(length, img_pos, amps, mic, fs, c):
    n_taps = 16
    half = n_taps // 2
    h = np.zeros(length, np.float64)
    tw = n_taps / fs
    for i in range(img_pos.shape[0]):
        dx = img_pos[i, 0] - mic[0]
        dy = img_pos[i, 1] - mic[1]
        dz = img_pos[i, 2] - mic[2]
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        if d < 1e-3:
            d = 1e-3
        delay = d / c * fs
        amp = amps[i] / (4.0 * np.pi * d)
        start = int(np.ceil(delay - half))
        for j in range(n_taps):
            idx = start + j
            if idx < 0 or idx >= length:
                continue
            t = (idx - delay) / fs
            win = 0.5 * (1.0 + np.cos(2.0 * np.pi * t / tw))
            x = fs * t
            if abs(x) < 1e-10:
                si = 1.0
            else:
                si = np.sin(np.pi * x) / (np.pi * x)
            h[idx] += amp * win * si
    return h
