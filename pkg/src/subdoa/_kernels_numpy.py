"""Batched small-matrix kernels, pure-numpy implementation.

Every routine takes a leading batch axis so a single call covers all
frequency bins of one frame.  ``subdoa._kernels_numba`` mirrors this
module function for function; ``subdoa.backend`` selects one of the two
at import time.  Kernels never raise on per-matrix trouble: failures are
reported through ``ok``/mask outputs and the caller decides.
"""

import numpy as np

# Diagonal loading escalation, relative to trace/dim of each matrix.
LOADING_LEVELS = (0.0, 1e-10, 1e-8, 1e-6)
MAX_SWEEPS = 30
OFF_TOL = 1e-13
COND_LIMIT = 1e10
PHASE_TOL = 1e-12
ALPHA_TOL = 1e-12


def _off_norm(a):
    # summed entry by entry: total-minus-diagonal cancels catastrophically
    n = a.shape[1]
    acc = np.zeros(a.shape[0])
    for i in range(n):
        for j in range(i + 1, n):
            acc += np.abs(a[:, i, j]) ** 2 + np.abs(a[:, j, i]) ** 2
    return np.sqrt(acc)


def _rotate(work, v, p, q):
    """One cyclic-Jacobi rotation zeroing the (p, q) entry of every matrix."""
    apq = work[:, p, q].copy()
    mag = np.abs(apq)
    active = mag > 1e-300
    safe = np.where(active, mag, 1.0)
    phase = np.where(active, apq / safe, 1.0 + 0.0j)
    tau = (work[:, q, q].real - work[:, p, p].real) / (2.0 * safe)
    t = 1.0 / (np.abs(tau) + np.hypot(1.0, tau))
    t = np.where(tau < 0.0, -t, t)
    t = np.where(active, t, 0.0)
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    sp = s * np.conj(phase)
    cp = c * np.conj(phase)

    colp = work[:, :, p].copy()
    colq = work[:, :, q].copy()
    work[:, :, p] = c[:, None] * colp - sp[:, None] * colq
    work[:, :, q] = s[:, None] * colp + cp[:, None] * colq
    rowp = work[:, p, :].copy()
    rowq = work[:, q, :].copy()
    work[:, p, :] = c[:, None] * rowp - (s * phase)[:, None] * rowq
    work[:, q, :] = s[:, None] * rowp + (c * phase)[:, None] * rowq
    work[:, p, q] = 0.0
    work[:, q, p] = 0.0

    vcp = v[:, :, p].copy()
    vcq = v[:, :, q].copy()
    v[:, :, p] = c[:, None] * vcp - sp[:, None] * vcq
    v[:, :, q] = s[:, None] * vcp + cp[:, None] * vcq


def _fix_phase(v):
    """Make the first non-negligible entry of each column real non-negative."""
    absv = np.abs(v)
    first = np.argmax(absv > PHASE_TOL, axis=1)
    ref = np.take_along_axis(v, first[:, None, :], axis=1)[:, 0, :]
    mag = np.abs(ref)
    rot = np.where(mag > 0.0, np.conj(ref) / np.where(mag > 0.0, mag, 1.0), 1.0 + 0.0j)
    v *= rot[:, None, :]


def jacobi_evd(a):
    """Hermitian eigendecomposition of a (B, n, n) stack via cyclic Jacobi.

    Return (eigenvalues, eigenvectors, ok): eigenvalues descending, ties kept
    in index order, eigenvector columns carry a deterministic phase.
    """
    work = np.array(a, dtype=np.complex128, copy=True)
    b, n = work.shape[0], work.shape[1]
    v = np.zeros_like(work)
    idx = np.arange(n)
    v[:, idx, idx] = 1.0
    scale = np.sqrt(np.sum(np.abs(work) ** 2, axis=(1, 2)))
    limit = OFF_TOL * np.maximum(scale, 1e-300)
    for _ in range(MAX_SWEEPS):
        if np.all(_off_norm(work) <= limit):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                _rotate(work, v, p, q)
    ok = _off_norm(work) <= limit
    w = np.diagonal(work, axis1=1, axis2=2).real.copy()
    order = np.argsort(-w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    _fix_phase(v)
    return w, np.ascontiguousarray(v), ok


def _chol_attempt(a, loading):
    b, n = a.shape[0], a.shape[1]
    low = np.zeros_like(a)
    ok = np.ones(b, dtype=bool)
    scale = np.maximum(np.trace(a, axis1=1, axis2=2).real / n, 0.0)
    floor = scale * 1e-15
    for j in range(n):
        d = a[:, j, j].real + loading - np.sum(np.abs(low[:, j, :j]) ** 2, axis=1)
        ok &= d > floor
        piv = np.sqrt(np.where(d > 0.0, d, 1.0))
        low[:, j, j] = np.where(ok, piv, 1.0)
        for i in range(j + 1, n):
            acc = a[:, i, j].astype(np.complex128)
            if j > 0:
                acc = acc - np.einsum("bk,bk->b", low[:, i, :j], np.conj(low[:, j, :j]))
            low[:, i, j] = acc / low[:, j, j]
    low[~ok] = 0.0
    return low, ok


def cholesky(a):
    """Lower Cholesky factors of a (B, n, n) stack with loading escalation.

    Return (L, loading, ok); ``loading`` is the absolute diagonal load that
    made each factorization succeed (0 when none was needed).
    """
    a = np.asarray(a, dtype=np.complex128)
    b, n = a.shape[0], a.shape[1]
    scale = np.trace(a, axis1=1, axis2=2).real / n
    low = np.zeros_like(a)
    loading = np.zeros(b)
    done = np.zeros(b, dtype=bool)
    for level in LOADING_LEVELS:
        pending = ~done
        if not np.any(pending):
            break
        load = level * scale[pending]
        sub, ok = _chol_attempt(a[pending], load)
        hit = np.where(pending)[0][ok]
        low[hit] = sub[ok]
        loading[hit] = load[ok]
        done[hit] = True
    return low, loading, done


def solve_lower(low, rhs):
    """Solve L x = b for a (B, n, n) stack of lower factors, b (B, n, m)."""
    b, n, m = rhs.shape
    x = np.zeros_like(rhs, dtype=np.complex128)
    for i in range(n):
        acc = rhs[:, i, :].astype(np.complex128)
        if i > 0:
            acc = acc - np.einsum("bk,bkm->bm", low[:, i, :i], x[:, :i, :])
        x[:, i, :] = acc / low[:, i, i][:, None]
    return x


def solve_lower_herm(low, rhs):
    """Solve L^H x = b for a (B, n, n) stack of lower factors, b (B, n, m)."""
    b, n, m = rhs.shape
    x = np.zeros_like(rhs, dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        acc = rhs[:, i, :].astype(np.complex128)
        if i < n - 1:
            acc = acc - np.einsum("bk,bkm->bm", np.conj(low[:, i + 1 :, i]), x[:, i + 1 :, :])
        x[:, i, :] = acc / np.conj(low[:, i, i])[:, None]
    return x


def whiten(phi, low):
    """Congruence transform L^{-1} phi L^{-H} via two triangular solves."""
    half = solve_lower(low, phi)
    full = solve_lower(low, np.conj(np.transpose(half, (0, 2, 1))))
    out = np.conj(np.transpose(full, (0, 2, 1)))
    return 0.5 * (out + np.conj(np.transpose(out, (0, 2, 1))))


def completion_r(q_ha, q_e):
    """Solve Q_haH r = conj(q_e) per matrix with a condition guard.

    Return (r, cond, ok); rows with cond > COND_LIMIT (or exactly singular
    blocks) come back zero with ok False.
    """
    q_ha = np.asarray(q_ha, dtype=np.complex128)
    q_e = np.asarray(q_e, dtype=np.complex128)
    b, mdim = q_e.shape
    qh = np.conj(np.transpose(q_ha, (0, 2, 1)))
    gram = qh @ q_ha
    wg = np.linalg.eigvalsh(gram)
    lo = wg[:, 0]
    hi = np.maximum(wg[:, -1], 0.0)
    cond = np.where(lo > 0.0, np.sqrt(hi / np.where(lo > 0.0, lo, 1.0)), np.inf)
    ok = np.isfinite(cond) & (cond <= COND_LIMIT)
    r = np.zeros((b, mdim), dtype=np.complex128)
    if np.any(ok):
        sel = np.where(ok)[0]
        try:
            r[sel] = np.linalg.solve(qh[sel], np.conj(q_e)[sel, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            for i in sel:
                try:
                    r[i] = np.linalg.solve(qh[i], np.conj(q_e)[i])
                except np.linalg.LinAlgError:
                    ok[i] = False
                    cond[i] = np.inf
    return r, cond, ok


def complete_elements(a_set_w, r):
    """Least-squares completion element per (bin, direction).

    a_set_w: (B, I, M) whitened prototype sub-vectors, r: (B, M).
    Return (elem, degen): elem = -|a|^2 / (a^H r), degenerate entries zero.
    """
    denom = np.einsum("bim,bm->bi", np.conj(a_set_w), r)
    norm2 = np.einsum("bim,bim->bi", np.conj(a_set_w), a_set_w).real
    degen = np.abs(denom) < ALPHA_TOL * norm2
    degen |= norm2 <= 0.0
    safe = np.where(degen, 1.0, denom)
    elem = np.where(degen, 0.0, -norm2 / safe)
    return elem.astype(np.complex128), degen


def music(principal, cand):
    """Subspace pseudo-spectrum 1 / ||Q_n^H c||^2 for unit principal u.

    Uses ||c||^2 - |u^H c|^2, exact for a unitary eigenbasis.
    """
    proj = np.einsum("bn,bin->bi", np.conj(principal), cand)
    cn2 = np.einsum("bin,bin->bi", np.conj(cand), cand).real
    resid = np.maximum(cn2 - np.abs(proj) ** 2, 1e-30)
    return 1.0 / resid


def rtf_match(ghat, cand):
    """Negated Hermitian angle between an estimate and each candidate."""
    ip = np.einsum("bin,bn->bi", np.conj(cand), ghat)
    gn = np.sqrt(np.einsum("bn,bn->b", np.conj(ghat), ghat).real)
    cn = np.sqrt(np.einsum("bin,bin->bi", np.conj(cand), cand).real)
    denom = cn * gn[:, None]
    cosang = np.where(denom > 0.0, np.abs(ip) / np.where(denom > 0.0, denom, 1.0), 0.0)
    return -np.arccos(np.clip(cosang, 0.0, 1.0))


def rtf_from_whitened(low, a_set_w, ref):
    """De-whiten prototype vectors and normalize to the reference channel.

    Return (g, degen): g = (L a) / (L a)[ref]; degenerate reference entries
    (|.| < PHASE_TOL * norm) give a zero vector and a mask flag.
    """
    raw = np.einsum("bnm,bim->bin", low, a_set_w)
    nrm = np.sqrt(np.einsum("bin,bin->bi", np.conj(raw), raw).real)
    refv = raw[:, :, ref]
    degen = np.abs(refv) < PHASE_TOL * nrm
    safe = np.where(degen, 1.0, refv)
    g = np.where(degen[:, :, None], 0.0, raw / safe[:, :, None])
    return g.astype(np.complex128), degen


def rir_accumulate(length, img_pos, amps, mic, fs, c):
    """Accumulate windowed-sinc taps for every image source into one RIR.

    16-tap Hann-windowed sinc at the fractional direct delay of each image;
    amplitude amps / (4 pi d).
    """
    n_taps = 16
    half = n_taps // 2
    d = np.sqrt(np.sum((img_pos - mic[None, :]) ** 2, axis=1))
    d = np.maximum(d, 1e-3)
    delay = d / c * fs
    amp = amps / (4.0 * np.pi * d)
    start = np.ceil(delay - half).astype(np.int64)
    idx = start[:, None] + np.arange(n_taps)[None, :]
    t = (idx - delay[:, None]) / fs
    tw = n_taps / fs
    win = 0.5 * (1.0 + np.cos(2.0 * np.pi * t / tw))
    taps = amp[:, None] * win * np.sinc(fs * t)
    valid = (idx >= 0) & (idx < length)
    h = np.bincount(idx[valid], weights=taps[valid], minlength=length)
    return h[:length]
