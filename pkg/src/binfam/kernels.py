"""Hot inner loops, each in a numba and a vectorised-numpy flavour.

The public wrappers dispatch on :data:`binfam._accel.BACKEND` unless a
``backend=`` override is passed.  Both flavours consume the same pre-drawn
uniforms, so a given seed produces the same draws on either path.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from binfam import _accel
from binfam._accel import njit

__all__ = [
    "logistic_chain_sample",
    "logistic_chain_logpdf",
    "linquad_chain",
    "bvn_cdf",
    "exclusion_sum",
    "alias_build",
]


def _pick(backend: str | None) -> str:
    b = _accel.BACKEND if backend is None else backend
    if b == "numba" and not _accel.HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    if b not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {b!r}")
    return b


# ---------------------------------------------------------------------------
# logistic conditional chains
# ---------------------------------------------------------------------------


@njit
def _softplus(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit
def _logistic_sample_nb(B, U):
    m, d = U.shape
    Y = np.zeros((m, d), dtype=np.uint8)
    logp = np.zeros(m)
    for k in range(m):
        lp = 0.0
        for i in range(d):
            eta = B[i, i]
            for j in range(i):
                # branch-free: the bits are close to coin flips, so a test mispredicts
                eta += B[i, j] * Y[k, j]
            e = math.exp(-abs(eta))
            r = 1.0 / (1.0 + e) if eta >= 0.0 else e / (1.0 + e)
            # softplus(+-eta) = max(+-eta, 0) + log1p(e)
            if U[k, i] < r:
                Y[k, i] = 1
                lp -= max(-eta, 0.0) + math.log1p(e)
            else:
                lp -= max(eta, 0.0) + math.log1p(e)
        logp[k] = lp
    return Y, logp


@njit
def _logistic_logpdf_nb(B, Y):
    m, d = Y.shape
    logp = np.zeros(m)
    for k in range(m):
        lp = 0.0
        for i in range(d):
            eta = B[i, i]
            for j in range(i):
                # branch-free: the bits are close to coin flips, so a test mispredicts
                eta += B[i, j] * Y[k, j]
            if Y[k, i]:
                lp -= _softplus(-eta)
            else:
                lp -= _softplus(eta)
        logp[k] = lp
    return logp


def _softplus_np(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _logistic_sample_np(B, U):
    m, d = U.shape
    Y = np.zeros((m, d), dtype=np.uint8)
    Yf = np.zeros((m, d))
    logp = np.zeros(m)
    for i in range(d):
        eta = B[i, i] + Yf[:, :i] @ B[i, :i]
        e = np.exp(-np.abs(eta))
        r = np.where(eta >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
        hit = U[:, i] < r
        Y[:, i] = hit
        Yf[:, i] = hit
        logp -= np.where(hit, _softplus_np(-eta), _softplus_np(eta))
    return Y, logp


def _logistic_logpdf_np(B, Y):
    Yf = Y.astype(np.float64)
    eta = Yf @ np.tril(B, -1).T + np.diag(B)
    return -np.where(Y.astype(bool), _softplus_np(-eta), _softplus_np(eta)).sum(axis=1)


def logistic_chain_sample(B, U, backend=None):
    """Run the logistic chain on uniforms ``U`` (m x d); returns (rows, log-probs)."""
    B = np.ascontiguousarray(B, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    if _pick(backend) == "numba":
        return _logistic_sample_nb(B, U)
    return _logistic_sample_np(B, U)


def logistic_chain_logpdf(B, Y, backend=None):
    B = np.ascontiguousarray(B, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.uint8)
    if _pick(backend) == "numba":
        return _logistic_logpdf_nb(B, Y)
    return _logistic_logpdf_np(B, Y)


# ---------------------------------------------------------------------------
# linear-quadratic chain (sampling when Y is None, else evaluation)
# ---------------------------------------------------------------------------


def _linquad_constants(A):
    d = A.shape[0]
    rowsuf = np.array([A[i, i + 1:].sum() for i in range(d)])
    tail = np.array([A[i + 1:, i + 1:].sum() + np.trace(A[i + 1:, i + 1:]) for i in range(d)])
    return rowsuf, tail


@njit
def _linquad_nb(A, a0, rowsuf, tail, U, Yin, sampling, force, tol):
    m = U.shape[0] if sampling else Yin.shape[0]
    d = A.shape[0]
    Y = np.zeros((m, d), dtype=np.uint8)
    logp = np.zeros(m)
    h = np.zeros(d)
    bad_row = -1
    bad_comp = -1
    for k in range(m):
        for j in range(d):
            h[j] = 0.0
        q = 0.0
        lp = 0.0
        for i in range(d):
            hs = 0.0
            for j in range(i + 1, d):
                hs += h[j]
            s0 = 4.0 * a0 + 4.0 * q + 4.0 * hs + tail[i]
            s1 = s0 + 4.0 * (2.0 * h[i] + A[i, i] + rowsuf[i])
            if s0 < -tol or s1 < -tol:
                if not force:
                    return Y, logp, k, i
                if bad_row < 0:
                    bad_row = k
                    bad_comp = i
            if s0 < 0.0:
                s0 = 0.0
            if s1 < 0.0:
                s1 = 0.0
            tot = s0 + s1
            if sampling:
                if tot > 0.0:
                    g = 1 if U[k, i] * tot < s1 else 0
                else:
                    g = 1 if U[k, i] < 0.5 else 0
            else:
                g = Yin[k, i]
            if tot > 0.0:
                num = s1 if g else s0
                lp += math.log(num / tot) if num > 0.0 else -math.inf
            else:
                lp += math.log(0.5)
            Y[k, i] = g
            if g:
                q += 2.0 * h[i] + A[i, i]
                for j in range(d):
                    h[j] += A[i, j]
        logp[k] = lp
    return Y, logp, bad_row, bad_comp


def _linquad_np(A, a0, rowsuf, tail, U, Yin, sampling, force, tol):
    m = U.shape[0] if sampling else Yin.shape[0]
    d = A.shape[0]
    Y = np.zeros((m, d), dtype=np.uint8)
    logp = np.zeros(m)
    h = np.zeros((m, d))
    q = np.zeros(m)
    first_bad = np.full(m, -1, dtype=np.int64)
    for i in range(d):
        hs = h[:, i + 1:].sum(axis=1)
        s0 = 4.0 * a0 + 4.0 * q + 4.0 * hs + tail[i]
        s1 = s0 + 4.0 * (2.0 * h[:, i] + A[i, i] + rowsuf[i])
        neg = (s0 < -tol) | (s1 < -tol)
        first_bad[neg & (first_bad < 0)] = i
        s0 = np.maximum(s0, 0.0)
        s1 = np.maximum(s1, 0.0)
        tot = s0 + s1
        pos = tot > 0.0
        safe_tot = np.where(pos, tot, 1.0)
        if sampling:
            g = np.where(pos, U[:, i] * tot < s1, U[:, i] < 0.5)
        else:
            g = Yin[:, i].astype(bool)
        num = np.where(g, s1, s0)
        with np.errstate(divide="ignore"):
            logp += np.where(pos, np.log(num / safe_tot), math.log(0.5))
        Y[:, i] = g
        gi = g.astype(np.float64)
        q += gi * (2.0 * h[:, i] + A[i, i])
        h += gi[:, None] * A[i][None, :]
    bad = np.flatnonzero(first_bad >= 0)
    if bad.size:
        return Y, logp, int(bad[0]), int(first_bad[bad[0]])
    return Y, logp, -1, -1


def linquad_chain(A, a0, U=None, Y=None, force=False, tol=1e-12, backend=None):
    """Chain-rule pass over the linear-quadratic family.

    Exactly one of ``U`` (uniforms, sampling) or ``Y`` (rows, evaluation) is
    given.  Returns ``(rows, logp, bad_row, bad_comp)``; ``bad_row`` is -1
    when every queried partial sum was nonnegative.  Without ``force`` the pass
    stops at the first negative partial sum.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    d = A.shape[0]
    sampling = Y is None
    if sampling == (U is None):
        raise ValueError("pass exactly one of U or Y")
    if sampling:
        U = np.ascontiguousarray(U, dtype=np.float64)
        Yin = np.zeros((0, d), dtype=np.uint8)
    else:
        Yin = np.ascontiguousarray(Y, dtype=np.uint8)
        U = np.zeros((0, d))
    rowsuf, tail = _linquad_constants(A)
    scale = 4.0 * abs(a0) + 4.0 * np.abs(A).sum() + 1e-300
    abs_tol = tol * scale
    if _pick(backend) == "numba":
        Yo, logp, br, bc = _linquad_nb(A, float(a0), rowsuf, tail, U, Yin, sampling, force, abs_tol)
    else:
        Yo, logp, br, bc = _linquad_np(A, float(a0), rowsuf, tail, U, Yin, sampling, force, abs_tol)
    if not sampling:
        Yo = Yin
    return Yo, logp, int(br), int(bc)


# ---------------------------------------------------------------------------
# bivariate normal lower-orthant probability (Genz's BVND scheme)
# ---------------------------------------------------------------------------


def _half_gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    neg = x < 0
    return np.ascontiguousarray(x[neg]), np.ascontiguousarray(w[neg])


_GX6, _GW6 = _half_gl(6)
_GX12, _GW12 = _half_gl(12)
_GX20, _GW20 = _half_gl(20)
_TWOPI = 2.0 * math.pi
_SQRT_TWOPI = math.sqrt(_TWOPI)


@njit
def _phi_nb(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@njit
def _bvn_upper_nb(h, k, r):
    # P(X > h, Y > k) for a standard bivariate normal with correlation r.
    ar = abs(r)
    if ar < 0.3:
        gx = _GX6
        gw = _GW6
    elif ar < 0.75:
        gx = _GX12
        gw = _GW12
    else:
        gx = _GX20
        gw = _GW20
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for i in range(gx.shape[0]):
            sn = math.sin(asr * (gx[i] + 1.0) / 2.0)
            bvn += gw[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
            sn = math.sin(asr * (-gx[i] + 1.0) / 2.0)
            bvn += gw[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        return bvn * asr / (2.0 * _TWOPI) + _phi_nb(-h) * _phi_nb(-k)
    if r < 0.0:
        k = -k
        hk = -hk
    if ar < 1.0:
        as_ = (1.0 - r) * (1.0 + r)
        a = math.sqrt(as_)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        dd = (12.0 - hk) / 16.0
        bvn = a * math.exp(-(bs / as_ + hk) / 2.0) * (
            1.0 - c * (bs - as_) * (1.0 - dd * bs / 5.0) / 3.0 + c * dd * as_ * as_ / 5.0
        )
        if hk > -160.0:
            b = math.sqrt(bs)
            bvn -= (
                math.exp(-hk / 2.0) * _SQRT_TWOPI * _phi_nb(-b / a) * b
                * (1.0 - c * bs * (1.0 - dd * bs / 5.0) / 3.0)
            )
        a = a / 2.0
        for i in range(gx.shape[0]):
            xs = (a * (gx[i] + 1.0)) ** 2
            rs = math.sqrt(1.0 - xs)
            bvn += a * gw[i] * (
                math.exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs
                - math.exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + dd * xs))
            )
            xs = as_ * (-gx[i] + 1.0) ** 2 / 4.0
            rs = math.sqrt(1.0 - xs)
            bvn += a * gw[i] * math.exp(-(bs / xs + hk) / 2.0) * (
                math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                - (1.0 + c * xs * (1.0 + dd * xs))
            )
        bvn = -bvn / _TWOPI
    if r > 0.0:
        bvn += _phi_nb(-max(h, k))
    else:
        bvn = -bvn + max(0.0, _phi_nb(-h) - _phi_nb(-k))
    return bvn


@njit
def _bvn_nb(y1, y2, r):
    out = np.empty(y1.shape[0])
    for i in range(y1.shape[0]):
        out[i] = _bvn_upper_nb(-y1[i], -y2[i], r[i])
    return out


def _bvn_np(y1, y2, r):
    h = -y1
    k = -y2
    out = np.empty(h.shape[0])
    ar = np.abs(r)
    low = ar < 0.925
    if low.any():
        hl, kl, rl = h[low], k[low], r[low]
        hk = hl * kl
        hs = (hl * hl + kl * kl) / 2.0
        asr = np.arcsin(rl)
        acc = np.zeros(hl.shape[0])
        arl = ar[low]
        for lo, hi, gx, gw in ((0.0, 0.3, _GX6, _GW6), (0.3, 0.75, _GX12, _GW12), (0.75, 1.0, _GX20, _GW20)):
            sel = (arl >= lo) & (arl < hi)
            if not sel.any():
                continue
            a_s, hk_s, hs_s = asr[sel], hk[sel], hs[sel]
            tot = np.zeros(a_s.shape[0])
            for xi, wi in zip(gx, gw):
                sn = np.sin(a_s * (xi + 1.0) / 2.0)
                tot += wi * np.exp((sn * hk_s - hs_s) / (1.0 - sn * sn))
                sn = np.sin(a_s * (-xi + 1.0) / 2.0)
                tot += wi * np.exp((sn * hk_s - hs_s) / (1.0 - sn * sn))
            acc[sel] = tot
        out[low] = acc * asr / (2.0 * _TWOPI) + ndtr(-hl) * ndtr(-kl)
    high = ~low
    if high.any():
        hh, kh, rh = h[high], k[high].copy(), r[high]
        kh = np.where(rh < 0.0, -kh, kh)
        hk = hh * kh
        bvn = np.zeros(hh.shape[0])
        inner = np.abs(rh) < 1.0
        if inner.any():
            hi_, ki, ri, hki = hh[inner], kh[inner], rh[inner], hk[inner]
            as_ = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(as_)
            bs = (hi_ - ki) ** 2
            c = (4.0 - hki) / 8.0
            dd = (12.0 - hki) / 16.0
            v = a * np.exp(-(bs / as_ + hki) / 2.0) * (
                1.0 - c * (bs - as_) * (1.0 - dd * bs / 5.0) / 3.0 + c * dd * as_ * as_ / 5.0
            )
            b = np.sqrt(bs)
            tail = (
                np.exp(-hki / 2.0) * _SQRT_TWOPI * ndtr(-b / a) * b
                * (1.0 - c * bs * (1.0 - dd * bs / 5.0) / 3.0)
            )
            v = v - np.where(hki > -160.0, tail, 0.0)
            a2 = a / 2.0
            for xi, wi in zip(_GX20, _GW20):
                xs = (a2 * (xi + 1.0)) ** 2
                rs = np.sqrt(1.0 - xs)
                v += a2 * wi * (
                    np.exp(-bs / (2.0 * xs) - hki / (1.0 + rs)) / rs
                    - np.exp(-(bs / xs + hki) / 2.0) * (1.0 + c * xs * (1.0 + dd * xs))
                )
                xs = as_ * (-xi + 1.0) ** 2 / 4.0
                rs = np.sqrt(1.0 - xs)
                v += a2 * wi * np.exp(-(bs / xs + hki) / 2.0) * (
                    np.exp(-hki * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                    - (1.0 + c * xs * (1.0 + dd * xs))
                )
            bvn[inner] = -v / _TWOPI
        pos = rh > 0.0
        bvn = np.where(
            pos,
            bvn + ndtr(-np.maximum(hh, kh)),
            -bvn + np.maximum(0.0, ndtr(-hh) - ndtr(-kh)),
        )
        out[high] = bvn
    return out


def bvn_cdf(y1, y2, r, backend=None):
    """Vectorised P(X <= y1, Y <= y2) for unit-variance normals with correlation r."""
    y1, y2, r = np.broadcast_arrays(
        np.asarray(y1, dtype=np.float64), np.asarray(y2, dtype=np.float64), np.asarray(r, dtype=np.float64)
    )
    shape = y1.shape
    a, b, c = (np.ascontiguousarray(v.ravel()) for v in (y1, y2, r))
    if _pick(backend) == "numba":
        out = _bvn_nb(a, b, c)
    else:
        out = _bvn_np(a, b, c)
    return np.clip(out, 0.0, 1.0).reshape(shape)


# ---------------------------------------------------------------------------
# signed inclusion-exclusion sum over subsets
# ---------------------------------------------------------------------------


def _byte_tables(lam):
    """tables[b, v] = sum of lam over the set bits of byte value v in byte slot b."""
    n = lam.shape[0]
    nbytes = max(1, (n + 7) // 8)
    padded = np.zeros(8 * nbytes)
    padded[:n] = lam
    bits = (np.arange(256)[:, None] >> np.arange(8)[None, :]) & 1
    return np.ascontiguousarray(padded.reshape(nbytes, 8) @ bits.T)


@njit
def _exclusion_nb(masks, tables):
    t = masks.shape[0]
    nbytes = tables.shape[0]
    total = 1 << t
    unions = np.zeros(total, dtype=np.int64)
    sign = np.ones(total, dtype=np.int8)
    acc = 0.0
    for s in range(1, total):
        low = s & (-s)
        bit = 0
        while (low >> bit) != 1:
            bit += 1
        prev = s ^ low
        unions[s] = unions[prev] | masks[bit]
        sign[s] = -sign[prev]
        u = unions[s]
        rate = 0.0
        for b in range(nbytes):
            rate += tables[b, (u >> (8 * b)) & 255]
        # sign[s] == (-1)^{|s|}; the term carries (-1)^{|s|-1}
        acc -= sign[s] * math.exp(-rate)
    return acc


def _exclusion_np(masks, tables):
    unions = np.zeros(1, dtype=np.int64)
    sign = np.ones(1, dtype=np.int8)
    for mk in masks:
        unions = np.concatenate([unions, unions | mk])
        sign = np.concatenate([sign, -sign])
    rate = np.zeros(unions.shape[0])
    for b in range(tables.shape[0]):
        rate += tables[b][(unions >> (8 * b)) & 255]
    terms = -sign[1:] * np.exp(-rate[1:])
    return float(terms.sum())


def exclusion_sum(masks, lam, backend=None):
    """Sum over nonempty subsets I of ``masks`` of (-1)^{|I|-1} exp(-lam(union of masks in I)).

    ``masks`` are int64 bitmasks over the rate vector ``lam`` (at most 62 bits).
    """
    masks = np.ascontiguousarray(masks, dtype=np.int64)
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    if masks.shape[0] == 0:
        return 0.0
    tables = _byte_tables(lam)
    if _pick(backend) == "numba":
        return float(_exclusion_nb(masks, tables))
    return _exclusion_np(masks, tables)


# ---------------------------------------------------------------------------
# Vose alias table
# ---------------------------------------------------------------------------


def _alias_build_py(probs):
    n = probs.shape[0]
    scaled = probs * n
    thresh = np.ones(n)
    alias = np.arange(n)
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        thresh[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    # leftovers are 1 up to rounding
    for j in range(nl):
        thresh[large[j]] = 1.0
    for j in range(ns):
        thresh[small[j]] = 1.0
    return thresh, alias


_alias_build_nb = njit(_alias_build_py)


def alias_build(probs, backend=None):
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    if _pick(backend) == "numba":
        return _alias_build_nb(probs)
    return _alias_build_py(probs)
