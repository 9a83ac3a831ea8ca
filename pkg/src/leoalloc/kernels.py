"""Hot numeric kernels.

Every kernel exists twice: an explicit-loop version compiled with numba and a
vectorized numpy version.  The module-level names point at whichever one
``LEOALLOC_DISABLE_NUMBA`` selects at import time; both
stay importable through :data:`IMPLEMENTATIONS` so tests and the benchmark can
pit them against each other.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

SERIES_CUTOFF = 8.0

# ---------------------------------------------------------------------------
# Bessel J1
# ---------------------------------------------------------------------------


def _j1_loops(x):
    n = x.shape[0]
    out = np.empty(n)
    for i in range(n):
        xi = x[i]
        ax = abs(xi)
        if ax <= SERIES_CUTOFF:
            h = 0.5 * ax
            h2 = h * h
            term = h
            total = h
            for j in range(1, 45):
                term *= -h2 / (j * (j + 1.0))
                total += term
            val = total
        else:
            # Miller backward recurrence normalized by J0 + 2*sum(J_2k) = 1
            top = 2 * int(0.5 * ax) + 40
            nxt = 0.0
            cur = 1e-30
            norm = 0.0
            j1v = 0.0
            for k in range(top, 0, -1):
                prev = (2.0 * k / ax) * cur - nxt
                if k % 2 == 0:
                    norm += 2.0 * cur
                if k == 1:
                    j1v = cur
                nxt = cur
                cur = prev
                if abs(cur) > 1e200:
                    cur *= 1e-200
                    nxt *= 1e-200
                    norm *= 1e-200
                    j1v *= 1e-200
            norm += cur
            val = j1v / norm
        out[i] = -val if xi < 0.0 else val
    return out


def _j1_numpy(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.zeros_like(ax)
    small = ax <= SERIES_CUTOFF
    if small.any():
        h = 0.5 * ax[small]
        h2 = h * h
        term = h.copy()
        total = h.copy()
        for j in range(1, 45):
            term *= -h2 / (j * (j + 1.0))
            total += term
        out[small] = total
    big = ~small
    if big.any():
        xb = ax[big]
        top = 2 * int(0.5 * xb.max()) + 40
        nxt = np.zeros_like(xb)
        cur = np.full_like(xb, 1e-30)
        norm = np.zeros_like(xb)
        j1v = np.zeros_like(xb)
        for k in range(top, 0, -1):
            prev = (2.0 * k / xb) * cur - nxt
            if k % 2 == 0:
                norm += 2.0 * cur
            if k == 1:
                j1v = cur.copy()
            nxt = cur
            cur = prev
            huge = np.abs(cur) > 1e200
            if huge.any():
                scale = np.where(huge, 1e-200, 1.0)
                cur = cur * scale
                nxt = nxt * scale
                norm = norm * scale
                j1v = j1v * scale
        norm += cur
        out[big] = j1v / norm
    return np.where(x < 0.0, -out, out)


# ---------------------------------------------------------------------------
# Log-barrier terms for the power/bandwidth subproblem
#
# Variables: p (scaled link powers, one per active link, links sorted by
# terminal) and W (scaled terminal bandwidths).  Soft constraints, each
# shifted by ``s`` (nonzero only in phase I):
#   rate_t : 1 - kappa_t * sum_l a_l W_t ln(1 + c_l p_l / W_t) <= s
#   cap_t  : sum_l a_l p_l - 1 <= s
#   band_m : sum_l bwc_l W_{t(l)} - 1 <= s
# Hard domain constraints: p_l > 0 and W_t > wlow.
# ---------------------------------------------------------------------------


def _barrier_value_loops(p, W, s, lt, tptr, lm, la, lc, kappa, bwc, n_sat, wlow):
    T = W.shape[0]
    L = p.shape[0]
    phi = 0.0
    for t in range(T):
        rate = 0.0
        cap = 0.0
        for l in range(tptr[t], tptr[t + 1]):
            rate += la[l] * W[t] * np.log1p(lc[l] * p[l] / W[t])
            cap += la[l] * p[l]
        fr = 1.0 - kappa[t] * rate - s
        fc = cap - 1.0 - s
        if fr >= 0.0 or fc >= 0.0:
            return False, np.inf
        phi -= np.log(-fr) + np.log(-fc)
        dw = W[t] - wlow
        if dw <= 0.0:
            return False, np.inf
        phi -= np.log(dw)
    load = np.zeros(n_sat)
    for l in range(L):
        if p[l] <= 0.0:
            return False, np.inf
        phi -= np.log(p[l])
        load[lm[l]] += bwc[l] * W[lt[l]]
    for m in range(n_sat):
        fb = load[m] - 1.0 - s
        if fb >= 0.0:
            return False, np.inf
        phi -= np.log(-fb)
    return True, phi


def _barrier_value_numpy(p, W, s, lt, tptr, lm, la, lc, kappa, bwc, n_sat, wlow):
    T = W.shape[0]
    if np.any(p <= 0.0) or np.any(W <= wlow):
        return False, np.inf
    Wl = W[lt]
    rate = np.bincount(lt, la * Wl * np.log1p(lc * p / Wl), minlength=T)
    fr = 1.0 - kappa * rate - s
    fc = np.bincount(lt, la * p, minlength=T) - 1.0 - s
    fb = np.bincount(lm, bwc * Wl, minlength=n_sat) - 1.0 - s
    soft = np.concatenate((fr, fc, fb))
    if np.any(soft >= 0.0):
        return False, np.inf
    phi = -np.sum(np.log(-soft)) - np.sum(np.log(p)) - np.sum(np.log(W - wlow))
    return True, phi


def _barrier_derivs_loops(p, W, s, phase1, lt, tptr, lm, la, lc, kappa, bwc, n_sat, wlow):
    T = W.shape[0]
    L = p.shape[0]
    n = L + T + (1 if phase1 else 0)
    si = L + T
    g = np.zeros(n)
    H = np.zeros((n, n))
    gl = np.zeros(L)
    for t in range(T):
        a0 = tptr[t]
        a1 = tptr[t + 1]
        Wt = W[t]
        col = L + t
        rate = 0.0
        cap = 0.0
        gW = 0.0
        for l in range(a0, a1):
            z = lc[l] * p[l] / Wt
            sl = 1.0 + z
            lg = np.log1p(z)
            rate += la[l] * Wt * lg
            cap += la[l] * p[l]
            gW -= kappa[t] * la[l] * (lg - z / sl)
            gl[l] = -kappa[t] * la[l] * lc[l] / sl
        fr = 1.0 - kappa[t] * rate - s
        fc = cap - 1.0 - s
        ir = 1.0 / (-fr)
        ic = 1.0 / (-fc)
        ir2 = ir * ir
        ic2 = ic * ic
        for l in range(a0, a1):
            g[l] += gl[l] * ir + la[l] * ic
            for l2 in range(a0, a1):
                H[l, l2] += gl[l] * gl[l2] * ir2 + la[l] * la[l2] * ic2
            z = lc[l] * p[l] / Wt
            sl = 1.0 + z
            w = kappa[t] * la[l] / (Wt * sl * sl) * ir
            H[l, l] += w * lc[l] * lc[l]
            cross = gl[l] * gW * ir2 - w * lc[l] * z
            H[l, col] += cross
            H[col, l] += cross
            H[col, col] += w * z * z
            if phase1:
                hs = -gl[l] * ir2 - la[l] * ic2
                H[l, si] += hs
                H[si, l] += hs
        g[col] += gW * ir
        H[col, col] += gW * gW * ir2
        if phase1:
            g[si] -= ir + ic
            H[si, si] += ir2 + ic2
            H[col, si] -= gW * ir2
            H[si, col] -= gW * ir2
    gb = np.zeros((n_sat, T))
    for l in range(L):
        gb[lm[l], lt[l]] += bwc[l]
    for m in range(n_sat):
        fb = -1.0 - s
        for t in range(T):
            fb += gb[m, t] * W[t]
        ib = 1.0 / (-fb)
        ib2 = ib * ib
        for t in range(T):
            if gb[m, t] == 0.0:
                continue
            g[L + t] += gb[m, t] * ib
            for t2 in range(T):
                H[L + t, L + t2] += gb[m, t] * gb[m, t2] * ib2
            if phase1:
                H[L + t, si] -= gb[m, t] * ib2
                H[si, L + t] -= gb[m, t] * ib2
        if phase1:
            g[si] -= ib
            H[si, si] += ib2
    for l in range(L):
        g[l] -= 1.0 / p[l]
        H[l, l] += 1.0 / (p[l] * p[l])
    for t in range(T):
        dw = W[t] - wlow
        g[L + t] -= 1.0 / dw
        H[L + t, L + t] += 1.0 / (dw * dw)
    return g, H


def _barrier_derivs_numpy(p, W, s, phase1, lt, tptr, lm, la, lc, kappa, bwc, n_sat, wlow):
    T = W.shape[0]
    L = p.shape[0]
    n = L + T + (1 if phase1 else 0)
    idx = np.arange(L)
    tcol = L + lt
    Wl = W[lt]
    z = lc * p / Wl
    sl = 1.0 + z
    lg = np.log1p(z)

    fr = 1.0 - kappa * np.bincount(lt, la * Wl * lg, minlength=T) - s
    fc = np.bincount(lt, la * p, minlength=T) - 1.0 - s
    gb = np.zeros((n_sat, T))
    np.add.at(gb, (lm, lt), bwc)
    fb = gb @ W - 1.0 - s

    J = np.zeros((2 * T + n_sat, n))
    J[lt, idx] = -kappa[lt] * la * lc / sl
    J[np.arange(T), L + np.arange(T)] = -kappa * np.bincount(
        lt, la * (lg - z / sl), minlength=T
    )
    J[T + lt, idx] = la
    J[2 * T :, L : L + T] = gb
    if phase1:
        J[:, -1] = -1.0
    inv = 1.0 / -np.concatenate((fr, fc, fb))

    g = J.T @ inv
    H = (J.T * inv**2) @ J

    w = kappa[lt] * la / (Wl * sl**2) * inv[lt]
    H[idx, idx] += w * lc**2
    H[idx, tcol] -= w * lc * z
    H[tcol, idx] -= w * lc * z
    np.add.at(H, (tcol, tcol), w * z**2)

    g[:L] -= 1.0 / p
    H[idx, idx] += 1.0 / p**2
    dw = W - wlow
    tdiag = L + np.arange(T)
    g[tdiag] -= 1.0 / dw
    H[tdiag, tdiag] += 1.0 / dw**2
    return g, H


# ---------------------------------------------------------------------------
# Dense tableau simplex (Bland's rule)
#
# ``tab`` has one row per constraint plus a final reduced-cost row; the last
# column is the right-hand side.  Pivots in place.  Returns (status, pivots)
# with status 0 = optimal, 1 = unbounded, 2 = pivot limit reached.
# ---------------------------------------------------------------------------


def _simplex_loops(tab, basis, max_iter, eps):
    m = tab.shape[0] - 1
    ncol = tab.shape[1] - 1
    for it in range(max_iter):
        j = -1
        for c in range(ncol):
            if tab[m, c] < -eps:
                j = c
                break
        if j < 0:
            return 0, it
        r = -1
        best = np.inf
        for i in range(m):
            a = tab[i, j]
            if a > eps:
                ratio = tab[i, ncol] / a
                if r < 0 or ratio < best - 1e-12 * (1.0 + abs(best)):
                    r = i
                    best = ratio
                elif ratio <= best + 1e-12 * (1.0 + abs(best)) and basis[i] < basis[r]:
                    r = i
                    best = min(best, ratio)
        if r < 0:
            return 1, it
        piv = tab[r, j]
        for c in range(ncol + 1):
            tab[r, c] /= piv
        for i in range(m + 1):
            if i != r:
                f = tab[i, j]
                if f != 0.0:
                    for c in range(ncol + 1):
                        tab[i, c] -= f * tab[r, c]
        basis[r] = j
    return 2, max_iter


def _simplex_numpy(tab, basis, max_iter, eps):
    m = tab.shape[0] - 1
    for it in range(max_iter):
        neg = np.flatnonzero(tab[m, :-1] < -eps)
        if neg.size == 0:
            return 0, it
        j = neg[0]
        col = tab[:m, j]
        r = -1
        best = np.inf
        # sequential scan keeps the tie rule identical to the loop kernel
        for i in np.flatnonzero(col > eps):
            ratio = tab[i, -1] / col[i]
            if r < 0 or ratio < best - 1e-12 * (1.0 + abs(best)):
                r = i
                best = ratio
            elif ratio <= best + 1e-12 * (1.0 + abs(best)) and basis[i] < basis[r]:
                r = i
                best = min(best, ratio)
        if r < 0:
            return 1, it
        tab[r] /= tab[r, j]
        f = tab[:, j].copy()
        f[r] = 0.0
        tab -= np.outer(f, tab[r])
        basis[r] = j
    return 2, max_iter


IMPLEMENTATIONS = {
    "j1": {"numpy": _j1_numpy},
    "barrier_value": {"numpy": _barrier_value_numpy},
    "barrier_derivs": {"numpy": _barrier_derivs_numpy},
    "simplex": {"numpy": _simplex_numpy},
}
_LOOPS = {
    "j1": _j1_loops,
    "barrier_value": _barrier_value_loops,
    "barrier_derivs": _barrier_derivs_loops,
    "simplex": _simplex_loops,
}
for _name, _fn in _LOOPS.items():
    IMPLEMENTATIONS[_name]["numba"] = njit(_fn)

BACKEND = "numba" if USE_NUMBA else "numpy"

j1 = IMPLEMENTATIONS["j1"][BACKEND]
barrier_value = IMPLEMENTATIONS["barrier_value"][BACKEND]
barrier_derivs = IMPLEMENTATIONS["barrier_derivs"][BACKEND]
simplex = IMPLEMENTATIONS["simplex"][BACKEND]
