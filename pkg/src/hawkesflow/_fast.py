"""Compiled O(N) recursions shared by the engine, calibration and diagnostics.

All routines take flat arrays: event ``times`` (sorted), ``sides`` (1 = buy,
2 = sell), ``vols`` (lots), plus per-source channel parameters for a single
target side: ``ks``, ``bs``, ``alphas``, ``betas`` (length 2, index 0 = buy
source) and the fast-term ``sign`` (-1 difference, +1 sum).

Events sharing a timestamp only see strictly earlier events: a group of equal
times is read first and added to the state afterwards.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _interp_with_seg(t, xs, ys, seg):
    n = xs.shape[0]
    while seg < n - 2 and t > xs[seg + 1]:
        seg += 1
    w = (t - xs[seg]) / (xs[seg + 1] - xs[seg])
    return ys[seg] + (ys[seg + 1] - ys[seg]) * w, seg, w


@njit(cache=True)
def scan_target(times, sides, vols, target, xs, ys, ks, bs, alphas, betas, sign):
    """Pre-jump intensity and excitation compensator ``int_0^t`` at every event.

    Returns ``(lam, comp_exc)``; ``lam`` includes the baseline, ``comp_exc``
    only the excitation part of the cumulative compensator.
    """
    n = times.shape[0]
    lam = np.empty(n)
    comp = np.empty(n)
    slow = np.zeros(2)
    fast = np.zeros(2)
    mass = np.zeros(2)  # sum of mark weights seen so far
    t_prev = 0.0
    seg = 0
    i = 0
    while i < n:
        t = times[i]
        dt = t - t_prev
        if dt > 0.0:
            for j in range(2):
                slow[j] *= np.exp(-alphas[j] * dt)
                fast[j] *= np.exp(-betas[j] * dt)
            t_prev = t
        mu, seg, _ = _interp_with_seg(t, xs, ys, seg)
        exc = 0.0
        cexc = 0.0
        for j in range(2):
            exc += ks[j] * (slow[j] + sign * fast[j])
            cexc += ks[j] * ((mass[j] - slow[j]) / alphas[j] + sign * (mass[j] - fast[j]) / betas[j])
        g = i
        while g < n and times[g] == t:
            lam[g] = mu + exc
            comp[g] = cexc
            g += 1
        for m in range(i, g):
            j = sides[m] - 1
            w = np.exp(bs[j] * vols[m])
            slow[j] += w
            fast[j] += w
            mass[j] += w
        i = g
    return lam, comp


@njit(cache=True)
def loglik_target(times, sides, vols, target, horizon, xs, ys, hat_int,
                  ks, bs, alphas, betas, sign, want_grad):
    """Log-likelihood of one side's events over ``[0, horizon]``.

    Gradient (if requested) is with respect to the natural parameters in the
    order ``knots..., k1, b1, a1, be1, k2, b2, a2, be2``.
    """
    nk = xs.shape[0]
    grad = np.zeros(nk + 8)
    n = times.shape[0]
    slow = np.zeros(2)
    fast = np.zeros(2)
    slow_d = np.zeros(2)  # sum of lag * w * e^{-alpha lag}
    fast_d = np.zeros(2)
    slow_v = np.zeros(2)  # sum of v * w * e^{-alpha lag}
    fast_v = np.zeros(2)
    ll = 0.0
    t_prev = 0.0
    seg = 0
    i = 0
    while i < n and times[i] < horizon:
        t = times[i]
        dt = t - t_prev
        if dt > 0.0:
            for j in range(2):
                ea = np.exp(-alphas[j] * dt)
                eb = np.exp(-betas[j] * dt)
                slow_d[j] = ea * (slow_d[j] + dt * slow[j])
                fast_d[j] = eb * (fast_d[j] + dt * fast[j])
                slow[j] *= ea
                fast[j] *= eb
                slow_v[j] *= ea
                fast_v[j] *= eb
            t_prev = t
        g = i
        while g < n and times[g] == t:
            g += 1
        for m in range(i, g):
            if sides[m] != target:
                continue
            mu, seg, w_hat = _interp_with_seg(t, xs, ys, seg)
            lam = mu
            for j in range(2):
                lam += ks[j] * (slow[j] + sign * fast[j])
            if not lam > 0.0:
                return -np.inf, grad
            ll += np.log(lam)
            if want_grad:
                inv = 1.0 / lam
                grad[seg] += (1.0 - w_hat) * inv
                grad[seg + 1] += w_hat * inv
                for j in range(2):
                    o = nk + 4 * j
                    grad[o] += (slow[j] + sign * fast[j]) * inv
                    grad[o + 1] += ks[j] * (slow_v[j] + sign * fast_v[j]) * inv
                    grad[o + 2] -= ks[j] * slow_d[j] * inv
                    grad[o + 3] -= sign * ks[j] * fast_d[j] * inv
        for m in range(i, g):
            j = sides[m] - 1
            w = np.exp(bs[j] * vols[m])
            slow[j] += w
            fast[j] += w
            slow_v[j] += vols[m] * w
            fast_v[j] += vols[m] * w
        i = g
    # compensator over [0, horizon]
    for l in range(nk):
        ll -= ys[l] * hat_int[l]
        grad[l] -= hat_int[l]
    for m in range(i):
        j = sides[m] - 1
        d = horizon - times[m]
        v = vols[m]
        w = np.exp(bs[j] * v)
        ea = np.exp(-alphas[j] * d)
        eb = np.exp(-betas[j] * d)
        ia = (1.0 - ea) / alphas[j]
        ib = (1.0 - eb) / betas[j]
        shape = ia + sign * ib
        ll -= ks[j] * w * shape
        if want_grad:
            o = nk + 4 * j
            grad[o] -= w * shape
            grad[o + 1] -= ks[j] * v * w * shape
            grad[o + 2] -= ks[j] * w * (d * ea - ia) / alphas[j]
            grad[o + 3] -= sign * ks[j] * w * (d * eb - ib) / betas[j]
    if not np.isfinite(ll):
        return -np.inf, grad
    return ll, grad
