"""Compiled full-batch Adam training loop for one AINN network.

Mirrors ``ainn.loss_and_grads`` + ``ainn.adam_step`` point by point; the
numpy versions remain the reference and the tests check agreement.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _loss_grads(W1, b1, W2, b2, w3, b3, scale, dpts, targets, cpts, k, pw,
                gW1, gb1, gW2, gb2, gw3):
    H = b1.size
    for i in range(H):
        gb1[i] = 0.0
        gb2[i] = 0.0
        gw3[i] = 0.0
        gW1[i, 0] = 0.0
        gW1[i, 1] = 0.0
        for j in range(H):
            gW2[i, j] = 0.0
    gb3 = 0.0
    E0 = np.empty(H)
    E1 = np.empty(H)
    for i in range(H):
        E0[i] = W1[i, 0] * scale
        E1[i] = W1[i, 1] * scale
    a1 = np.empty(H)
    a2 = np.empty(H)
    da1 = np.empty(H)
    dz2 = np.empty(H)
    m = dpts.shape[0]
    eps_d = 0.0
    for p in range(m):
        x = dpts[p, 0]
        y = dpts[p, 1]
        for i in range(H):
            a1[i] = math.tanh(E0[i] * x + E1[i] * y + b1[i])
        out = b3
        for i in range(H):
            z = b2[i]
            for j in range(H):
                z += W2[i, j] * a1[j]
            a2[i] = math.tanh(z)
            out += w3[i] * a2[i]
        err = out - targets[p]
        eps_d += err * err
        go = 2.0 * err / m
        gb3 += go
        for i in range(H):
            gw3[i] += go * a2[i]
            dz2[i] = go * w3[i] * (1.0 - a2[i] * a2[i])
            gb2[i] += dz2[i]
        for j in range(H):
            s = 0.0
            for i in range(H):
                gW2[i, j] += dz2[i] * a1[j]
                s += dz2[i] * W2[i, j]
            dz1 = s * (1.0 - a1[j] * a1[j])
            gb1[j] += dz1
            gW1[j, 0] += dz1 * x * scale
            gW1[j, 1] += dz1 * y * scale
    eps_d /= m

    eps_a = 0.0
    n = cpts.shape[0]
    if n == 0 or pw == 0.0:
        return eps_d, eps_a, gb3
    q = np.empty(H)
    for i in range(H):
        q[i] = E0[i] * E0[i] + E1[i] * E1[i]
    g1 = np.empty(H)
    h1 = np.empty(H)
    u0 = np.empty(H)
    u1 = np.empty(H)
    hq = np.empty(H)
    s0 = np.empty(H)
    s1 = np.empty(H)
    t = np.empty(H)
    g2 = np.empty(H)
    h2 = np.empty(H)
    S = np.empty(H)
    du0 = np.empty(H)
    du1 = np.empty(H)
    dhq = np.empty(H)
    ds0 = np.empty(H)
    ds1 = np.empty(H)
    dt = np.empty(H)
    gq0 = 0.0
    dq = np.zeros(H)
    gE0 = np.zeros(H)
    gE1 = np.zeros(H)
    inv_k2 = 1.0 / (k * k)
    for p in range(n):
        x = cpts[p, 0]
        y = cpts[p, 1]
        for i in range(H):
            a = math.tanh(E0[i] * x + E1[i] * y + b1[i])
            a1[i] = a
            g1[i] = 1.0 - a * a
            h1[i] = -2.0 * a * g1[i]
            u0[i] = g1[i] * E0[i]
            u1[i] = g1[i] * E1[i]
            hq[i] = h1[i] * q[i]
        out = b3
        lap = 0.0
        for i in range(H):
            z = b2[i]
            v0 = 0.0
            v1 = 0.0
            vt = 0.0
            for j in range(H):
                w = W2[i, j]
                z += w * a1[j]
                v0 += w * u0[j]
                v1 += w * u1[j]
                vt += w * hq[j]
            a = math.tanh(z)
            a2[i] = a
            g2[i] = 1.0 - a * a
            h2[i] = -2.0 * a * g2[i]
            s0[i] = v0
            s1[i] = v1
            t[i] = vt
            S[i] = v0 * v0 + v1 * v1
            out += w3[i] * a
            lap += w3[i] * (h2[i] * S[i] + g2[i] * vt)
        res = lap * inv_k2 + out
        eps_a += res * res
        go = 2.0 * pw * res / n
        gl = go * inv_k2
        gb3 += go
        for i in range(H):
            L2 = h2[i] * S[i] + g2[i] * t[i]
            gw3[i] += go * a2[i] + gl * L2
            dL2 = gl * w3[i]
            a = a2[i]
            da2 = go * w3[i] + dL2 * (S[i] * (6.0 * a * a - 2.0) - 2.0 * a * t[i])
            dS = dL2 * h2[i]
            dt[i] = dL2 * g2[i]
            ds0[i] = 2.0 * dS * s0[i]
            ds1[i] = 2.0 * dS * s1[i]
            dz2[i] = da2 * g2[i]
            gb2[i] += dz2[i]
        for j in range(H):
            c0 = 0.0
            c1 = 0.0
            ct = 0.0
            cz = 0.0
            for i in range(H):
                gW2[i, j] += ds0[i] * u0[j] + ds1[i] * u1[j] + dt[i] * hq[j] + dz2[i] * a1[j]
                w = W2[i, j]
                c0 += ds0[i] * w
                c1 += ds1[i] * w
                ct += dt[i] * w
                cz += dz2[i] * w
            du0[j] = c0
            du1[j] = c1
            dhq[j] = ct
            a = a1[j]
            dg1 = c0 * E0[j] + c1 * E1[j]
            dh1 = ct * q[j]
            dq[j] += ct * h1[j]
            gE0[j] += c0 * g1[j]
            gE1[j] += c1 * g1[j]
            d1 = cz + dg1 * (-2.0 * a) + dh1 * (6.0 * a * a - 2.0)
            dz1 = d1 * g1[j]
            gb1[j] += dz1
            gE0[j] += dz1 * x
            gE1[j] += dz1 * y
    for j in range(H):
        gE0[j] += 2.0 * dq[j] * E0[j]
        gE1[j] += 2.0 * dq[j] * E1[j]
        gW1[j, 0] += gE0[j] * scale
        gW1[j, 1] += gE1[j] * scale
    eps_a /= n
    return eps_d, eps_a, gb3


@njit(cache=True)
def _adam(p, g, m, v, lr, b1, b2, c1, c2, eps):
    fp = p.ravel()
    fg = g.ravel()
    fm = m.ravel()
    fv = v.ravel()
    for i in range(fp.size):
        fm[i] = b1 * fm[i] + (1.0 - b1) * fg[i]
        fv[i] = b2 * fv[i] + (1.0 - b2) * fg[i] * fg[i]
        fp[i] -= lr * (fm[i] / c1) / (math.sqrt(fv[i] / c2) + eps)


@njit(cache=True)
def fit(W1, b1, W2, b2, w3, b3arr, scale, dpts, targets, cpts, k, pw,
        lr, beta1, beta2, adam_eps, window, rel_tol, max_epochs, history):
    """Train in place. Returns (epochs, eps_d, eps_a, stopped_early, diverged_epoch)."""
    H = b1.size
    gW1 = np.zeros((H, 2))
    gb1 = np.zeros(H)
    gW2 = np.zeros((H, H))
    gb2 = np.zeros(H)
    gw3 = np.zeros(H)
    mW1 = np.zeros((H, 2)); vW1 = np.zeros((H, 2))
    mb1 = np.zeros(H); vb1 = np.zeros(H)
    mW2 = np.zeros((H, H)); vW2 = np.zeros((H, H))
    mb2 = np.zeros(H); vb2 = np.zeros(H)
    mw3 = np.zeros(H); vw3 = np.zeros(H)
    mb3 = np.zeros(1); vb3 = np.zeros(1)
    gb3a = np.zeros(1)
    ring = np.empty(window + 1)
    record = history.shape[0] > 0
    pb1 = 1.0
    pb2 = 1.0
    eps_d = 0.0
    eps_a = 0.0
    for epoch in range(1, max_epochs + 1):
        eps_d, eps_a, gb3 = _loss_grads(W1, b1, W2, b2, w3, b3arr[0], scale, dpts, targets, cpts, k, pw,
                                        gW1, gb1, gW2, gb2, gw3)
        if not (math.isfinite(eps_d) and math.isfinite(eps_a)):
            return epoch, eps_d, eps_a, False, epoch
        if record:
            history[epoch - 1, 0] = eps_d
            history[epoch - 1, 1] = eps_a
        ring[epoch % (window + 1)] = eps_d
        if epoch > window:
            old = ring[(epoch - window) % (window + 1)]
            if old == 0.0 or abs(eps_d - old) <= rel_tol * old:
                return epoch, eps_d, eps_a, True, 0
        gb3a[0] = gb3
        pb1 *= beta1
        pb2 *= beta2
        c1 = 1.0 - pb1
        c2 = 1.0 - pb2
        _adam(W1, gW1, mW1, vW1, lr, beta1, beta2, c1, c2, adam_eps)
        _adam(b1, gb1, mb1, vb1, lr, beta1, beta2, c1, c2, adam_eps)
        _adam(W2, gW2, mW2, vW2, lr, beta1, beta2, c1, c2, adam_eps)
        _adam(b2, gb2, mb2, vb2, lr, beta1, beta2, c1, c2, adam_eps)
        _adam(w3, gw3, mw3, vw3, lr, beta1, beta2, c1, c2, adam_eps)
        _adam(b3arr, gb3a, mb3, vb3, lr, beta1, beta2, c1, c2, adam_eps)
    eps_d, eps_a, _ = _loss_grads(W1, b1, W2, b2, w3, b3arr[0], scale, dpts, targets, cpts, k, pw,
                                  gW1, gb1, gW2, gb2, gw3)
    return max_epochs, eps_d, eps_a, False, 0
