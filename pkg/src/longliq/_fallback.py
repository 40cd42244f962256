"""Pure numpy versions of the compiled kernels.

Noise comes from numpy's Philox4x64-10 bit generator with the same key and
counter layout as the compiled core, so both backends walk the same paths
(up to last-ulp differences in the libm used for log/cos/sin).
"""
from __future__ import annotations

import numpy as np

_CHUNK = 2048
_SCALE = 2.0 ** -53
_WRAP = 1 << 256


def philox_block(c0, c1, c2, c3, k0, k1):
    ctr = c0 | (c1 << 64) | (c2 << 128) | (c3 << 192)
    gen = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64), counter=(ctr - 1) % _WRAP)
    return tuple(int(v) for v in gen.random_raw(4))


def _path_normals(seed: int, subkey: int, step0: int, n_steps: int) -> np.ndarray:
    first, last = step0 >> 2, (step0 + n_steps - 1) >> 2
    # numpy advances the counter before each block, so start one below
    gen = np.random.Philox(key=np.array([seed, subkey], dtype=np.uint64), counter=(first - 1) % _WRAP)
    raw = gen.random_raw(4 * (last - first + 1)).reshape(-1, 2, 2)
    u1 = ((raw[:, :, 0] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _SCALE
    u2 = (raw[:, :, 1] >> np.uint64(11)).astype(np.float64) * _SCALE
    rad = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.stack([rad * np.cos(theta), rad * np.sin(theta)], axis=-1).ravel()
    off = step0 - 4 * first
    return z[off:off + n_steps]


def normals(seed, stream, path0, n_paths, step0, n_steps, num_threads=1):
    out = np.empty((n_paths, n_steps))
    if n_steps == 0:
        return out
    for i in range(n_paths):
        out[i] = _path_normals(int(seed), (int(stream) << 32) | (int(path0) + i), int(step0), int(n_steps))
    return out


def optimal_paths(seed, path0, n_paths, x0, y0, gamma, dt, coef, kappa, shift, rho, vol, w,
                  lamdt, disc, ia1, ia2, ib, check, record_every, num_threads=1):
    N = len(coef) - 1
    n_rec = N // record_every + 1
    out = {
        "cost": np.zeros(n_paths), "max_residual": np.zeros(n_paths),
        "jump0": np.zeros(n_paths), "x_pre_terminal": np.zeros(n_paths),
        "P": np.empty((n_paths, n_rec)), "X": np.empty((n_paths, n_rec)),
        "Y": np.empty((n_paths, n_rec)), "blown_up": np.zeros(n_paths, dtype=np.int8),
    }
    for c0 in range(0, n_paths, _CHUNK):
        m = min(_CHUNK, n_paths - c0)
        z = normals(seed, 0, path0 + c0, m, 0, N)
        sl = slice(c0, c0 + m)
        P = np.full(m, x0 + y0 / gamma)
        Xm = np.full(m, float(x0))
        Ym = np.full(m, float(y0))
        acc = np.zeros(m)
        rmax = np.zeros(m)
        alive = np.ones(m, dtype=bool)
        for n in range(N + 1):
            X = coef[n] * P - shift[n]
            Y = gamma * (P - X)
            xi = Xm - X
            acc += w[n] * (Ym * xi + 0.5 * gamma * xi * xi + lamdt[n] * X * X)
            if check[n] != 0.0:
                rmax = np.maximum(rmax, np.abs(disc[n] * (ia1[n] * X + ia2[n] * Y) + ib[n]))
            if n == 0:
                out["jump0"][sl] = X - x0
            if n % record_every == 0:
                k = n // record_every
                out["P"][sl, k], out["X"][sl, k], out["Y"][sl, k] = P, X, Y
            if n == N:
                out["x_pre_terminal"][sl] = Xm
                break
            P = P * (1.0 - kappa[n] * dt) - rho[n] * shift[n] * dt + vol[n] * z[:, n]
            alive &= np.abs(P) < 1e300
            Xm = X
            Ym = gamma * (P - X)
        out["cost"][sl] = acc
        out["max_residual"][sl] = rmax
        out["blown_up"][sl] = ~alive
    return out


def strategy_paths(seed, path0, n_paths, x0, y0, gamma, dt, alpha, beta, shift, eta, rho, sig,
                   w, lamdt, sign_tol, sign_last, record_every, num_threads=1):
    N = len(alpha) - 1
    n_rec = N // record_every + 1
    out = {
        "cost": np.zeros(n_paths), "n_qualify": np.zeros(n_paths, dtype=np.int64),
        "n_agree": np.zeros(n_paths, dtype=np.int64),
        "P": np.empty((n_paths, n_rec)), "X": np.empty((n_paths, n_rec)),
        "Y": np.empty((n_paths, n_rec)), "blown_up": np.zeros(n_paths, dtype=np.int8),
    }
    trade_noise = bool(np.any(np.asarray(eta) != 0.0))
    for c0 in range(0, n_paths, _CHUNK):
        m = min(_CHUNK, n_paths - c0)
        sl = slice(c0, c0 + m)
        z = normals(seed, 0, path0 + c0, m, 0, N)
        zt = normals(seed, 1, path0 + c0, m, 0, N + 1) if trade_noise else None
        X = np.full(m, float(x0))
        Y = np.full(m, float(y0))
        acc = np.zeros(m)
        nq = np.zeros(m, dtype=np.int64)
        na = np.zeros(m, dtype=np.int64)
        pending = np.zeros(m, dtype=bool)
        prevx = np.zeros(m)
        noise = np.zeros(m)
        alive = np.ones(m, dtype=bool)
        for n in range(N + 1):
            xi = alpha[n] * X + beta[n] * Y + shift[n]
            if eta[n] != 0.0:
                xi = xi + eta[n] * zt[:, n]
            Xp = X - xi
            Yp = Y + gamma * xi
            acc += w[n] * (Y * xi + 0.5 * gamma * xi * xi + lamdt[n] * Xp * Xp)
            if pending.any():
                nq += pending
                na += pending & (np.sign(Xp - prevx) == np.sign(noise))
                pending[:] = False
            if n % record_every == 0:
                k = n // record_every
                out["P"][sl, k], out["X"][sl, k], out["Y"][sl, k] = Xp + Yp / gamma, Xp, Yp
            if n == N:
                break
            zn = z[:, n]
            if n <= sign_last:
                pending = np.abs(Xp) <= sign_tol
                prevx = Xp
                noise = sig[n] * zn
            X = Xp
            Y = (1.0 - dt * rho[n]) * Yp + sig[n] * zn
            alive &= (np.abs(X) < 1e300) & (np.abs(Y) < 1e300)
        out["cost"][sl] = acc
        out["n_qualify"][sl] = nq
        out["n_agree"][sl] = na
        out["blown_up"][sl] = ~alive
    return out
