# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path kernels: Philox4x64-10 normals and the two path recursions.

Every path draws its noise from a counter-based stream keyed by
(seed, stream << 32 | path), so a path's trajectory does not depend on how
paths are split across threads.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange, parallel
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int64_t
from libc.math cimport fabs

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    #include <math.h>

    static inline void ll_mulhilo(uint64_t a, uint64_t b, uint64_t *hi, uint64_t *lo) {
        __uint128_t p = (__uint128_t)a * (__uint128_t)b;
        *hi = (uint64_t)(p >> 64);
        *lo = (uint64_t)p;
    }

    static inline void ll_philox4x64_10(const uint64_t *ctr_in, const uint64_t *key_in, uint64_t *out) {
        uint64_t c0 = ctr_in[0], c1 = ctr_in[1], c2 = ctr_in[2], c3 = ctr_in[3];
        uint64_t k0 = key_in[0], k1 = key_in[1];
        uint64_t hi0, lo0, hi1, lo1;
        int r;
        for (r = 0; r < 10; r++) {
            if (r > 0) {
                k0 += 0x9E3779B97F4A7C15ULL;
                k1 += 0xBB67AE8584CAA73BULL;
            }
            ll_mulhilo(0xD2E7470EE14C6C93ULL, c0, &hi0, &lo0);
            ll_mulhilo(0xCA5A826395121157ULL, c2, &hi1, &lo1);
            c0 = hi1 ^ c1 ^ k0;
            c1 = lo1;
            c2 = hi0 ^ c3 ^ k1;
            c3 = lo0;
        }
        out[0] = c0; out[1] = c1; out[2] = c2; out[3] = c3;
    }

    /* Four standard normals for one counter block via two Box-Muller pairs. */
    static inline void ll_normal_block(uint64_t seed, uint64_t subkey, uint64_t block, double *z) {
        uint64_t ctr[4] = {block, 0, 0, 0};
        uint64_t key[2] = {seed, subkey};
        uint64_t r[4];
        const double two_pi = 6.283185307179586;
        const double scale = 1.0 / 9007199254740992.0;
        int j;
        ll_philox4x64_10(ctr, key, r);
        for (j = 0; j < 2; j++) {
            double u1 = ((double)((r[2 * j] >> 11) + 1)) * scale;
            double u2 = ((double)(r[2 * j + 1] >> 11)) * scale;
            double rad = sqrt(-2.0 * log(u1));
            z[2 * j] = rad * cos(two_pi * u2);
            z[2 * j + 1] = rad * sin(two_pi * u2);
        }
    }
    """
    void ll_philox4x64_10(const uint64_t *ctr_in, const uint64_t *key_in, uint64_t *out) nogil
    void ll_normal_block(uint64_t seed, uint64_t subkey, uint64_t block, double *z) nogil


def philox_block(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3, uint64_t k0, uint64_t k1):
    """Raw Philox4x64-10 output for one counter/key pair."""
    cdef uint64_t ctr[4]
    cdef uint64_t key[2]
    cdef uint64_t out[4]
    ctr[0] = c0; ctr[1] = c1; ctr[2] = c2; ctr[3] = c3
    key[0] = k0; key[1] = k1
    ll_philox4x64_10(ctr, key, out)
    return (out[0], out[1], out[2], out[3])


def normals(uint64_t seed, uint64_t stream, int64_t path0, int64_t n_paths,
            int64_t step0, int64_t n_steps, int num_threads=1):
    """Standard normals for paths [path0, path0+n_paths) and steps [step0, step0+n_steps)."""
    out = np.empty((n_paths, n_steps), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef int64_t i, k, step
    cdef uint64_t subkey, blk, cur
    cdef double *z
    with nogil, parallel(num_threads=num_threads):
        z = <double *> malloc(4 * sizeof(double))
        for i in prange(n_paths, schedule="static"):
            subkey = (stream << 32) | <uint64_t>(path0 + i)
            cur = 0xFFFFFFFFFFFFFFFFULL
            for k in range(n_steps):
                step = step0 + k
                blk = <uint64_t>(step >> 2)
                if blk != cur:
                    ll_normal_block(seed, subkey, blk, z)
                    cur = blk
                o[i, k] = z[step & 3]
        free(z)
    return out


def optimal_paths(uint64_t seed, int64_t path0, int64_t n_paths,
                  double x0, double y0, double gamma, double dt,
                  const double[::1] coef, const double[::1] kappa, const double[::1] shift,
                  const double[::1] rho, const double[::1] vol, const double[::1] w,
                  const double[::1] lamdt, const double[::1] disc,
                  const double[::1] ia1, const double[::1] ia2, const double[::1] ib,
                  const double[::1] check, int64_t record_every, int num_threads=1):
    """Optimal feedback paths driven by the auxiliary state P = X + Y/gamma.

    Per step n: post-trade X_n = coef[n]*P_n - shift[n], Y_n = gamma*(P_n - X_n),
    then P_{n+1} = P_n*(1 - kappa[n]*dt) - rho[n]*shift[n]*dt + vol[n]*z_n.
    """
    cdef int64_t N = coef.shape[0] - 1
    cdef int64_t n_rec = N // record_every + 1
    cost_a = np.zeros(n_paths)
    res_a = np.zeros(n_paths)
    j0_a = np.zeros(n_paths)
    xm_a = np.zeros(n_paths)
    P_a = np.empty((n_paths, n_rec))
    X_a = np.empty((n_paths, n_rec))
    Y_a = np.empty((n_paths, n_rec))
    bad_a = np.zeros(n_paths, dtype=np.int8)
    cdef double[::1] cost = cost_a, res = res_a, j0 = j0_a, xm = xm_a
    cdef double[:, ::1] Pr = P_a, Xr = X_a, Yr = Y_a
    cdef signed char[::1] bad = bad_a
    cdef int64_t i, n, slot
    cdef uint64_t subkey, blk, cur
    cdef double P, X, Y, Xm, Ym, xi, acc, r, rmax, zn
    cdef double *z
    with nogil, parallel(num_threads=num_threads):
        z = <double *> malloc(4 * sizeof(double))
        for i in prange(n_paths, schedule="static"):
            subkey = <uint64_t>(path0 + i)
            cur = 0xFFFFFFFFFFFFFFFFULL
            P = x0 + y0 / gamma
            Xm = x0
            Ym = y0
            acc = 0.0
            rmax = 0.0
            for n in range(N + 1):
                X = coef[n] * P - shift[n]
                Y = gamma * (P - X)
                xi = Xm - X
                acc = acc + w[n] * (Ym * xi + 0.5 * gamma * xi * xi + lamdt[n] * X * X)
                if check[n] != 0.0:
                    r = fabs(disc[n] * (ia1[n] * X + ia2[n] * Y) + ib[n])
                    if r > rmax:
                        rmax = r
                if n == 0:
                    j0[i] = X - x0
                if n % record_every == 0:
                    slot = n // record_every
                    Pr[i, slot] = P
                    Xr[i, slot] = X
                    Yr[i, slot] = Y
                if n == N:
                    xm[i] = Xm
                    break
                blk = <uint64_t>(n >> 2)
                if blk != cur:
                    ll_normal_block(seed, subkey, blk, z)
                    cur = blk
                zn = z[n & 3]
                P = P * (1.0 - kappa[n] * dt) - rho[n] * shift[n] * dt + vol[n] * zn
                if not (fabs(P) < 1e300):
                    bad[i] = 1
                    break
                Xm = X
                Ym = gamma * (P - X)
            cost[i] = acc
            res[i] = rmax
        free(z)
    return {"cost": cost_a, "max_residual": res_a, "jump0": j0_a, "x_pre_terminal": xm_a,
            "P": P_a, "X": X_a, "Y": Y_a, "blown_up": bad_a}


def strategy_paths(uint64_t seed, int64_t path0, int64_t n_paths,
                   double x0, double y0, double gamma, double dt,
                   const double[::1] alpha, const double[::1] beta, const double[::1] shift,
                   const double[::1] eta, const double[::1] rho, const double[::1] sig,
                   const double[::1] w, const double[::1] lamdt,
                   double sign_tol, int64_t sign_last, int64_t record_every, int num_threads=1):
    """Affine trade rule xi_n = alpha*X + beta*Y + shift + eta*zeta on the discrete state.

    X_{n+1-} = X_n- - xi_n and Y_{n+1-} = (1 - dt*rho_n)(Y_n- + gamma*xi_n) + sig_n*z_n,
    where ``sig`` already carries the sqrt(dt) factor.  Steps n <= sign_last whose
    post-trade position satisfies |X| <= sign_tol are tallied for the sign rule.
    """
    cdef int64_t N = alpha.shape[0] - 1
    cdef int64_t n_rec = N // record_every + 1
    cost_a = np.zeros(n_paths)
    nq_a = np.zeros(n_paths, dtype=np.int64)
    na_a = np.zeros(n_paths, dtype=np.int64)
    P_a = np.empty((n_paths, n_rec))
    X_a = np.empty((n_paths, n_rec))
    Y_a = np.empty((n_paths, n_rec))
    bad_a = np.zeros(n_paths, dtype=np.int8)
    cdef double[::1] cost = cost_a
    cdef int64_t[::1] nq = nq_a, na = na_a
    cdef double[:, ::1] Pr = P_a, Xr = X_a, Yr = Y_a
    cdef signed char[::1] bad = bad_a
    cdef int64_t i, n, slot, q, ag
    cdef uint64_t sk0, sk1, blk, cur0, cur1
    cdef double X, Y, Xp, Yp, xi, acc, zn, zt, noise, prevx
    cdef int pending
    cdef double *z0
    cdef double *z1
    with nogil, parallel(num_threads=num_threads):
        z0 = <double *> malloc(4 * sizeof(double))
        z1 = <double *> malloc(4 * sizeof(double))
        for i in prange(n_paths, schedule="static"):
            sk0 = <uint64_t>(path0 + i)
            sk1 = (<uint64_t>1 << 32) | <uint64_t>(path0 + i)
            cur0 = 0xFFFFFFFFFFFFFFFFULL
            cur1 = 0xFFFFFFFFFFFFFFFFULL
            X = x0
            Y = y0
            acc = 0.0
            q = 0
            ag = 0
            pending = 0
            noise = 0.0
            prevx = 0.0
            for n in range(N + 1):
                blk = <uint64_t>(n >> 2)
                zt = 0.0
                if eta[n] != 0.0:
                    if blk != cur1:
                        ll_normal_block(seed, sk1, blk, z1)
                        cur1 = blk
                    zt = z1[n & 3]
                xi = alpha[n] * X + beta[n] * Y + shift[n] + eta[n] * zt
                Xp = X - xi
                Yp = Y + gamma * xi
                acc = acc + w[n] * (Y * xi + 0.5 * gamma * xi * xi + lamdt[n] * Xp * Xp)
                if pending:
                    q = q + 1
                    if (Xp - prevx > 0 and noise > 0) or (Xp - prevx < 0 and noise < 0) or (Xp - prevx == 0 and noise == 0):
                        ag = ag + 1
                    pending = 0
                if n % record_every == 0:
                    slot = n // record_every
                    Pr[i, slot] = Xp + Yp / gamma
                    Xr[i, slot] = Xp
                    Yr[i, slot] = Yp
                if n == N:
                    break
                if blk != cur0:
                    ll_normal_block(seed, sk0, blk, z0)
                    cur0 = blk
                zn = z0[n & 3]
                if n <= sign_last and fabs(Xp) <= sign_tol:
                    pending = 1
                    prevx = Xp
                    noise = sig[n] * zn
                X = Xp
                Y = (1.0 - dt * rho[n]) * Yp + sig[n] * zn
                if not (fabs(X) < 1e300 and fabs(Y) < 1e300):
                    bad[i] = 1
                    break
            cost[i] = acc
            nq[i] = q
            na[i] = ag
        free(z0)
        free(z1)
    return {"cost": cost_a, "n_qualify": nq_a, "n_agree": na_a,
            "P": P_a, "X": X_a, "Y": Y_a, "blown_up": bad_a}
