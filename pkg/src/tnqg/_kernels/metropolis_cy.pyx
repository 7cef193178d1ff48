# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Metropolis sweep kernel.  Mirrors metropolis_py.run_chain
step for step: same proposal stream, same acceptance rule."""

import numpy as np

from libc.math cimport INFINITY, log

cdef extern from "complex.h":
    double complex cexp(double complex) nogil
    double complex clog(double complex) nogil
    double cabs(double complex) nogil
    double creal(double complex) nogil
    double cimag(double complex) nogil


cdef inline double complex _log2cosh(double complex z) nogil:
    cdef double complex s = z
    if creal(z) < 0:
        s = -z
    return s + clog(1.0 + cexp(-2.0 * s))


def run_chain(pack, spins0, int n_burn_sweeps, int n_record, int record_every,
              prop_sites, uniforms):
    cdef int n = pack.n_sites
    cdef int n_terms = pack.n_terms
    cdef int n_groups = pack.n_groups

    cdef double complex[::1] weights = pack.weights
    cdef double[::1] log_w_abs = pack.log_w_abs
    cdef int[::1] group_ids = pack.group_ids
    cdef double complex[:, ::1] a = pack.a
    cdef double complex[::1] b_flat = pack.b_flat
    cdef double complex[::1] w_flat = pack.w_flat
    cdef long[::1] offsets = pack.offsets
    cdef int[::1] sites = np.ascontiguousarray(prop_sites, dtype=np.int32)
    cdef double[::1] unif = np.ascontiguousarray(uniforms, dtype=np.float64)

    cdef long total_hidden = offsets[n_terms]
    cdef double[::1] sigma = np.asarray(spins0, dtype=np.float64).copy()
    theta_arr = np.zeros(total_hidden, dtype=np.complex128)
    theta_new_arr = np.zeros(total_hidden, dtype=np.complex128)
    cdef double complex[::1] theta = theta_arr
    cdef double complex[::1] theta_new = theta_new_arr
    cdef double complex[::1] adot = np.zeros(n_terms, dtype=np.complex128)
    cdef double complex[::1] adot_new = np.zeros(n_terms, dtype=np.complex128)
    cdef double complex[::1] logphi = np.zeros(n_terms, dtype=np.complex128)
    cdef double complex[::1] logphi_new = np.zeros(n_terms, dtype=np.complex128)
    cdef double complex[::1] zg = np.zeros(n_groups, dtype=np.complex128)

    samples_arr = np.empty((n_record, n), dtype=np.int8)
    cdef signed char[:, ::1] samples = samples_arr

    cdef long k, j, lo, hi, p
    cdef int s, g, sweep, step, rec
    cdef long n_total_sweeps = n_burn_sweeps + (<long>n_record) * record_every
    cdef double complex acc, z
    cdef double m, dens, logdens, logdens_new, sig_s
    cdef long accepted = 0

    # initial tables
    for k in range(n_terms):
        lo = offsets[k]
        hi = offsets[k + 1]
        acc = 0
        for j in range(n):
            acc = acc + a[k, j] * sigma[j]
        adot[k] = acc
        acc = 0
        for j in range(lo, hi):
            z = b_flat[j]
            for s in range(n):
                z = z + w_flat[j * n + s] * sigma[s]
            theta[j] = z
            acc = acc + _log2cosh(z)
        logphi[k] = adot[k] + acc

    logdens = _log_density(weights, log_w_abs, group_ids, logphi, zg,
                           n_terms, n_groups)

    p = 0
    rec = 0
    with nogil:
        for sweep in range(n_total_sweeps):
            for step in range(n):
                s = sites[p]
                sig_s = sigma[s]
                for k in range(n_terms):
                    lo = offsets[k]
                    hi = offsets[k + 1]
                    adot_new[k] = adot[k] - 2.0 * sig_s * a[k, s]
                    acc = 0
                    for j in range(lo, hi):
                        z = theta[j] - 2.0 * sig_s * w_flat[j * n + s]
                        theta_new[j] = z
                        acc = acc + _log2cosh(z)
                    logphi_new[k] = adot_new[k] + acc
                logdens_new = _log_density(weights, log_w_abs, group_ids,
                                           logphi_new, zg, n_terms, n_groups)
                if log(unif[p]) < logdens_new - logdens:
                    sigma[s] = -sig_s
                    theta[:] = theta_new
                    adot[:] = adot_new
                    logphi[:] = logphi_new
                    logdens = logdens_new
                    accepted += 1
                p += 1
            if sweep >= n_burn_sweeps and (sweep - n_burn_sweeps + 1) % record_every == 0:
                for j in range(n):
                    samples[rec, j] = <signed char>(1 if sigma[j] > 0 else -1)
                rec += 1

    return samples_arr, accepted


cdef double _log_density(double complex[::1] weights, double[::1] log_w_abs,
                         int[::1] group_ids, double complex[::1] logphi,
                         double complex[::1] zg, int n_terms,
                         int n_groups) nogil:
    cdef long k
    cdef int g
    cdef double m = -INFINITY
    cdef double dens = 0.0
    for k in range(n_terms):
        if creal(logphi[k]) + log_w_abs[k] > m:
            m = creal(logphi[k]) + log_w_abs[k]
    if m == -INFINITY:
        return -INFINITY
    for g in range(n_groups):
        zg[g] = 0
    for k in range(n_terms):
        zg[group_ids[k]] = zg[group_ids[k]] + weights[k] * cexp(logphi[k] - m)
    for g in range(n_groups):
        dens += creal(zg[g]) ** 2 + cimag(zg[g]) ** 2
    if dens == 0.0:
        return -INFINITY
    return 2.0 * m + log(dens)
