# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampling kernels; same contract and RNG scheme as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _unit(uint64_t z) noexcept nogil:
    return <double>(z >> 11) * (1.0 / 9007199254740992.0)


def mix64(z):
    cdef uint64_t[::1] v = np.array(z, dtype=np.uint64, ndmin=1)
    out = np.empty(v.shape[0], dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t i
    for i in range(v.shape[0]):
        o[i] = _mix64(v[i])
    return out


def to_unit(z):
    return (np.asarray(z, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def trajectory_seeds(master_seed, indices):
    cdef uint64_t m = <uint64_t>(int(master_seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t[::1] idx = np.array(indices, dtype=np.uint64, ndmin=1)
    out = np.empty(idx.shape[0], dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t i
    for i in range(idx.shape[0]):
        o[i] = m ^ _mix64((idx[i] + 1) * GOLDEN)
    return out


def stream_draws(seeds, int n_steps):
    cdef uint64_t[::1] s = np.array(seeds, dtype=np.uint64, ndmin=1)
    out = np.empty((s.shape[0], n_steps), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, k
    for i in range(s.shape[0]):
        for k in range(n_steps):
            o[i, k] = _unit(_mix64(s[i] + <uint64_t>(k + 1) * GOLDEN))
    return out


cdef int _step(const double[:, :, ::1] eff, double[::1] psi,
               double[:, ::1] phi, double[::1] probs, double draw, double eps,
               double* p_out, double* total_out) noexcept nogil:
    """One sampling step in place on ``psi``; returns the branch index or -1.

    Complex arrays arrive as float64 views with interleaved (re, im) pairs so
    the products below stay plain real arithmetic.
    """
    cdef Py_ssize_t nb = eff.shape[0], d = eff.shape[1]
    cdef Py_ssize_t b, i, j
    cdef double ar, ai, er, ei, xr, xi
    cdef double p, total = 0.0, cum = 0.0, u, scale
    cdef int idx = -1, last = -1
    for b in range(nb):
        p = 0.0
        for i in range(d):
            ar = 0.0
            ai = 0.0
            for j in range(d):
                er = eff[b, i, 2 * j]
                ei = eff[b, i, 2 * j + 1]
                xr = psi[2 * j]
                xi = psi[2 * j + 1]
                ar = ar + (er * xr - ei * xi)
                ai = ai + (er * xi + ei * xr)
            phi[b, 2 * i] = ar
            phi[b, 2 * i + 1] = ai
            p = p + (ar * ar + ai * ai)
        probs[b] = p
        if p >= eps:
            total = total + p
            last = <int>b
    total_out[0] = total
    if total < eps:
        return -1
    u = draw * total
    for b in range(nb):
        if probs[b] >= eps:
            cum = cum + probs[b]
            if u <= cum:
                idx = <int>b
                break
    if idx < 0:
        idx = last
    p_out[0] = probs[idx]
    scale = sqrt(probs[idx])
    for i in range(2 * d):
        psi[i] = phi[idx, i] / scale
    return idx


def _real_view(a, shape):
    return np.ascontiguousarray(a, dtype=np.complex128).view(np.float64).reshape(shape)


def sample_branch(eff, psi, double draw, double eps):
    eff = np.ascontiguousarray(eff, dtype=np.complex128)
    cdef Py_ssize_t nb = eff.shape[0], d = eff.shape[1]
    cdef const double[:, :, ::1] e = _real_view(eff, (nb, d, 2 * d))
    state = np.array(psi, dtype=np.complex128, copy=True)
    cdef double[::1] s = state.view(np.float64)
    cdef double[:, ::1] phi = np.empty((nb, 2 * d), dtype=np.float64)
    cdef double[::1] probs = np.empty(nb, dtype=np.float64)
    cdef double p = 0.0, total = 0.0
    cdef int idx = _step(e, s, phi, probs, draw, eps, &p, &total)
    if idx < 0:
        return -1, 0.0, total, np.array(psi, dtype=np.complex128, copy=True)
    return idx, p, total, state


def run_batch(eff, psi0, seeds, int n_steps, double eps):
    eff = np.ascontiguousarray(eff, dtype=np.complex128)
    cdef const double[:, :, ::1] e = _real_view(eff, (eff.shape[0], eff.shape[1], 2 * eff.shape[1]))
    cdef uint64_t[::1] sd = np.array(seeds, dtype=np.uint64, ndmin=1)
    cdef Py_ssize_t n = sd.shape[0], d = e.shape[1], nb = e.shape[0]
    start = np.asarray(psi0, dtype=np.complex128)
    states = np.tile(start, (n, 1))
    branches = np.zeros((n, n_steps), dtype=np.int64)
    probs_out = np.zeros((n, n_steps), dtype=np.float64)
    cdef double[:, ::1] st = states.view(np.float64)
    cdef int64_t[:, ::1] br = branches
    cdef double[:, ::1] pr = probs_out
    cdef double[:, ::1] phi = np.empty((nb, 2 * d), dtype=np.float64)
    cdef double[::1] probs = np.empty(nb, dtype=np.float64)
    cdef Py_ssize_t t, k
    cdef int idx
    cdef long failed = 0
    cdef double p = 0.0, total = 0.0, max_dev = 0.0, draw
    with nogil:
        for t in range(n):
            for k in range(n_steps):
                draw = _unit(_mix64(sd[t] + <uint64_t>(k + 1) * GOLDEN))
                idx = _step(e, st[t], phi, probs, draw, eps, &p, &total)
                if fabs(total - 1.0) > max_dev:
                    max_dev = fabs(total - 1.0)
                if idx < 0:
                    failed += 1
                    br[t, k] = -1
                    pr[t, k] = 0.0
                else:
                    br[t, k] = idx
                    pr[t, k] = p
    return states, branches, probs_out, max_dev, failed
