# cython: language_level=3
"""Compiled inner loops. Signatures mirror ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, log2

cnp.import_array()


cdef inline double _soft(double z, double gamma) noexcept nogil:
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


cdef double _objective(const double[::1] c, const double[::1] grad,
                       const double[::1] beta, double yy, double lam,
                       Py_ssize_t p) noexcept nogil:
    # 0.5*yy - c.b + 0.5*b'Gb with G b = c - grad
    cdef double cross = 0.0, l1 = 0.0
    cdef Py_ssize_t j
    for j in range(p):
        cross += beta[j] * (c[j] + grad[j])
        l1 += fabs(beta[j])
    return 0.5 * yy - 0.5 * cross + lam * l1


cdef double _sweep(const double[:, ::1] G, double[::1] grad, double[::1] beta,
                   double lam, Py_ssize_t p, bint active_only) noexcept nogil:
    cdef Py_ssize_t j, m
    cdef double gjj, old, new, delta, dmax = 0.0
    for j in range(p):
        old = beta[j]
        if active_only and old == 0.0:
            continue
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        new = _soft(grad[j] + gjj * old, lam) / gjj
        delta = new - old
        if delta != 0.0:
            beta[j] = new
            for m in range(p):
                grad[m] -= G[j, m] * delta
            if fabs(delta) > dmax:
                dmax = fabs(delta)
    return dmax


def cd_lasso(const double[:, ::1] G, const double[::1] c, double[::1] beta,
             double lam, double tol, Py_ssize_t max_sweeps, double yy):
    """Covariance-update coordinate descent, modifying ``beta`` in place.

    Returns ``(n_sweeps, converged, objective_trace)``; the trace starts with
    the objective at the initial ``beta``.
    """
    cdef Py_ssize_t p = beta.shape[0]
    cdef Py_ssize_t j, m, sweeps = 0
    cdef bint converged = False
    cdef double dmax
    grad_arr = np.array(c, dtype=np.float64, copy=True)
    cdef double[::1] grad = grad_arr
    trace_arr = np.empty(max_sweeps + 1, dtype=np.float64)
    cdef double[::1] trace = trace_arr

    with nogil:
        for j in range(p):
            if beta[j] != 0.0:
                for m in range(p):
                    grad[m] -= G[j, m] * beta[j]
        trace[0] = _objective(c, grad, beta, yy, lam, p)
        while sweeps < max_sweeps:
            dmax = _sweep(G, grad, beta, lam, p, False)
            sweeps += 1
            trace[sweeps] = _objective(c, grad, beta, yy, lam, p)
            if dmax < tol:
                converged = True
                break
            while sweeps < max_sweeps:
                dmax = _sweep(G, grad, beta, lam, p, True)
                sweeps += 1
                trace[sweeps] = _objective(c, grad, beta, yy, lam, p)
                if dmax < tol:
                    break
    return sweeps, bool(converged), trace_arr[:sweeps + 1].copy()


def kmer_incidence(const cnp.uint8_t[:, ::1] encoded, int k):
    """CSR incidence of k-mer code -> sequences containing it.

    Returns ``(offsets, seqs)``: the sequences holding code ``c`` are
    ``seqs[offsets[c]:offsets[c + 1]]``, ascending and without repeats.
    """
    cdef Py_ssize_t n = encoded.shape[0], length = encoded.shape[1]
    cdef Py_ssize_t n_codes = 1 << (2 * k)
    cdef Py_ssize_t i, pos, code, mask = n_codes - 1
    offsets_arr = np.zeros(n_codes + 1, dtype=np.int64)
    stamp_arr = np.full(n_codes, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] offsets = offsets_arr
    cdef cnp.int64_t[::1] stamp = stamp_arr
    cdef cnp.int64_t[::1] fill
    cdef cnp.int64_t[::1] seqs

    if k > length:
        return offsets_arr, np.zeros(0, dtype=np.int64)

    with nogil:
        for i in range(n):
            code = 0
            for pos in range(length):
                code = ((code << 2) | encoded[i, pos]) & mask
                if pos >= k - 1 and stamp[code] != i:
                    stamp[code] = i
                    offsets[code + 1] += 1
        for code in range(n_codes):
            offsets[code + 1] += offsets[code]
    seqs_arr = np.empty(offsets_arr[n_codes], dtype=np.int64)
    seqs = seqs_arr
    fill_arr = offsets_arr[:n_codes].copy()
    fill = fill_arr
    stamp_arr.fill(-1)
    with nogil:
        for i in range(n):
            code = 0
            for pos in range(length):
                code = ((code << 2) | encoded[i, pos]) & mask
                if pos >= k - 1 and stamp[code] != i:
                    stamp[code] = i
                    seqs[fill[code]] = i
                    fill[code] += 1
    return offsets_arr, seqs_arr


cdef inline double _plogp(double nij, double ni, double nj, double total) noexcept nogil:
    if nij <= 0.0:
        return 0.0
    return (nij / total) * log2(nij * total / (ni * nj))


def mi_bits(const cnp.int64_t[:, ::1] present, const cnp.int64_t[::1] bin_sizes,
            cnp.int64_t total):
    """Mutual information (bits) of each row's presence-by-bin table.

    Cell terms are summed in sorted order, so tables that are permutations
    of each other (cells or rows) give bit-identical values.
    """
    cdef Py_ssize_t rows = present.shape[0], nb = present.shape[1]
    cdef Py_ssize_t r, j, m
    cdef double n1, n0, nj, a, v, t = <double>total, acc
    out_arr = np.zeros(rows, dtype=np.float64)
    terms_arr = np.empty(2 * nb, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] terms = terms_arr
    with nogil:
        for r in range(rows):
            n1 = 0.0
            for j in range(nb):
                n1 += present[r, j]
            n0 = t - n1
            for j in range(nb):
                nj = <double>bin_sizes[j]
                a = <double>present[r, j]
                terms[2 * j] = _plogp(a, n1, nj, t)
                terms[2 * j + 1] = _plogp(nj - a, n0, nj, t)
            # insertion sort; at most 2 * n_bins entries
            for j in range(1, 2 * nb):
                v = terms[j]
                m = j - 1
                while m >= 0 and terms[m] > v:
                    terms[m + 1] = terms[m]
                    m -= 1
                terms[m + 1] = v
            acc = 0.0
            for j in range(2 * nb):
                acc += terms[j]
            out[r] = acc if acc > 0.0 else 0.0
    return out_arr
