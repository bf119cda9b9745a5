"""Pure numpy/Python versions of the compiled kernels.

Used when ``_ckernels`` is not built, or when ``BARCODEBIAS_BACKEND=python``.
"""
import numpy as np


def _objective(c, grad, beta, yy, lam):
    return 0.5 * yy - 0.5 * float(beta @ (c + grad)) + lam * float(np.abs(beta).sum())


def _sweep(G, grad, beta, lam, active_only):
    dmax = 0.0
    for j in range(beta.shape[0]):
        old = beta[j]
        if active_only and old == 0.0:
            continue
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        z = grad[j] + gjj * old
        if z > lam:
            new = (z - lam) / gjj
        elif z < -lam:
            new = (z + lam) / gjj
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            beta[j] = new
            grad -= G[j] * delta
            dmax = max(dmax, abs(delta))
    return dmax


def cd_lasso(G, c, beta, lam, tol, max_sweeps, yy):
    """Covariance-update coordinate descent, modifying ``beta`` in place.

    Returns ``(n_sweeps, converged, objective_trace)``; the trace starts with
    the objective at the initial ``beta``.
    """
    G = np.asarray(G, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    grad = c - G @ beta
    trace = [_objective(c, grad, beta, yy, lam)]
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        dmax = _sweep(G, grad, beta, lam, False)
        sweeps += 1
        trace.append(_objective(c, grad, beta, yy, lam))
        if dmax < tol:
            converged = True
            break
        while sweeps < max_sweeps:
            dmax = _sweep(G, grad, beta, lam, True)
            sweeps += 1
            trace.append(_objective(c, grad, beta, yy, lam))
            if dmax < tol:
                break
    return sweeps, converged, np.asarray(trace)


def kmer_incidence(encoded, k):
    """CSR incidence of k-mer code -> sequences containing it.

    Returns ``(offsets, seqs)``: the sequences holding code ``c`` are
    ``seqs[offsets[c]:offsets[c + 1]]``, ascending and without repeats.
    """
    encoded = np.asarray(encoded, dtype=np.int64)
    n, length = encoded.shape
    n_codes = 1 << (2 * k)
    if k > length:
        return np.zeros(n_codes + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    n_windows = length - k + 1
    codes = np.zeros((n, n_windows), dtype=np.int64)
    for shift in range(k):
        codes = (codes << 2) | encoded[:, shift:shift + n_windows]
    seq_idx = np.repeat(np.arange(n, dtype=np.int64), n_windows)
    # unique on a combined key sorts by code, then sequence
    key = np.unique(codes.ravel() * n + seq_idx)
    uniq_codes = key // n if n else key
    seqs = key - uniq_codes * n
    counts = np.bincount(uniq_codes, minlength=n_codes)
    offsets = np.zeros(n_codes + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, seqs.astype(np.int64)


def mi_bits(present, bin_sizes, total):
    """Mutual information (bits) of each row's presence-by-bin table.

    Cell terms are summed in sorted order so permuted tables tie exactly.
    """
    present = np.asarray(present, dtype=np.float64)
    sizes = np.asarray(bin_sizes, dtype=np.float64)
    t = float(total)
    n1 = present.sum(axis=1, keepdims=True)
    n0 = t - n1
    absent = sizes - present
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(present > 0, (present / t) * np.log2(present * t / (n1 * sizes)), 0.0)
        b = np.where(absent > 0, (absent / t) * np.log2(absent * t / (n0 * sizes)), 0.0)
    terms = np.sort(np.concatenate([a, b], axis=1), axis=1)
    mi = np.zeros(terms.shape[0])
    for j in range(terms.shape[1]):
        mi += terms[:, j]
    return np.maximum(mi, 0.0)
