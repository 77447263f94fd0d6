# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled SOMP-NS inner loop.

Same contract as ``_kernels_py``. The correlation step goes through BLAS
gemm; orthogonalisation and the residual update are plain loops because
the basis stays small (``iterations`` columns).
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport fabs, sqrt, INFINITY
from scipy.linalg.cython_blas cimport dgemm, sgemm

cnp.import_array()

OK = 0
RANK_DEFICIENT = 1


cdef inline void _corr(const floating[:, ::1] atoms, floating[:, ::1] res,
                       floating[:, ::1] out) noexcept nogil:
    # out (n x K) = atoms (n x m) . res (m x K), all row-major. Seen from
    # column-major BLAS this is the K x n product res^T . atoms^T with no
    # transposes, the fast layout for small K.
    cdef char nt = b'N'
    cdef int n = atoms.shape[0]
    cdef int m = atoms.shape[1]
    cdef int K = res.shape[1]
    cdef floating one = 1.0
    cdef floating zero = 0.0
    if floating is double:
        dgemm(&nt, &nt, &K, &n, &m, &one, &res[0, 0], &K,
              <floating*>&atoms[0, 0], &m, &zero, &out[0, 0], &K)
    else:
        sgemm(&nt, &nt, &K, &n, &m, &one, &res[0, 0], &K,
              <floating*>&atoms[0, 0], &m, &zero, &out[0, 0], &K)


def weighted_correlation(phi, residual, weights):
    """Return ``sum_k q_k |<r_k, phi_j>|`` for every atom ``j``."""
    dtype = phi.dtype
    atoms = np.ascontiguousarray(phi.T, dtype=dtype)
    res = np.ascontiguousarray(residual, dtype=dtype)
    out = np.empty((atoms.shape[0], res.shape[1]), dtype=dtype)
    if dtype == np.float64:
        _corr[double](atoms, res, out)
    else:
        _corr[float](atoms, res, out)
    return np.abs(out) @ np.asarray(weights, dtype=dtype)


cdef int _run(const floating[:, ::1] atoms, floating[:, ::1] res,
              const floating[::1] w, floating[:, ::1] corr,
              floating[:, ::1] basis, floating[:, ::1] tri,
              long long[::1] selected, double[::1] metric,
              double[:, ::1] col_norms, unsigned char[::1] taken,
              int iterations, double rank_tol, int* done) noexcept nogil:
    cdef Py_ssize_t n = atoms.shape[0]
    cdef Py_ssize_t m = atoms.shape[1]
    cdef Py_ssize_t K = res.shape[1]
    cdef Py_ssize_t t, i, j, k, p, best
    cdef double score, best_score, acc, r, diag_max = 0.0
    cdef floating c, inv

    for t in range(iterations):
        _corr(atoms, res, corr)
        best = -1
        best_score = -INFINITY
        for j in range(n):
            if taken[j]:
                continue
            score = 0.0
            for k in range(K):
                score = score + w[k] * fabs(corr[j, k])
            if score > best_score:
                best_score = score
                best = j
        if best < 0:
            best = 0
            while taken[best]:
                best += 1
            best_score = 0.0
        selected[t] = best
        metric[t] = best_score
        taken[best] = 1

        # new basis column starts as the chosen atom, then two MGS passes
        for i in range(m):
            basis[i, t] = atoms[best, i]
        for p in range(2):
            for i in range(t):
                acc = 0.0
                for j in range(m):
                    acc = acc + basis[j, i] * basis[j, t]
                c = <floating>acc
                for j in range(m):
                    basis[j, t] = basis[j, t] - c * basis[j, i]
                tri[i, t] = tri[i, t] + c
        acc = 0.0
        for j in range(m):
            acc = acc + basis[j, t] * basis[j, t]
        r = sqrt(acc)
        if r > diag_max:
            diag_max = r
        if not (r > rank_tol * diag_max):
            for j in range(m):
                basis[j, t] = 0.0
            done[0] = t
            return 1
        inv = <floating>(1.0 / r)
        for j in range(m):
            basis[j, t] = basis[j, t] * inv
        tri[t, t] = <floating>r

        for k in range(K):
            acc = 0.0
            for j in range(m):
                acc = acc + basis[j, t] * res[j, k]
            c = <floating>acc
            acc = 0.0
            for j in range(m):
                res[j, k] = res[j, k] - c * basis[j, t]
                acc = acc + res[j, k] * res[j, k]
            col_norms[t, k] = sqrt(acc)
    done[0] = iterations
    return 0


def somp_ns_kernel(phi, y, weights, int iterations, double rank_tol):
    """Run ``iterations`` steps of weighted SOMP; see ``_kernels_py``."""
    dtype = phi.dtype
    n = phi.shape[1]
    m = phi.shape[0]
    K = y.shape[1]
    atoms = np.ascontiguousarray(phi.T, dtype=dtype)
    res = np.array(y, dtype=dtype, order="C", copy=True)
    w = np.ascontiguousarray(weights, dtype=dtype)
    corr = np.empty((n, K), dtype=dtype)
    basis = np.zeros((m, iterations), dtype=dtype)
    tri = np.zeros((iterations, iterations), dtype=dtype)
    selected = np.zeros(iterations, dtype=np.int64)
    metric = np.zeros(iterations, dtype=np.float64)
    col_norms = np.zeros((iterations, K), dtype=np.float64)
    taken = np.zeros(n, dtype=np.uint8)
    cdef int done = 0
    cdef int status
    cdef const double[:, ::1] a64
    cdef double[:, ::1] r64, c64, b64, t64
    cdef const double[::1] w64
    cdef const float[:, ::1] a32
    cdef float[:, ::1] r32, c32, b32, t32
    cdef const float[::1] w32
    cdef long long[::1] sel_v = selected
    cdef double[::1] met_v = metric
    cdef double[:, ::1] cn_v = col_norms
    cdef unsigned char[::1] tk_v = taken
    if dtype == np.float64:
        a64, r64, w64, c64, b64, t64 = atoms, res, w, corr, basis, tri
        with nogil:
            status = _run[double](a64, r64, w64, c64, b64, t64, sel_v, met_v,
                                  cn_v, tk_v, iterations, rank_tol, &done)
    else:
        a32, r32, w32, c32, b32, t32 = atoms, res, w, corr, basis, tri
        with nogil:
            status = _run[float](a32, r32, w32, c32, b32, t32, sel_v, met_v,
                                 cn_v, tk_v, iterations, rank_tol, &done)
    residual = res
    if status:
        return (RANK_DEFICIENT, selected[:done], metric[:done],
                col_norms[:done], basis[:, :done], tri[:done, :done], residual)
    return OK, selected, metric, col_norms, basis, tri, residual
