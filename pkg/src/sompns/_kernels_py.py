"""Pure NumPy implementation of the SOMP-NS inner loop.

Mirrors the compiled ``_kernels`` extension call for call. Used when the
extension is not built or when ``SOMPNS_PURE_PYTHON=1`` is set.
"""

import numpy as np

# status codes shared with the compiled kernel
OK = 0
RANK_DEFICIENT = 1


def weighted_correlation(phi, residual, weights):
    """Return ``sum_k q_k |<r_k, phi_j>|`` for every atom ``j``."""
    return np.abs(phi.T @ residual) @ weights


def somp_ns_kernel(phi, y, weights, iterations, rank_tol):
    """Run ``iterations`` steps of weighted SOMP with incremental Gram-Schmidt.

    All arrays share the dtype of ``phi``. Returns ``(status, selected,
    metric, col_norms, basis, tri, residual)`` where ``selected`` and
    ``metric`` hold the completed iterations only, ``col_norms[t, k]`` is
    the norm of the k-th residual column after iteration ``t``, and
    ``basis @ tri`` reproduces the selected columns of ``phi``.
    """
    dtype = phi.dtype
    m, n = phi.shape
    K = y.shape[1]
    w = np.asarray(weights, dtype=dtype)
    residual = np.array(y, dtype=dtype, order="C", copy=True)
    basis = np.zeros((m, iterations), dtype=dtype)
    tri = np.zeros((iterations, iterations), dtype=dtype)
    selected = np.zeros(iterations, dtype=np.int64)
    metric = np.zeros(iterations, dtype=np.float64)
    col_norms = np.zeros((iterations, K), dtype=np.float64)
    taken = np.zeros(n, dtype=bool)
    diag_max = 0.0

    for t in range(iterations):
        scores = weighted_correlation(phi, residual, w)
        scores[taken] = -np.inf
        j = int(np.argmax(scores))
        selected[t] = j
        metric[t] = scores[j]
        taken[j] = True

        v = phi[:, j].copy()
        Qt = basis[:, :t]
        for _ in range(2):
            c = Qt.T @ v
            v -= Qt @ c
            tri[:t, t] += c
        r = float(np.sqrt(v @ v))
        diag_max = max(diag_max, r)
        if not r > rank_tol * diag_max:
            return (RANK_DEFICIENT, selected[:t], metric[:t], col_norms[:t],
                    basis[:, :t], tri[:t, :t], residual)
        u = v / dtype.type(r)
        basis[:, t] = u
        tri[t, t] = r
        residual -= np.outer(u, u @ residual)
        col_norms[t] = np.sqrt(np.einsum("ij,ij->j", residual, residual))

    return OK, selected, metric, col_norms, basis, tri, residual
