# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled propagation kernels (see ``_kernels_py`` for the reference semantics)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite
from libc.string cimport memcpy

cnp.import_array()

ctypedef cnp.int32_t idx_t


cdef struct Csr:
    const idx_t* indptr
    const idx_t* indices
    const double* data


cdef inline Csr _csr(const idx_t[::1] indptr, const idx_t[::1] indices, const double[::1] data):
    cdef Csr m
    m.indptr = &indptr[0]
    m.indices = &indices[0] if indices.shape[0] > 0 else NULL
    m.data = &data[0] if data.shape[0] > 0 else NULL
    return m


cdef void _drift(Csr a, Csr c, int n, int nb, int n_ctrl, const double* p,
                 const double* x, double* y, double* acc) noexcept nogil:
    # y[:, b] = (A0 + sum_c p[c, b] C_c) x[:, b]; states are (n, nb) row-major
    cdef int i, e, ci, r, b
    cdef double v
    cdef double* yi
    cdef const double* xc
    for i in range(n):
        yi = y + i * nb
        for b in range(nb):
            yi[b] = 0.0
        for e in range(a.indptr[i], a.indptr[i + 1]):
            v = a.data[e]
            xc = x + a.indices[e] * nb
            for b in range(nb):
                yi[b] += v * xc[b]
    for ci in range(n_ctrl):
        for i in range(n):
            r = ci * n + i
            if c.indptr[r] == c.indptr[r + 1]:
                continue
            for b in range(nb):
                acc[b] = 0.0
            for e in range(c.indptr[r], c.indptr[r + 1]):
                v = c.data[e]
                xc = x + c.indices[e] * nb
                for b in range(nb):
                    acc[b] += v * xc[b]
            yi = y + i * nb
            for b in range(nb):
                yi[b] += p[ci * nb + b] * acc[b]


cdef void _contract(const idx_t* prow, const idx_t* pcol, Py_ssize_t npat, int nb,
                    const double* kb, const double* y, double* acc) noexcept nogil:
    # acc[p] += sum_b kb[prow[p], b] y[pcol[p], b] over the union sparsity pattern
    cdef Py_ssize_t p
    cdef int b
    cdef double s
    cdef const double* kr
    cdef const double* yc
    for p in range(npat):
        kr = kb + prow[p] * nb
        yc = y + pcol[p] * nb
        s = 0.0
        for b in range(nb):
            s += kr[b] * yc[b]
        acc[p] += s


cdef bint _finite(const double* x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        if not isfinite(x[i]):
            return False
    return True


def forward(a, c, int n_ctrl, const double[::1] hs, const double[:, :, :, ::1] pvals,
            const cnp.int64_t[::1] seg_steps, x0, int method, stages=None):
    cdef Csr A = _csr(a[0], a[1], a[2])
    cdef Csr C = _csr(c[0], c[1], c[2])
    x_arr = np.array(x0, dtype=np.float64, order="C")
    cdef int n = x_arr.shape[0]
    cdef int nb = x_arr.shape[1]
    cdef Py_ssize_t N = <Py_ssize_t>n * nb
    cdef double[::1] x = x_arr.reshape(-1)
    cdef Py_ssize_t n_seg = seg_steps.shape[0]
    out_arr = np.empty((n_seg + 1, n, nb))
    cdef double[:, ::1] out = out_arr.reshape(n_seg + 1, N)
    cdef double[:, ::1] work = np.zeros((5, N))
    cdef double[::1] zero = np.zeros(max(n_ctrl, 1) * nb)
    cdef double[::1] acc = np.zeros(nb)
    cdef double* accp = &acc[0]
    cdef double* k1 = &work[0, 0]
    cdef double* k2 = &work[1, 0]
    cdef double* k3 = &work[2, 0]
    cdef double* k4 = &work[3, 0]
    cdef double* y = &work[4, 0]
    cdef const double* p0
    cdef const double* p1
    cdef const double* p2
    cdef Py_ssize_t s, k = 0, j, i
    cdef double h
    cdef bint bad = False
    cdef bint keep = stages is not None
    cdef double[:, :, ::1] st_mv
    cdef double* sp = NULL
    cdef int n_stage = 1 if method == 0 else 4
    if keep:
        st_mv = stages
        if st_mv.shape[0] < hs.shape[0] or st_mv.shape[1] != n_stage or st_mv.shape[2] != N:
            raise ValueError("stage buffer has the wrong shape")
        if hs.shape[0] > 0:
            sp = &st_mv[0, 0, 0]
    out[0, :] = x
    with nogil:
        for s in range(n_seg):
            for j in range(seg_steps[s]):
                h = hs[k]
                if n_ctrl > 0:
                    p0 = &pvals[k, 0, 0, 0]
                    p1 = &pvals[k, 1, 0, 0]
                    p2 = &pvals[k, 2, 0, 0]
                else:
                    p0 = p1 = p2 = &zero[0]
                if keep:
                    memcpy(sp + k * n_stage * N, &x[0], N * sizeof(double))
                if method == 0:
                    _drift(A, C, n, nb, n_ctrl, p0, &x[0], k1, accp)
                    for i in range(N):
                        x[i] += h * k1[i]
                else:
                    _drift(A, C, n, nb, n_ctrl, p0, &x[0], k1, accp)
                    for i in range(N):
                        y[i] = x[i] + 0.5 * h * k1[i]
                    if keep:
                        memcpy(sp + (k * n_stage + 1) * N, y, N * sizeof(double))
                    _drift(A, C, n, nb, n_ctrl, p1, y, k2, accp)
                    for i in range(N):
                        y[i] = x[i] + 0.5 * h * k2[i]
                    if keep:
                        memcpy(sp + (k * n_stage + 2) * N, y, N * sizeof(double))
                    _drift(A, C, n, nb, n_ctrl, p1, y, k3, accp)
                    for i in range(N):
                        y[i] = x[i] + h * k3[i]
                    if keep:
                        memcpy(sp + (k * n_stage + 3) * N, y, N * sizeof(double))
                    _drift(A, C, n, nb, n_ctrl, p2, y, k4, accp)
                    for i in range(N):
                        x[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                k += 1
            if not _finite(&x[0], N):
                bad = True
                break
            memcpy(&out[s + 1, 0], &x[0], N * sizeof(double))
    if bad:
        raise FloatingPointError(f"non-finite state after segment {s}")
    return out_arr


def backward(a, at, c, ct, int n_ctrl, pattern, int n_params, const double[::1] hs,
             const double[:, :, :, ::1] pvals, const cnp.int64_t[::1] seg_steps,
             records, impulses, int method, stages=None):
    cdef Csr A = _csr(a[0], a[1], a[2])
    cdef Csr AT = _csr(at[0], at[1], at[2])
    cdef Csr C = _csr(c[0], c[1], c[2])
    cdef Csr CT = _csr(ct[0], ct[1], ct[2])
    cdef const idx_t[::1] prow = pattern[0]
    cdef const idx_t[::1] pcol = pattern[1]
    cdef Py_ssize_t npat = prow.shape[0]
    cdef const idx_t* prow_p = &prow[0] if npat > 0 else NULL
    cdef const idx_t* pcol_p = &pcol[0] if npat > 0 else NULL
    macc_arr = np.zeros(max(npat, 1))
    cdef double[::1] macc = macc_arr
    cdef double* mp = &macc[0]
    cdef int n = records.shape[1]
    cdef int nb = records.shape[2]
    cdef Py_ssize_t N = <Py_ssize_t>n * nb
    cdef Py_ssize_t n_seg = seg_steps.shape[0]
    cdef const double[:, ::1] rec = np.ascontiguousarray(records, dtype=np.float64).reshape(n_seg + 1, N)
    cdef const double[:, ::1] imp = np.ascontiguousarray(impulses, dtype=np.float64).reshape(n_seg + 1, N)
    cdef Py_ssize_t max_m = 1
    cdef Py_ssize_t s
    for s in range(n_seg):
        if seg_steps[s] > max_m:
            max_m = seg_steps[s]
    cdef int n_stage = 1 if method == 0 else 4
    cdef bint stored = stages is not None
    cdef double[:, :, ::1] stg
    if stored:
        stg = stages
        if stg.shape[0] < hs.shape[0] or stg.shape[1] != n_stage or stg.shape[2] != N:
            raise ValueError("stage buffer has the wrong shape")
    else:
        stg = np.empty((max_m, n_stage, N))
    cdef double[:, ::1] work = np.zeros((8, N))
    cdef double* k1 = &work[0, 0]
    cdef double* k2 = &work[1, 0]
    cdef double* k3 = &work[2, 0]
    cdef double* kb1 = &work[3, 0]
    cdef double* kb2 = &work[4, 0]
    cdef double* kb3 = &work[5, 0]
    cdef double* kb4 = &work[6, 0]
    cdef double* yb = &work[7, 0]
    lam_arr = np.array(imp[n_seg], dtype=np.float64)
    cdef double[::1] lam = lam_arr
    cdef double[::1] new = np.zeros(N)
    cdef double[::1] zero = np.zeros(max(n_ctrl, 1) * nb)
    cdef double[::1] acc = np.zeros(nb)
    cdef double* accp = &acc[0]
    cdef Py_ssize_t k0 = 0, k, j, m, i
    cdef double h
    cdef double* x
    cdef double* y2
    cdef double* y3
    cdef double* y4
    cdef const double* p0
    cdef const double* p1
    cdef const double* p2
    cdef bint bad = False
    cdef Py_ssize_t off
    starts = np.concatenate([[0], np.cumsum(seg_steps)]).astype(np.int64)
    cdef const cnp.int64_t[::1] st = starts
    with nogil:
        for s in range(n_seg - 1, -1, -1):
            k0 = st[s]
            m = seg_steps[s]
            off = k0 if stored else 0
            if m > 0 and not stored:
                memcpy(&stg[0, 0, 0], &rec[s, 0], N * sizeof(double))
            # replay forward, storing stage inputs
            for j in range(0 if stored else m):
                k = k0 + j
                h = hs[k]
                if n_ctrl > 0:
                    p0 = &pvals[k, 0, 0, 0]
                    p1 = &pvals[k, 1, 0, 0]
                    p2 = &pvals[k, 2, 0, 0]
                else:
                    p0 = p1 = p2 = &zero[0]
                x = &stg[j, 0, 0]
                if method == 0:
                    if j + 1 < m:
                        _drift(A, C, n, nb, n_ctrl, p0, x, k1, accp)
                        for i in range(N):
                            stg[j + 1, 0, i] = x[i] + h * k1[i]
                    continue
                y2 = &stg[j, 1, 0]
                y3 = &stg[j, 2, 0]
                y4 = &stg[j, 3, 0]
                _drift(A, C, n, nb, n_ctrl, p0, x, k1, accp)
                for i in range(N):
                    y2[i] = x[i] + 0.5 * h * k1[i]
                _drift(A, C, n, nb, n_ctrl, p1, y2, k2, accp)
                for i in range(N):
                    y3[i] = x[i] + 0.5 * h * k2[i]
                _drift(A, C, n, nb, n_ctrl, p1, y3, k3, accp)
                for i in range(N):
                    y4[i] = x[i] + h * k3[i]
                if j + 1 < m:
                    _drift(A, C, n, nb, n_ctrl, p2, y4, kb1, accp)
                    for i in range(N):
                        stg[j + 1, 0, i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + kb1[i])
            # reverse sweep
            for j in range(m - 1, -1, -1):
                k = k0 + j
                h = hs[k]
                if n_ctrl > 0:
                    p0 = &pvals[k, 0, 0, 0]
                    p1 = &pvals[k, 1, 0, 0]
                    p2 = &pvals[k, 2, 0, 0]
                else:
                    p0 = p1 = p2 = &zero[0]
                x = &stg[off + j, 0, 0]
                if method == 0:
                    for i in range(N):
                        kb1[i] = h * lam[i]
                    _contract(prow_p, pcol_p, npat, nb, kb1, x, mp)
                    _drift(AT, CT, n, nb, n_ctrl, p0, kb1, yb, accp)
                    for i in range(N):
                        lam[i] += yb[i]
                    continue
                y2 = &stg[off + j, 1, 0]
                y3 = &stg[off + j, 2, 0]
                y4 = &stg[off + j, 3, 0]
                for i in range(N):
                    kb4[i] = (h / 6.0) * lam[i]
                    kb3[i] = (h / 3.0) * lam[i]
                    kb2[i] = (h / 3.0) * lam[i]
                    kb1[i] = (h / 6.0) * lam[i]
                    new[i] = lam[i]
                _contract(prow_p, pcol_p, npat, nb, kb4, y4, mp)
                _drift(AT, CT, n, nb, n_ctrl, p2, kb4, yb, accp)
                for i in range(N):
                    new[i] += yb[i]
                    kb3[i] += h * yb[i]
                _contract(prow_p, pcol_p, npat, nb, kb3, y3, mp)
                _drift(AT, CT, n, nb, n_ctrl, p1, kb3, yb, accp)
                for i in range(N):
                    new[i] += yb[i]
                    kb2[i] += 0.5 * h * yb[i]
                _contract(prow_p, pcol_p, npat, nb, kb2, y2, mp)
                _drift(AT, CT, n, nb, n_ctrl, p1, kb2, yb, accp)
                for i in range(N):
                    new[i] += yb[i]
                    kb1[i] += 0.5 * h * yb[i]
                _contract(prow_p, pcol_p, npat, nb, kb1, x, mp)
                _drift(AT, CT, n, nb, n_ctrl, p0, kb1, yb, accp)
                for i in range(N):
                    lam[i] = new[i] + yb[i]
            if not _finite(&lam[0], N):
                bad = True
                break
            for i in range(N):
                lam[i] += imp[s, i]
    if bad:
        raise FloatingPointError(f"non-finite adjoint in segment {s}")
    # grad_j = sum over generator entries of val * accumulated pattern sums
    grad = np.zeros(n_params)
    if npat > 0:
        np.add.at(grad, pattern[3], pattern[4] * macc_arr[pattern[2]])
    return grad, lam_arr.reshape(n, nb)
