# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense-MLP kernels.

Parameters live in one flat float64 vector; layer ``l`` stores a row-major
``W`` of shape (dims[l], dims[l+1]) followed by its bias.  Hidden layers are
ELU (``act=0``) or identity (``act=1``); the last layer is always affine.
Activations of every layer are written consecutively into ``acts``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void _gemm_rm(char ta, char tb, int m, int n, int k,
                          double *a, int lda, double *b, int ldb,
                          double beta, double *c, int ldc) noexcept nogil:
    # column-major BLAS call; callers pass operands already transposed
    cdef double one = 1.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


def mlp_forward(double[::1] params, long[::1] dims, double[:, ::1] x, double[::1] acts, int act):
    cdef int n_layers = dims.shape[0] - 1
    cdef int batch = x.shape[0]
    cdef Py_ssize_t p_off = 0, a_off = 0, prev_off = 0
    cdef int l, i, j, din, dout
    cdef double *prev = &x[0, 0]
    cdef double *cur
    cdef double *bias
    cdef double v
    with nogil:
        for l in range(n_layers):
            din = dims[l]
            dout = dims[l + 1]
            cur = &acts[a_off]
            bias = &params[p_off + din * dout]
            for i in range(batch):
                for j in range(dout):
                    cur[i * dout + j] = bias[j]
            _gemm_rm(b'N', b'N', dout, batch, din, &params[p_off], dout, prev, din, 1.0, cur, dout)
            if l < n_layers - 1 and act == 0:
                for i in range(batch * dout):
                    v = cur[i]
                    cur[i] = v if v > 0.0 else exp(v) - 1.0
            p_off += din * dout + dout
            prev = cur
            a_off += batch * dout


def mlp_backward(double[::1] params, long[::1] dims, double[:, ::1] x, double[::1] acts,
                 double[:, ::1] d_out, double[::1] grad, d_x, int act):
    """Overwrite ``grad`` with parameter gradients; fill ``d_x`` unless it is None."""
    cdef int n_layers = dims.shape[0] - 1
    cdef int batch = x.shape[0]
    cdef int l, i, j, din, dout, max_w = 0
    cdef Py_ssize_t p_off, a_off, prev_off
    cdef double[:, ::1] dx_view
    cdef bint want_dx = d_x is not None
    if want_dx:
        dx_view = d_x
    for l in range(1, n_layers + 1):
        if dims[l] > max_w:
            max_w = dims[l]
    cdef double[::1] buf_a = np.empty(batch * max_w, dtype=np.float64)
    cdef double[::1] buf_b = np.empty(batch * max_w, dtype=np.float64)
    cdef double *dz = &d_out[0, 0]
    cdef double *dprev
    cdef double *prev
    cdef double *gb
    cdef double *wptr
    cdef double a

    # offsets of the last layer
    p_off = 0
    a_off = 0
    for l in range(n_layers - 1):
        p_off += dims[l] * dims[l + 1] + dims[l + 1]
        a_off += batch * dims[l + 1]
    with nogil:
        for l in range(n_layers - 1, -1, -1):
            din = dims[l]
            dout = dims[l + 1]
            if l > 0:
                prev_off = a_off - batch * din
                prev = &acts[prev_off]
            else:
                prev = &x[0, 0]
            wptr = &params[p_off]
            # dW = prev^T dz
            _gemm_rm(b'N', b'T', dout, din, batch, dz, dout, prev, din, 0.0, &grad[p_off], dout)
            gb = &grad[p_off + din * dout]
            for j in range(dout):
                gb[j] = 0.0
            for i in range(batch):
                for j in range(dout):
                    gb[j] += dz[i * dout + j]
            if l > 0:
                dprev = &buf_a[0] if (l % 2 == 0) else &buf_b[0]
                _gemm_rm(b'T', b'N', din, batch, dout, wptr, dout, dz, dout, 0.0, dprev, din)
                if act == 0:
                    for i in range(batch * din):
                        a = prev[i]
                        dprev[i] *= (a + 1.0) if a <= 0.0 else 1.0
                dz = dprev
                p_off -= din * dims[l - 1] + din
                a_off = prev_off
            elif want_dx:
                _gemm_rm(b'T', b'N', din, batch, dout, wptr, dout, dz, dout, 0.0, &dx_view[0, 0], din)
