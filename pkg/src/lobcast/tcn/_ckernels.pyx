# cython: language_level=3
"""Compiled causal-convolution kernels.

Arrays are C-contiguous float64 in (batch, time, channels) layout and the
weights are (taps, in_channels, out_channels). Every matrix product goes to
BLAS ``dgemm`` through scipy's Cython bindings. A row-major (rows x cols)
block is the column-major (cols x rows) transpose, so all calls below are
written in that transposed frame.

Reductions over the batch run in a fixed order (b = 0, 1, ...), which keeps
the weight gradients bitwise reproducible between runs.
"""
import numpy as np
from libc.math cimport fmax
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def causal_conv1d_forward(const double[:, :, ::1] x, const double[:, :, ::1] w,
                          const double[::1] bias, int dilation):
    cdef int B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef int K = w.shape[0], O = w.shape[2]
    if w.shape[1] != C or bias.shape[0] != O:
        raise ValueError("weight shape %r does not match %d input channels"
                         % ((K, w.shape[1], O), C))
    if dilation < 1:
        raise ValueError("dilation must be >= 1")

    y_arr = np.empty((B, T, O), dtype=np.float64)
    cdef double[:, :, ::1] y = y_arr
    cdef int bb, t, o, j, s, rows
    cdef double one = 1.0
    cdef char nt = b'N'
    if B == 0 or T == 0:
        return y_arr

    with nogil:
        for bb in range(B):
            for t in range(T):
                for o in range(O):
                    y[bb, t, o] = bias[o]
        for j in range(K):
            s = (K - 1 - j) * dilation
            if s >= T or C == 0:
                continue
            if s == 0:
                rows = B * T
                dgemm(&nt, &nt, &O, &rows, &C, &one, <double*>&w[j, 0, 0], &O,
                      <double*>&x[0, 0, 0], &C, &one, &y[0, 0, 0], &O)
            else:
                rows = T - s
                for bb in range(B):
                    dgemm(&nt, &nt, &O, &rows, &C, &one, <double*>&w[j, 0, 0], &O,
                          <double*>&x[bb, 0, 0], &C, &one, &y[bb, s, 0], &O)
    return y_arr


def causal_conv1d_backward(const double[:, :, ::1] x, const double[:, :, ::1] w,
                           const double[:, :, ::1] dy, int dilation):
    cdef int B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef int K = w.shape[0], O = w.shape[2]
    if dy.shape[0] != B or dy.shape[1] != T or dy.shape[2] != O:
        raise ValueError("output gradient shape does not match the forward output")
    if w.shape[1] != C:
        raise ValueError("weight shape does not match input channels")

    dx_arr = np.zeros((B, T, C), dtype=np.float64)
    dw_arr = np.zeros((K, C, O), dtype=np.float64)
    db_arr = np.zeros(O, dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    cdef double[:, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef int bb, t, o, j, s, rows
    cdef double one = 1.0
    cdef char nt = b'N'
    cdef char tr = b'T'
    if B == 0 or T == 0:
        return dx_arr, dw_arr, db_arr

    with nogil:
        for bb in range(B):
            for t in range(T):
                for o in range(O):
                    db[o] += dy[bb, t, o]
        if C > 0 and O > 0:
            for j in range(K):
                s = (K - 1 - j) * dilation
                if s >= T:
                    continue
                if s == 0:
                    rows = B * T
                    dgemm(&nt, &tr, &O, &C, &rows, &one, <double*>&dy[0, 0, 0], &O,
                          <double*>&x[0, 0, 0], &C, &one, &dw[j, 0, 0], &O)
                    dgemm(&tr, &nt, &C, &rows, &O, &one, <double*>&w[j, 0, 0], &O,
                          <double*>&dy[0, 0, 0], &O, &one, &dx[0, 0, 0], &C)
                else:
                    rows = T - s
                    for bb in range(B):
                        dgemm(&nt, &tr, &O, &C, &rows, &one, <double*>&dy[bb, s, 0], &O,
                              <double*>&x[bb, 0, 0], &C, &one, &dw[j, 0, 0], &O)
                        dgemm(&tr, &nt, &C, &rows, &O, &one, <double*>&w[j, 0, 0], &O,
                              <double*>&dy[bb, s, 0], &O, &one, &dx[bb, 0, 0], &C)
    return dx_arr, dw_arr, db_arr


def relu_dropout_forward(const double[:, :, ::1] pre, keep, double scale):
    """max(pre, 0), then zeroed where ``keep`` is false and multiplied by ``scale``."""
    cdef Py_ssize_t n = pre.shape[0] * pre.shape[1] * pre.shape[2]
    out_arr = np.empty((pre.shape[0], pre.shape[1], pre.shape[2]), dtype=np.float64)
    cdef double[:, :, ::1] out3 = out_arr
    cdef const unsigned char[::1] k
    cdef Py_ssize_t i
    cdef double v
    cdef const double* p
    cdef double* q
    if n == 0:
        return out_arr
    p = &pre[0, 0, 0]
    q = &out3[0, 0, 0]
    if keep is None:
        with nogil:
            for i in range(n):
                q[i] = fmax(p[i], 0.0)
    else:
        k = np.ascontiguousarray(keep).reshape(-1).view(np.uint8)
        with nogil:
            for i in range(n):
                v = p[i]
                q[i] = v * (scale * ((v > 0.0) & k[i]))
    return out_arr


def relu_dropout_backward(const double[:, :, ::1] grad, const double[:, :, ::1] pre,
                          keep, double scale):
    cdef Py_ssize_t n = pre.shape[0] * pre.shape[1] * pre.shape[2]
    out_arr = np.empty((pre.shape[0], pre.shape[1], pre.shape[2]), dtype=np.float64)
    cdef double[:, :, ::1] out3 = out_arr
    cdef const unsigned char[::1] k
    cdef Py_ssize_t i
    cdef const double* g
    cdef const double* p
    cdef double* q
    if n == 0:
        return out_arr
    g = &grad[0, 0, 0]
    p = &pre[0, 0, 0]
    q = &out3[0, 0, 0]
    if keep is None:
        scale = 1.0
        with nogil:
            for i in range(n):
                q[i] = g[i] * (scale * (p[i] > 0.0))
    else:
        k = np.ascontiguousarray(keep).reshape(-1).view(np.uint8)
        with nogil:
            for i in range(n):
                q[i] = g[i] * (scale * ((p[i] > 0.0) & k[i]))
    return out_arr
