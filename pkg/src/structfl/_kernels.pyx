# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: fused MLP loss/gradient, row-stochastic propagation and
pairwise squared distances. Loop order is fixed, so results are
bit-reproducible for a given build."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()


cdef void _dense(const double[:, ::1] X, const double[:] params, Py_ssize_t w_off,
                 Py_ssize_t b_off, Py_ssize_t n_in, Py_ssize_t n_out,
                 double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t r, i, j
    cdef double xv
    for r in range(X.shape[0]):
        for j in range(n_out):
            out[r, j] = params[b_off + j]
        for i in range(n_in):
            xv = X[r, i]
            if xv != 0.0:
                for j in range(n_out):
                    out[r, j] += xv * params[w_off + i * n_out + j]


cdef void _dense_grad(const double[:, ::1] X, const double[:, ::1] dz, Py_ssize_t w_off,
                      Py_ssize_t b_off, Py_ssize_t n_in, Py_ssize_t n_out,
                      double[:] grad) noexcept nogil:
    cdef Py_ssize_t r, i, j
    cdef double xv
    for r in range(X.shape[0]):
        for i in range(n_in):
            xv = X[r, i]
            for j in range(n_out):
                grad[w_off + i * n_out + j] += xv * dz[r, j]
        for j in range(n_out):
            grad[b_off + j] += dz[r, j]


def _forward(const double[:] params, const double[:, ::1] X, Py_ssize_t n_in,
             Py_ssize_t n_hidden, Py_ssize_t n_out):
    cdef Py_ssize_t n = X.shape[0], r, k
    z = np.empty((n, n_out))
    cdef double[:, ::1] zv = z
    cdef double[:, ::1] hv
    if n_hidden == 0:
        _dense(X, params, 0, n_in * n_out, n_in, n_out, zv)
        return z, None
    h = np.empty((n, n_hidden))
    hv = h
    _dense(X, params, 0, n_in * n_hidden, n_in, n_hidden, hv)
    for r in range(n):
        for k in range(n_hidden):
            hv[r, k] = tanh(hv[r, k])
    cdef Py_ssize_t o = n_in * n_hidden + n_hidden
    _dense(hv, params, o, o + n_hidden * n_out, n_hidden, n_out, zv)
    return z, h


cdef void _softmax_rows(double[:, ::1] z) noexcept nogil:
    # in place: logits -> log-probabilities
    cdef Py_ssize_t r, j
    cdef double mx, s
    for r in range(z.shape[0]):
        mx = z[r, 0]
        for j in range(1, z.shape[1]):
            if z[r, j] > mx:
                mx = z[r, j]
        s = 0.0
        for j in range(z.shape[1]):
            s += exp(z[r, j] - mx)
        s = log(s)
        for j in range(z.shape[1]):
            z[r, j] = z[r, j] - mx - s


def predict(params, X, Py_ssize_t n_in, Py_ssize_t n_hidden, Py_ssize_t n_out, bint classify):
    z, _ = _forward(params, np.ascontiguousarray(X, dtype=np.float64), n_in, n_hidden, n_out)
    if classify:
        _softmax_rows(z)
        return np.exp(z)
    return z


def loss_grad(params, X, y, Py_ssize_t n_in, Py_ssize_t n_hidden, Py_ssize_t n_out,
              bint classify, bint need_grad=True):
    X = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:] pv = params
    cdef const double[:, ::1] xv = X
    cdef Py_ssize_t n = X.shape[0], r, j, k
    z, h = _forward(pv, xv, n_in, n_hidden, n_out)
    cdef double[:, ::1] zv = z
    cdef double loss = 0.0, d, scale
    cdef const long long[:] lab
    cdef const double[:, ::1] tv
    if classify:
        lab = np.ascontiguousarray(y, dtype=np.int64)
        _softmax_rows(zv)
        for r in range(n):
            loss -= zv[r, lab[r]]
        loss /= n
        if not need_grad:
            return loss, None
        scale = 1.0 / n
        for r in range(n):
            for j in range(n_out):
                zv[r, j] = exp(zv[r, j]) * scale
            zv[r, lab[r]] -= scale
    else:
        tv = np.ascontiguousarray(y, dtype=np.float64)
        for r in range(n):
            for j in range(n_out):
                d = zv[r, j] - tv[r, j]
                loss += d * d
                zv[r, j] = d
        loss /= n * n_out
        if not need_grad:
            return loss, None
        scale = 2.0 / (n * n_out)
        for r in range(n):
            for j in range(n_out):
                zv[r, j] *= scale
    grad = np.zeros(pv.shape[0])
    cdef double[:] gv = grad
    cdef double[:, ::1] hv, dh
    cdef Py_ssize_t o
    if n_hidden == 0:
        _dense_grad(xv, zv, 0, n_in * n_out, n_in, n_out, gv)
        return loss, grad
    hv = h
    o = n_in * n_hidden + n_hidden
    _dense_grad(hv, zv, o, o + n_hidden * n_out, n_hidden, n_out, gv)
    dh = np.zeros((n, n_hidden))
    for r in range(n):
        for k in range(n_hidden):
            d = 0.0
            for j in range(n_out):
                d += zv[r, j] * pv[o + k * n_out + j]
            dh[r, k] = d * (1.0 - hv[r, k] * hv[r, k])
    _dense_grad(xv, dh, 0, n_in * n_hidden, n_in, n_hidden, gv)
    return loss, grad


def propagate(P, U, Py_ssize_t m):
    cdef const double[:, ::1] pv = np.ascontiguousarray(P, dtype=np.float64)
    cur = np.array(U, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = cur.shape[0], p = cur.shape[1], i, j, c, step
    cdef double[:, ::1] cv, nv
    cdef double a
    # u_i + sum_j P_ij (u_j - u_i): equal to P @ U for row-stochastic P, and
    # exact for constant stacks and isolated nodes
    for step in range(m):
        nxt = np.zeros((n, p))
        cv = cur
        nv = nxt
        for i in range(n):
            for j in range(n):
                a = pv[i, j]
                if a != 0.0 and j != i:
                    for c in range(p):
                        nv[i, c] += a * (cv[j, c] - cv[i, c])
            for c in range(p):
                nv[i, c] += cv[i, c]
        cur = nxt
    return cur


def sq_dists(V):
    cdef const double[:, ::1] vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef Py_ssize_t n = vv.shape[0], p = vv.shape[1], i, j, c
    out = np.zeros((n, n))
    cdef double[:, ::1] ov = out
    cdef double s, d
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for c in range(p):
                d = vv[i, c] - vv[j, c]
                s += d * d
            ov[i, j] = s
            ov[j, i] = s
    return out
