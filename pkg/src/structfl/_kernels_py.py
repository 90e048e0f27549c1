"""Numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is missing or when
``STRUCTFL_BACKEND=python`` is set. Signatures mirror ``_kernels.pyx``.
"""
import numpy as np


def _unpack(params, n_in, n_hidden, n_out):
    if n_hidden == 0:
        w = params[: n_in * n_out].reshape(n_in, n_out)
        b = params[n_in * n_out :]
        return (w, b), None
    o = n_in * n_hidden
    w1 = params[:o].reshape(n_in, n_hidden)
    b1 = params[o : o + n_hidden]
    o += n_hidden
    w2 = params[o : o + n_hidden * n_out].reshape(n_hidden, n_out)
    b2 = params[o + n_hidden * n_out :]
    return (w2, b2), (w1, b1)


def _forward(params, X, n_in, n_hidden, n_out):
    out, hid = _unpack(params, n_in, n_hidden, n_out)
    if hid is None:
        return X @ out[0] + out[1], None
    h = np.tanh(X @ hid[0] + hid[1])
    return h @ out[0] + out[1], h


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def predict(params, X, n_in, n_hidden, n_out, classify):
    z, _ = _forward(params, X, n_in, n_hidden, n_out)
    if classify:
        return np.exp(_log_softmax(z))
    return z


def loss_grad(params, X, y, n_in, n_hidden, n_out, classify, need_grad=True):
    n = X.shape[0]
    z, h = _forward(params, X, n_in, n_hidden, n_out)
    if classify:
        logp = _log_softmax(z)
        loss = -float(logp[np.arange(n), y].mean())
        if not need_grad:
            return loss, None
        dz = np.exp(logp)
        dz[np.arange(n), y] -= 1.0
        dz /= n
    else:
        diff = z - y
        loss = float((diff * diff).mean())
        if not need_grad:
            return loss, None
        dz = diff * (2.0 / diff.size)
    if h is None:
        grad = np.concatenate([(X.T @ dz).ravel(), dz.sum(axis=0)])
        return loss, grad
    w2 = params[n_in * n_hidden + n_hidden : n_in * n_hidden + n_hidden + n_hidden * n_out]
    dh = (dz @ w2.reshape(n_hidden, n_out).T) * (1.0 - h * h)
    grad = np.concatenate(
        [(X.T @ dh).ravel(), dh.sum(axis=0), (h.T @ dz).ravel(), dz.sum(axis=0)]
    )
    return loss, grad


def propagate(P, U, m):
    # u_i + sum_j P_ij (u_j - u_i): equal to P @ U for row-stochastic P, and
    # exact for constant stacks and isolated nodes
    P = np.asarray(P, dtype=np.float64)
    out = np.array(U, dtype=np.float64, copy=True)
    n = out.shape[0]
    for _ in range(m):
        nxt = np.empty_like(out)
        for i in range(n):
            nbr = np.flatnonzero(P[i])
            nbr = nbr[nbr != i]
            nxt[i] = out[i] + P[i, nbr] @ (out[nbr] - out[i])
        out = nxt
    return out


def sq_dists(V):
    n = V.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        diff = V[i + 1 :] - V[i]
        row = np.einsum("ij,ij->i", diff, diff)
        d[i, i + 1 :] = row
        d[i + 1 :, i] = row
    return d
