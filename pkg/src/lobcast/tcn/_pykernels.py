"""Numpy implementations of the network kernels.

Used when the compiled extension is unavailable (or forced with
``LOBCAST_KERNELS=python``). Same signatures and semantics as ``_ckernels``;
results agree to rounding, not bitwise.
"""
import numpy as np


def causal_conv1d_forward(x, w, bias, dilation):
    B, T, C = x.shape
    K, Cw, O = w.shape
    if Cw != C or bias.shape[0] != O:
        raise ValueError(f"weight shape {w.shape} does not match {C} input channels")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    y = np.empty((B, T, O), dtype=np.float64)
    y[...] = bias
    for j in range(K):
        s = (K - 1 - j) * dilation
        if s >= T:
            continue
        if s == 0:
            y += (x.reshape(-1, C) @ w[j]).reshape(B, T, O)
        else:
            y[:, s:] += x[:, : T - s] @ w[j]
    return y


def causal_conv1d_backward(x, w, dy, dilation):
    B, T, C = x.shape
    K, _, O = w.shape
    if dy.shape != (B, T, O):
        raise ValueError("output gradient shape does not match the forward output")
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = dy.reshape(-1, O).sum(axis=0)
    for j in range(K):
        s = (K - 1 - j) * dilation
        if s >= T:
            continue
        xs = x[:, : T - s].reshape(-1, C)
        gs = dy[:, s:].reshape(-1, O)
        dw[j] = xs.T @ gs
        dx[:, : T - s] += dy[:, s:] @ w[j].T
    return dx, dw, db


def relu_dropout_forward(pre, keep, scale):
    out = np.maximum(pre, 0.0)
    if keep is not None:
        out *= keep
        out *= scale
    return out


def relu_dropout_backward(grad, pre, keep, scale):
    out = np.where(pre > 0.0, grad, 0.0)
    if keep is not None:
        out *= keep
        out *= scale
    return out
