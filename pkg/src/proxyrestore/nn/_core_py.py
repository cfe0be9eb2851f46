"""Pure-numpy kernels with the same contract as the compiled ``_core``."""

import numpy as np


def _layers(params, dims):
    off = 0
    for l in range(len(dims) - 1):
        din, dout = int(dims[l]), int(dims[l + 1])
        w = params[off : off + din * dout].reshape(din, dout)
        b = params[off + din * dout : off + din * dout + dout]
        yield off, w, b
        off += din * dout + dout


def mlp_forward(params, dims, x, acts, act):
    batch = x.shape[0]
    n_layers = len(dims) - 1
    prev = x
    a_off = 0
    for l, (_, w, b) in enumerate(_layers(params, dims)):
        dout = w.shape[1]
        cur = acts[a_off : a_off + batch * dout].reshape(batch, dout)
        np.matmul(prev, w, out=cur)
        cur += b
        if l < n_layers - 1 and act == 0:
            neg = cur <= 0.0
            cur[neg] = np.expm1(cur[neg])
        prev = cur
        a_off += batch * dout


def mlp_backward(params, dims, x, acts, d_out, grad, d_x, act):
    batch = x.shape[0]
    layers = list(_layers(params, dims))
    outs = []
    a_off = 0
    for _, w, _ in layers:
        dout = w.shape[1]
        outs.append(acts[a_off : a_off + batch * dout].reshape(batch, dout))
        a_off += batch * dout
    dz = d_out
    for l in range(len(layers) - 1, -1, -1):
        off, w, _ = layers[l]
        din, dout = w.shape
        prev = outs[l - 1] if l > 0 else x
        np.matmul(prev.T, dz, out=grad[off : off + din * dout].reshape(din, dout))
        grad[off + din * dout : off + din * dout + dout] = dz.sum(axis=0)
        if l > 0:
            dprev = dz @ w.T
            if act == 0:
                dprev *= np.where(prev > 0.0, 1.0, prev + 1.0)
            dz = dprev
        elif d_x is not None:
            np.matmul(dz, w.T, out=d_x)
