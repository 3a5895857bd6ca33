"""Numpy implementation of the training kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the extension is tested against. Parameters live in one flat
float64 vector laid out as W0, b0, W1, b1, ... with each W row-major
(out x in). The last layer is logistic, the others rectified-linear.
"""

import numpy as np


def _unpack(flat, sizes):
    layers = []
    off = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = flat[off : off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        b = flat[off : off + n_out]
        off += n_out
        layers.append((w, b))
    return layers


_P_HI = np.nextafter(1.0, 0.0)
_P_LO = np.finfo(np.float64).tiny


def _sigmoid(z):
    # split by sign so exp never overflows; clip keeps outputs strictly inside (0, 1)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    with np.errstate(under="ignore"):
        ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _P_LO, _P_HI)


def forward_batch(flat, sizes, X):
    a = np.asarray(X, dtype=np.float64)
    layers = _unpack(flat, sizes)
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = _sigmoid(z) if i == last else np.maximum(z, 0.0)
    return a[:, 0].copy()


def loss_grad(flat, sizes, X, y, sw, delta, grad):
    """Weighted Huber loss sum over the batch; gradient written into ``grad``."""
    layers = _unpack(flat, sizes)
    glayers = _unpack(grad, sizes)
    acts = [np.asarray(X, dtype=np.float64)]
    zs = []
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = acts[-1] @ w.T + b
        zs.append(z)
        acts.append(_sigmoid(z) if i == last else np.maximum(z, 0.0))
    p = acts[-1][:, 0]
    r = p - y
    absr = np.abs(r)
    quad = absr <= delta
    loss = np.where(quad, 0.5 * r * r, delta * (absr - 0.5 * delta))
    dr = np.where(quad, r, delta * np.sign(r))
    dz = (sw * dr * p * (1.0 - p))[:, None]
    for i in range(last, -1, -1):
        w, _ = layers[i]
        gw, gb = glayers[i]
        gw[...] = dz.T @ acts[i]
        gb[...] = dz.sum(axis=0)
        if i:
            dz = (dz @ w) * (zs[i - 1] > 0)
    return float(np.dot(sw, loss))


def adamw_update(flat, grad, m, v, mask, t, lr, beta1, beta2, eps, weight_decay):
    """One in-place update at step ``t`` (1-based); decay uses the pre-update value."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    flat -= lr * mhat / (np.sqrt(vhat) + eps) + lr * weight_decay * mask * flat


def train_epoch(flat, sizes, X, y, sw, order, batch_size, delta, m, v, mask, t,
                lr, beta1, beta2, eps, weight_decay):
    """Run one pass of mini-batch updates in ``order``.

    Returns (loss_sum, t, bad_batch) where bad_batch is the index of the first
    batch with a non-finite loss or gradient (-1 if none); the epoch stops there
    without applying that update.
    """
    grad = np.zeros_like(flat)
    total = 0.0
    n = order.shape[0]
    for k, start in enumerate(range(0, n, batch_size)):
        idx = order[start : start + batch_size]
        loss = loss_grad(flat, sizes, X[idx], y[idx], sw[idx], delta, grad)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            return total, t, k
        total += loss
        t += 1
        adamw_update(flat, grad, m, v, mask, t, lr, beta1, beta2, eps, weight_decay)
    return total, t, -1
