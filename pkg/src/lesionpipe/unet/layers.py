"""Forward/backward pairs for the layer types used by the U-Net.

All tensors are NCHW. Each ``*_forward`` returns ``(out, cache)`` and the
matching ``*_backward`` takes the upstream gradient and that cache.
"""

import numpy as np

BN_EPS = 1e-5
PROB_FLOOR = 1e-12


def conv2d_forward(x, w, b, pad):
    """Stride-1 cross-correlation. ``w`` is (out, in, k, k).

    Computed as a sum of k*k shifted matrix products on a channels-last copy
    of the padded input; memory stays at the size of the input.
    """
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    xt = np.ascontiguousarray(xp.transpose(0, 2, 3, 1))
    wt = np.ascontiguousarray(w.transpose(2, 3, 1, 0))  # k, k, in, out
    out = np.zeros((n, ho, wo, f), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            out += xt[:, i:i + ho, j:j + wo] @ wt[i, j]
    out += b
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), (xt, w, pad)


def conv2d_backward(dout, cache):
    xt, w, pad = cache
    f, c, k, _ = w.shape
    n, _, ho, wo = dout.shape
    dt = np.ascontiguousarray(dout.transpose(0, 2, 3, 1))  # n, ho, wo, f
    dt_mat = dt.reshape(-1, f)
    wt = np.ascontiguousarray(w.transpose(2, 3, 0, 1))  # k, k, out, in
    dw = np.empty((k, k, c, f), dtype=w.dtype)
    dxt = np.zeros_like(xt)
    for i in range(k):
        for j in range(k):
            patch = xt[:, i:i + ho, j:j + wo].reshape(-1, c)
            dw[i, j] = patch.T @ dt_mat
            dxt[:, i:i + ho, j:j + wo] += dt @ wt[i, j]
    db = dt_mat.sum(axis=0)
    dx = dxt.transpose(0, 3, 1, 2)
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(dx), np.ascontiguousarray(dw.transpose(3, 2, 0, 1)), db


def conv_transpose2x2_forward(x, w, b):
    """Stride-2, 2x2 transposed convolution; ``w`` is (out, in, 2, 2)."""
    n, c, h, wd = x.shape
    f = w.shape[0]
    # (n, h, w, f, 2, 2)
    y = np.tensordot(x, w, axes=([1], [1])).transpose(0, 3, 1, 4, 2, 5)
    out = y.reshape(n, f, 2 * h, 2 * wd) + b[None, :, None, None]
    return out, (x, w)


def conv_transpose2x2_backward(dout, cache):
    x, w = cache
    n, c, h, wd = x.shape
    f = w.shape[0]
    d = dout.reshape(n, f, h, 2, wd, 2)
    dx = np.tensordot(d, w, axes=([1, 3, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
    dw = np.tensordot(d, x, axes=([0, 2, 4], [0, 2, 3])).transpose(0, 3, 1, 2)
    db = dout.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(dx), np.ascontiguousarray(dw), db


def avgpool_forward(x, size=2):
    n, c, h, w = x.shape
    out = x.reshape(n, c, h // size, size, w // size, size).mean(axis=(3, 5))
    return out, (x.shape, size)


def avgpool_backward(dout, cache):
    shape, size = cache
    dx = np.repeat(np.repeat(dout, size, axis=2), size, axis=3) / (size * size)
    return dx.reshape(shape)


def upsample_nearest(x, size=2):
    return np.repeat(np.repeat(x, size, axis=2), size, axis=3)


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(dout, cache):
    return dout * (cache > 0)


def batchnorm_forward(x, gamma, beta, mode, running_mean=None, running_var=None):
    """Per-channel batch normalisation.

    In ``train`` mode batch statistics are used (biased variance) and returned
    so the caller can update its running averages; in ``infer`` mode the
    running statistics are used and the cache is ``None``.
    """
    dt = x.dtype
    if mode == "train":
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
    else:
        mu, var = running_mean.astype(dt), running_var.astype(dt)
    inv_std = 1.0 / np.sqrt(var + dt.type(BN_EPS))
    xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, gamma, inv_std) if mode == "train" else None
    return out, cache, (mu, var)


def batchnorm_backward(dout, cache):
    xhat, gamma, inv_std = cache
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dbeta = dout.sum(axis=(0, 2, 3))
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
    s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
    dx = (inv_std[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
    return dx, dgamma, dbeta


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def crop(x, border):
    if not border:
        return x
    return x[..., border:-border, border:-border]


def xent_loss(probs, target):
    """Mean over batch and pixels of ``-log p[target]`` with p floored at 1e-12."""
    target = np.asarray(target)
    if probs.ndim != 4 or target.shape != (probs.shape[0],) + probs.shape[2:]:
        raise ValueError(f"target shape {target.shape} does not match probabilities {probs.shape}")
    p = np.take_along_axis(probs, target[:, None].astype(np.intp), axis=1)
    return float(-np.log(np.maximum(p.astype(np.float64), PROB_FLOOR)).mean())


def xent_logits_grad(probs, target, border=0):
    """Gradient of the cropped mean cross-entropy with respect to the logits."""
    grad = np.zeros_like(probs)
    inner = crop(probs, border)
    onehot = np.zeros_like(inner)
    np.put_along_axis(onehot, target[:, None].astype(np.intp), 1, axis=1)
    g = (inner - onehot) / inner[:, 0].size
    if border:
        grad[..., border:-border, border:-border] = g
    else:
        grad = g
    return grad
