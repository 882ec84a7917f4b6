"""Independent reference implementations used to check the package.

Everything here is written the slow, obvious way (explicit loops, no shared
code with the package) so a bug in the production code cannot hide in its
own oracle.
"""

import numpy as np


def naive_conv2d(x, w, b, stride=1, pad=0):
    """Direct 7-loop cross-correlation, zero padding."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    if pad:
        xp = np.zeros((n, cin, h + 2 * pad, wd + 2 * pad), dtype=x.dtype)
        xp[:, :, pad : pad + h, pad : pad + wd] = x
    else:
        xp = x
    ho = (xp.shape[2] - kh) // stride + 1
    wo = (xp.shape[3] - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo), dtype=x.dtype)
    for ni in range(n):
        for co in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[ni, ci, i * stride + u, j * stride + v] * w[co, ci, u, v]
                    out[ni, co, i, j] = acc + b[co]
    return out


def keys_weight(x, a=-0.5):
    """Scalar piecewise-cubic interpolation weight."""
    x = abs(float(x))
    if x <= 1.0:
        return (a + 2.0) * x**3 - (a + 3.0) * x**2 + 1.0
    if x < 2.0:
        return a * x**3 - 5.0 * a * x**2 + 8.0 * a * x - 4.0 * a
    return 0.0


def _axis_weights(in_len, out_len, antialias):
    """Per output pixel: list of (clamped source index, normalized weight)."""
    scale = out_len / in_len
    if scale < 1.0 and antialias:
        kscale = scale
    else:
        kscale = 1.0
    support = 2.0 / kscale
    rows = []
    for i in range(out_len):
        u = (i + 0.5) / scale - 0.5
        lo = int(np.floor(u - support)) - 1
        hi = int(np.ceil(u + support)) + 1
        taps = []
        for j in range(lo, hi + 1):
            wgt = keys_weight((u - j) * kscale) * kscale
            if wgt != 0.0:
                taps.append((min(max(j, 0), in_len - 1), wgt))
        total = sum(w for _, w in taps)
        rows.append([(j, w / total) for j, w in taps])
    return rows


def naive_resize(plane, out_w, out_h, antialias=True):
    """Non-separable direct bicubic resize: one double sum per output pixel."""
    in_h, in_w = plane.shape
    wy = _axis_weights(in_h, out_h, antialias)
    wx = _axis_weights(in_w, out_w, antialias)
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for i in range(out_h):
        for j in range(out_w):
            acc = 0.0
            for sy, vy in wy[i]:
                for sx, vx in wx[j]:
                    acc += vy * vx * plane[sy, sx]
            out[i, j] = acc
    return out


def naive_ssim(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, dyn=255.0):
    """Windowed SSIM with an explicit 2-D Gaussian, one window at a time."""
    g = np.zeros((window, window))
    half = (window - 1) / 2.0
    for u in range(window):
        for v in range(window):
            g[u, v] = np.exp(-((u - half) ** 2 + (v - half) ** 2) / (2.0 * sigma**2))
    g /= g.sum()
    c1 = (k1 * dyn) ** 2
    c2 = (k2 * dyn) ** 2
    h, w = a.shape
    values = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            pa = a[i : i + window, j : j + window]
            pb = b[i : i + window, j : j + window]
            mu_a = (g * pa).sum()
            mu_b = (g * pb).sum()
            var_a = (g * pa * pa).sum() - mu_a**2
            var_b = (g * pb * pb).sum() - mu_b**2
            cov = (g * pa * pb).sum() - mu_a * mu_b
            values.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(values))


def scalar_adam_steps(p0, grads, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook bias-corrected Adam on one scalar parameter, pure Python."""
    p, m, v = float(p0), 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


def fd_gradient(fn, array, h=1e-6):
    """Central-difference gradient of a scalar function of one float64 array."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + h
        fp = fn()
        flat[idx] = orig - h
        fm = fn()
        flat[idx] = orig
        gflat[idx] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(actual, expected):
    num = np.abs(actual - expected).max()
    den = max(np.abs(expected).max(), 1e-8)
    return float(num / den)
