"""Layer math on NCHW numpy arrays, forward and exact backward.

All functions preserve the dtype of their inputs, so the same code runs in
float32 for training and float64 inside the gradient checker.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import LabelOutOfRange, ShapeMismatch


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _im2col(x, kh, kw, stride, pad):
    """(B, C, H, W) -> (B*Ho*Wo, C*kh*kw) patch matrix, columns ordered (c, u, v)."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)
    return cols, ho, wo


def conv_forward(x, w, b, stride=1, pad=0):
    """2-D cross-correlation with zero padding. Returns ``(y, cache)``."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"conv: input {x.shape}, weight {w.shape}, bias {b.shape}")
    cout, cin, kh, kw = w.shape
    if x.shape[2] + 2 * pad < kh or x.shape[3] + 2 * pad < kw:
        raise ShapeMismatch(f"conv: {kh}x{kw} kernel larger than padded input {x.shape[2:]}")
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    y = cols @ w.reshape(cout, -1).T
    y += b
    y = y.reshape(x.shape[0], ho, wo, cout).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y), (x.shape, cols, w, stride, pad)


def conv_backward(grad_out, cache, need_input_grad=True):
    """Gradients ``(grad_x, grad_w, grad_b)``; ``grad_x`` is None when not needed."""
    x_shape, cols, w, stride, pad = cache
    cout, cin, kh, kw = w.shape
    bsz, _, ho, wo = grad_out.shape
    if grad_out.shape[1] != cout or bsz != x_shape[0]:
        raise ShapeMismatch(f"conv backward: grad {grad_out.shape} vs weight {w.shape}")
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, cout)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_w = (g.T @ cols).reshape(w.shape)
    if not need_input_grad:
        return None, grad_w, grad_b
    # rows (c, u, v), columns (b, i, j): each kernel offset is then a contiguous slab
    gcols = (w.reshape(cout, -1).T @ g.T).reshape(cin, kh, kw, bsz, ho, wo)
    hp, wp = x_shape[2] + 2 * pad, x_shape[3] + 2 * pad
    gx = np.zeros((cin, bsz, hp, wp), dtype=grad_out.dtype)
    for u in range(kh):
        for v in range(kw):
            gx[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += gcols[:, u, v]
    gx = gx[:, :, pad:hp - pad, pad:wp - pad].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(gx), grad_w, grad_b


def maxpool_forward(x, window, stride):
    """Windowed max; ties go to the first element in row-major order.

    Returns ``(y, indices)`` where ``indices`` are flat positions into ``x``.
    """
    if x.ndim != 4:
        raise ShapeMismatch(f"maxpool expects NCHW input, got {x.shape}")
    bsz, c, h, w = x.shape
    if window > h or window > w:
        raise ShapeMismatch(f"pool window {window} exceeds spatial extent {h}x{w}")
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2:4]
    flat = win.reshape(bsz, c, ho, wo, window * window)
    arg = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    du, dv = np.divmod(arg, window)
    rows = np.arange(ho)[:, None] * stride + du
    cols = np.arange(wo)[None, :] * stride + dv
    plane = (np.arange(bsz)[:, None, None, None] * c + np.arange(c)[None, :, None, None]) * (h * w)
    indices = plane + rows * w + cols
    return np.ascontiguousarray(y), (x.shape, indices)


def maxpool_backward(grad_y, cache):
    x_shape, indices = cache
    if grad_y.shape != indices.shape:
        raise ShapeMismatch(f"maxpool backward: grad {grad_y.shape} vs {indices.shape}")
    size = int(np.prod(x_shape))
    gx = np.bincount(indices.ravel(), weights=grad_y.ravel(), minlength=size)
    return gx.astype(grad_y.dtype).reshape(x_shape)


def fc_forward(x, w, b):
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"fc: input {x.shape}, weight {w.shape}, bias {b.shape}")
    return x @ w.T + b, (x, w)


def fc_backward(grad_y, cache):
    x, w = cache
    if grad_y.shape != (x.shape[0], w.shape[0]):
        raise ShapeMismatch(f"fc backward: grad {grad_y.shape}")
    return grad_y @ w, grad_y.T @ x, grad_y.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(grad_y, mask):
    return grad_y * mask


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"softmax: logits {logits.shape}, labels {labels.shape}")
    k = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(labels))
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    grad /= len(labels)
    return loss, grad.astype(logits.dtype)
