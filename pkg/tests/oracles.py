"""Independent reference implementations used only as test oracles.

Everything here is written as plain nested loops or one-liner formulas so
it shares no code path with the library: the library vectorizes over
windows and groups, these enumerate scalar index tuples.
"""

import numpy as np


def naive_conv2d(x, weights, bias=None, stride=1, padding=0, groups=1):
    """Six-nested-loop grouped cross-correlation with zero padding."""
    n, cin, h, w = x.shape
    nout, cpg, k, _ = weights.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    out = np.zeros((n, nout, ho, wo))
    out_per_group = nout // groups
    for b in range(n):
        for oc in range(nout):
            g = oc // out_per_group
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ic in range(cpg):
                        src_c = g * cpg + ic
                        for ky in range(k):
                            for kx in range(k):
                                iy = oy * stride + ky - padding
                                ix = ox * stride + kx - padding
                                if 0 <= iy < h and 0 <= ix < w:
                                    acc += x[b, src_c, iy, ix] * weights[oc, ic, ky, kx]
                    if bias is not None:
                        out[b, oc, oy, ox] = acc + bias[oc]
                    else:
                        out[b, oc, oy, ox] = acc
    return out


def naive_depthwise_then_pointwise(x, dw, pw):
    """Sequential loop oracle for the separable forward."""
    m = x.shape[1]
    k = dw.shape[2]
    mid = naive_conv2d(x, dw, stride=1, padding=(k - 1) // 2, groups=m)
    return naive_conv2d(mid, pw, stride=1, padding=0, groups=1)


def naive_group_norm(x, gamma, beta, num_groups, eps):
    """Per (sample, group) mean/variance, then per-channel affine."""
    n, c, h, w = x.shape
    per = c // num_groups
    out = np.zeros_like(x)
    for b in range(n):
        for g in range(num_groups):
            block = x[b, g * per : (g + 1) * per]
            mu = block.mean()
            var = block.var()
            for ci in range(per):
                ch = g * per + ci
                out[b, ch] = gamma[ch] * (x[b, ch] - mu) / np.sqrt(var + eps) + beta[ch]
    return out


def naive_softmax_location(logits):
    """Plain softmax of one location's channel vector."""
    e = np.exp(np.asarray(logits, dtype=np.float64))
    return e / e.sum()


def naive_reassemble(x, kernels, upscale, k_up):
    """Per-target-pixel weighted sum over the source neighborhood."""
    n, c, h, w = x.shape
    out = np.zeros((n, c, upscale * h, upscale * w))
    half = k_up // 2
    for b in range(n):
        for ch in range(c):
            for ty in range(upscale * h):
                for tx in range(upscale * w):
                    sy, sx = ty // upscale, tx // upscale
                    acc = 0.0
                    for ky in range(k_up):
                        for kx in range(k_up):
                            iy = sy + ky - half
                            ix = sx + kx - half
                            if 0 <= iy < h and 0 <= ix < w:
                                acc += kernels[b, ky * k_up + kx, ty, tx] * x[b, ch, iy, ix]
                    out[b, ch, ty, tx] = acc
    return out


def count_conv_macs_by_loop(h_out, w_out, kernel, in_per_group, out_channels):
    """Literally count multiply-accumulate events of one conv forward."""
    macs = 0
    for _oc in range(out_channels):
        for _oy in range(h_out):
            for _ox in range(w_out):
                for _ic in range(in_per_group):
                    for _ky in range(kernel):
                        for _kx in range(kernel):
                            macs += 1
    return macs


def brute_force_average_precision(flags, total_gt):
    """AP by explicit envelope evaluation at each distinct recall level.

    For every distinct recall value r reached by the ranked list, the
    envelope precision is the best precision among points with recall >= r;
    AP sums rectangle areas between consecutive distinct recalls.
    """
    if total_gt == 0 or not flags:
        return 0.0
    points = []
    tp = 0
    for rank, flag in enumerate(flags, start=1):
        tp += int(flag)
        points.append((tp / total_gt, tp / rank))
    distinct = sorted({r for r, _ in points})
    ap = 0.0
    prev = 0.0
    for r in distinct:
        envelope = max(p for rr, p in points if rr >= r)
        ap += (r - prev) * envelope
        prev = r
    return ap
