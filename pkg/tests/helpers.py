"""Shared test utilities: finite-difference gradients and brute-force oracles."""

import numpy as np
import torch


def finite_difference_param_grads(loss_fn, params, eps=1e-4, max_entries=20, seed=0):
    """Central finite differences of loss_fn() w.r.t. sampled parameter entries.

    Returns (analytic, numeric) flat arrays over the sampled entries. The
    analytic side comes from autograd; the numeric side perturbs parameters
    in place.
    """
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=False)
    rng = np.random.default_rng(seed)
    analytic, numeric = [], []
    for param, grad in zip(params, grads):
        flat = param.data.view(-1)
        gflat = grad.view(-1)
        count = min(max_entries, flat.numel())
        idx = rng.choice(flat.numel(), size=count, replace=False)
        for i in idx:
            original = flat[i].item()
            flat[i] = original + eps
            up = loss_fn().item()
            flat[i] = original - eps
            down = loss_fn().item()
            flat[i] = original
            numeric.append((up - down) / (2 * eps))
            analytic.append(gflat[i].item())
    return np.array(analytic), np.array(numeric)


def relative_grad_error(analytic, numeric):
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return np.abs(analytic - numeric).max() / scale


def connected_components_oracle(image, weight_threshold, connectivity=8):
    """Brute-force connected components joining pixels whose color distance
    is <= weight_threshold; independent of the union-find implementation."""
    h, w = image.shape[:2]
    flat = image.reshape(h * w, -1)
    labels = -np.ones(h * w, dtype=int)
    offsets = [(0, 1), (1, 0)]
    if connectivity == 8:
        offsets += [(1, 1), (1, -1)]
    adj = {i: [] for i in range(h * w)}
    for y in range(h):
        for x in range(w):
            for dy, dx in offsets:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w:
                    u, v = y * w + x, ny * w + nx
                    dist = np.sqrt(((flat[u] - flat[v]) ** 2).sum())
                    if dist <= weight_threshold:
                        adj[u].append(v)
                        adj[v].append(u)
    current = 0
    for start in range(h * w):
        if labels[start] != -1:
            continue
        stack = [start]
        labels[start] = current
        while stack:
            node = stack.pop()
            for nb in adj[node]:
                if labels[nb] == -1:
                    labels[nb] = current
                    stack.append(nb)
        current += 1
    return labels.reshape(h, w), current
