"""Pure numpy implementations of the hot loops.

These mirror ``_ckernels.pyx`` argument for argument and are used when the
compiled extension is unavailable (or ``JCAS_UNFOLD_PURE=1``). All batch
arrays are C-contiguous float64; the leading axis indexes column problems.

Objective in normalised real coordinates, with ``a = sqrt(P_T/N)``::

    f(x) = rho * (a^2 x'Gx - 2a x'h + |s|^2) + (1 - rho) * a^2 |x - x0|^2

where ``G = Hbar'Hbar`` and ``h = Hbar's``.
"""

import itertools

import numpy as np

BACKEND = "python"


def _project(x):
    n = x.shape[-1] // 2
    re, im = x[..., :n], x[..., n:]
    mod = np.hypot(re, im)
    small = mod < 1e-12
    safe = np.where(small, 1.0, mod)
    return np.concatenate([np.where(small, 1.0, re / safe), np.where(small, 0.0, im / safe)], axis=-1)


def _objective(gx, x, hts, x0, ss, rho, amp):
    a2 = amp * amp
    d = x - x0
    comm = a2 * np.einsum("bi,bi->b", x, gx) - 2.0 * amp * np.einsum("bi,bi->b", x, hts) + ss
    return rho * comm + (1.0 - rho) * a2 * np.einsum("bi,bi->b", d, d)


def pgd(gram, hts, x0, sbar_sq, rho, amp, delta, max_iters, tol, patience, x_init):
    """Batched projected gradient descent with per-column early stopping.

    Returns ``(x_best, f_best, iters, trace)``; ``trace[b, t]`` is the best
    objective seen after ``t`` updates (padded with the final value).
    """
    a2 = amp * amp
    x = _project(np.array(x_init, dtype=float))
    nb = x.shape[0]
    gx = np.einsum("bij,bj->bi", gram, x)
    f = _objective(gx, x, hts, x0, sbar_sq, rho, amp)
    x_best = x.copy()
    f_best = f.copy()
    trace = np.empty((nb, max_iters + 1))
    trace[:, 0] = f_best
    iters = np.full(nb, max_iters, dtype=np.int64)
    active = np.ones(nb, dtype=bool)
    for t in range(1, max_iters + 1):
        grad = 2.0 * rho * a2 * gx - 2.0 * rho * amp * hts + 2.0 * (1.0 - rho) * a2 * (x - x0)
        x_new = _project(x - delta * grad)
        x = np.where(active[:, None], x_new, x)
        gx = np.einsum("bij,bj->bi", gram, x)
        f = _objective(gx, x, hts, x0, sbar_sq, rho, amp)
        better = active & (f < f_best)
        x_best[better] = x[better]
        f_best[better] = f[better]
        trace[:, t] = f_best
        if t >= patience:
            stop = active & (trace[:, t - patience] - f_best < tol)
            iters[stop] = t
            active &= ~stop
            if not active.any():
                trace[:, t + 1 :] = f_best[:, None]
                break
    return x_best, f_best, iters, trace


def psi(t):
    return np.clip(2.0 * t, -1.0, 1.0)


def unfold_forward(w, b, gram, hts, x0, x_init):
    """Run all layers. Returns (pre-activations, outputs incl. input, G @ input per layer)."""
    nl = w.shape[0]
    nb, dim = hts.shape
    pre = np.empty((nl, nb, dim))
    out = np.empty((nl + 1, nb, dim))
    q = np.empty((nl, nb, dim))
    out[0] = x_init
    bsum = b.sum(axis=1)
    for p in range(nl):
        x = out[p]
        q[p] = np.einsum("bij,bj->bi", gram, x)
        s = w[p, 0] * x0 + w[p, 1] * hts + w[p, 2] * q[p] + w[p, 3] * x + bsum[p]
        pre[p] = s
        out[p + 1] = psi(s)
    return pre, out, q


def unfold_loss_grad(w, b, gram, hts, x0, sbar_sq, rho, amp, x_init):
    """Batch-mean all-layer loss and its gradients w.r.t. every weight and bias."""
    nl = w.shape[0]
    nb = hts.shape[0]
    a2 = amp * amp
    pre, out, q = unfold_forward(w, b, gram, hts, x0, x_init)
    loss = 0.0
    dw = np.zeros_like(w)
    db = np.zeros_like(b)
    carry = np.zeros_like(hts)  # dL/dx_p flowing back from layer p+1
    for p in range(nl - 1, -1, -1):
        x = out[p + 1]
        gx = q[p + 1] if p + 1 < nl else np.einsum("bij,bj->bi", gram, x)
        loss += float(np.sum(_objective(gx, x, hts, x0, sbar_sq, rho, amp)))
        direct = 2.0 * rho * a2 * gx - 2.0 * rho * amp * hts + 2.0 * (1.0 - rho) * a2 * (x - x0)
        gxp = direct / nb + carry
        ds = np.where(np.abs(pre[p]) < 0.5, 2.0 * gxp, 0.0)
        dw[p, 0] = np.sum(ds * x0, axis=0)
        dw[p, 1] = np.sum(ds * hts, axis=0)
        dw[p, 2] = np.sum(ds * q[p], axis=0)
        dw[p, 3] = np.sum(ds * out[p], axis=0)
        db[p, :] = np.sum(ds, axis=0)
        if p > 0:
            carry = np.einsum("bij,bj->bi", gram, w[p, 2] * ds) + w[p, 3] * ds
    return loss / nb, dw, db


def phase_grid(gram, hts, x0, sbar_sq, rho, amp, grid_points):
    """Exhaustive search over per-entry phases 2*pi*i/grid_points.

    Returns ``(indices, f_best)``; ties resolve to the lexicographically
    smallest index tuple.
    """
    dim = hts.shape[0]
    n = dim // 2
    phases = 2.0 * np.pi * np.arange(grid_points) / grid_points
    c, s = np.cos(phases), np.sin(phases)
    tail = min(n, 2)
    lead = n - tail
    tail_idx = np.array(list(itertools.product(range(grid_points), repeat=tail)), dtype=np.int64)
    best_f = np.inf
    best = None
    x = np.empty((tail_idx.shape[0], dim))
    for head in itertools.product(range(grid_points), repeat=lead):
        idx = np.concatenate([np.tile(np.array(head, dtype=np.int64), (tail_idx.shape[0], 1)), tail_idx], axis=1)
        x[:, :n] = c[idx]
        x[:, n:] = s[idx]
        gx = x @ gram
        f = _objective(gx, x, np.broadcast_to(hts, x.shape), np.broadcast_to(x0, x.shape), sbar_sq, rho, amp)
        i = int(np.argmin(f))
        if f[i] < best_f:
            best_f = float(f[i])
            best = idx[i].copy()
    return best, best_f
