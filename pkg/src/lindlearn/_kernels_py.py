"""Pure NumPy/SciPy implementation of the propagation kernels.

Reference fallback for the compiled ``_kernels`` extension; both expose the same
two functions with identical argument conventions. All trajectories of a call
share one step grid and are propagated together (state layout ``(n, B)``):

* the drift ``A_b(t) = A0 + sum_c p_cb(t) C_c`` is given as CSR arrays for
  ``A0`` and for the vertically stacked controls ``[C_0; C_1; ...]`` (plus the
  transposes for the backward sweep);
* ``hs[k]`` is the size of step ``k`` and ``pvals[k, s, c, b]`` the amplitude of
  control ``c`` for trajectory ``b`` at the step start (s=0), midpoint (1) and
  end (2);
* ``seg_steps[s]`` is the number of steps between record ``s`` and ``s + 1``,
  record 0 being the initial state;
* ``method`` is 0 for forward Euler and 1 for classic RK4.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

EULER, RK4 = 0, 1


def _csr(indptr, indices, data, n_rows, n_cols):
    return sp.csr_matrix((data, indices, indptr), shape=(n_rows, n_cols))


class _Drift:
    def __init__(self, a, c, n, n_ctrl):
        self.a = _csr(*a, n, n)
        self.c = _csr(*c, n * n_ctrl, n) if n_ctrl else None
        self.n = n
        self.n_ctrl = n_ctrl

    def __call__(self, p, x):
        # p: (n_ctrl, B), x: (n, B)
        y = self.a @ x
        if self.n_ctrl:
            cx = (self.c @ x).reshape(self.n_ctrl, self.n, -1)
            y += np.einsum("cb,cnb->nb", p, cx)
        return y


def forward(a, c, n_ctrl, hs, pvals, seg_steps, x0, method, stages=None):
    """Records at every segment end; optionally fills ``stages[k]`` with the
    stage inputs of step ``k`` (shape ``(n_steps, 1 or 4, n * B)``)."""
    x = np.array(x0, dtype=np.float64)
    n = x.shape[0]
    drift = _Drift(a, c, n, n_ctrl)
    out = np.empty((len(seg_steps) + 1,) + x.shape)
    out[0] = x
    k = 0
    for s, m in enumerate(seg_steps):
        for _ in range(m):
            h, p = hs[k], pvals[k]
            if method == EULER:
                if stages is not None:
                    stages[k, 0] = x.reshape(-1)
                x = x + h * drift(p[0], x)
            else:
                k1 = drift(p[0], x)
                y2 = x + 0.5 * h * k1
                k2 = drift(p[1], y2)
                y3 = x + 0.5 * h * k2
                k3 = drift(p[1], y3)
                y4 = x + h * k3
                k4 = drift(p[2], y4)
                if stages is not None:
                    for i, y in enumerate((x, y2, y3, y4)):
                        stages[k, i] = y.reshape(-1)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            k += 1
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state after segment {s}")
        out[s + 1] = x
    return out


def backward(a, at, c, ct, n_ctrl, pattern, n_params, hs, pvals, seg_steps, records, impulses, method,
             stages=None):
    """Reverse sweep through the discrete integrator.

    Returns ``(grad, lam0)``: ``grad[j] = dL/dtheta_j`` summed over the
    trajectories and ``lam0 = dL/dx0`` with shape ``(n, B)``. The drift
    generators are described by ``pattern = (prow, pcol, pmap, pid, val)``:
    the union sparsity pattern and, per generator entry, its pattern slot,
    parameter index and value. Without ``stages`` from the forward pass each
    segment is replayed from its record.
    """
    n = records.shape[1]
    fwd = _Drift(a, c, n, n_ctrl)
    bwd = _Drift(at, ct, n, n_ctrl)
    prow, pcol, pmap, pid, val = pattern
    acc = np.zeros(len(prow))

    def contract(kb, y):
        # acc[p] += sum_b kb[prow[p], b] y[pcol[p], b]
        acc[:] += np.einsum("eb,eb->e", kb[prow], y[pcol])

    starts = np.concatenate([[0], np.cumsum(seg_steps)]).astype(np.int64)
    lam = np.array(impulses[-1], dtype=np.float64)
    for s in range(len(seg_steps) - 1, -1, -1):
        k0, m = starts[s], seg_steps[s]
        # replay the segment from its checkpoint, keeping the stage inputs
        x = records[s].copy()
        seg = []
        shape = records.shape[1:]
        for k in range(k0, k0 + m):
            if stages is not None:
                seg.append(tuple(y.reshape(shape) for y in stages[k]))
                continue
            h, p = hs[k], pvals[k]
            if method == EULER:
                seg.append((x,))
                x = x + h * fwd(p[0], x)
            else:
                k1 = fwd(p[0], x)
                y2 = x + 0.5 * h * k1
                k2 = fwd(p[1], y2)
                y3 = x + 0.5 * h * k2
                k3 = fwd(p[1], y3)
                y4 = x + h * k3
                k4 = fwd(p[2], y4)
                seg.append((x, y2, y3, y4))
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for k in range(k0 + m - 1, k0 - 1, -1):
            h, p = hs[k], pvals[k]
            st = seg[k - k0]
            if method == EULER:
                kb = h * lam
                contract(kb, st[0])
                lam = lam + bwd(p[0], kb)
                continue
            x, y2, y3, y4 = st
            k4b = (h / 6.0) * lam
            k3b = (h / 3.0) * lam
            k2b = (h / 3.0) * lam
            k1b = (h / 6.0) * lam
            new = lam.copy()
            contract(k4b, y4)
            yb = bwd(p[2], k4b)
            new += yb
            k3b = k3b + h * yb
            contract(k3b, y3)
            yb = bwd(p[1], k3b)
            new += yb
            k2b = k2b + 0.5 * h * yb
            contract(k2b, y2)
            yb = bwd(p[1], k2b)
            new += yb
            k1b = k1b + 0.5 * h * yb
            contract(k1b, x)
            new += bwd(p[0], k1b)
            lam = new
        if not np.all(np.isfinite(lam)):
            raise FloatingPointError(f"non-finite adjoint in segment {s}")
        lam = lam + impulses[s]
    grad = np.zeros(n_params)
    np.add.at(grad, pid, val * acc[pmap])
    return grad, lam
