"""Hot numeric kernels with a numba lane and a pure-numpy fallback lane.

The numba lane is the default. Set ``SALIEVAL_NUMBA=0`` to force the numpy
lane (useful on machines without a working JIT, and for the benchmark in
``benchmarks/bench_kernels.py``). Matrix products are deliberately *not*
here: those go through BLAS via ``np.matmul`` and gain nothing from a JIT.

Both lanes compute identical math; the numba kernels avoid ``fastmath`` so
results stay deterministic within a lane. Callers pass C-contiguous float64
arrays: 2-D for the row kernels, 1-D for the elementwise rescale kernel.
"""

import os

import numpy as np


def _np_softmax_rows(x):
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def _np_softmax_grad_rows(s, g):
    dot = (g * s).sum(axis=1, keepdims=True)
    return s * (g - dot)


def _np_scatter_add_rows(table, idx, rows):
    np.add.at(table, idx, rows)


def _np_rescale_multipliers(d_out, d_in, exact, eps):
    small = np.abs(d_in) < eps
    safe = np.where(small, 1.0, d_in)
    return np.where(small, exact, d_out / safe)


def _want_numba():
    return os.environ.get("SALIEVAL_NUMBA", "1").lower() not in ("0", "false", "off")


HAS_NUMBA = False
if _want_numba():
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False

if HAS_NUMBA:

    @njit(cache=True)
    def _nb_softmax_rows(x):
        out = np.empty_like(x)
        for r in range(x.shape[0]):
            m = x[r, 0]
            for c in range(1, x.shape[1]):
                if x[r, c] > m:
                    m = x[r, c]
            total = 0.0
            for c in range(x.shape[1]):
                v = np.exp(x[r, c] - m)
                out[r, c] = v
                total += v
            for c in range(x.shape[1]):
                out[r, c] /= total
        return out

    @njit(cache=True)
    def _nb_softmax_grad_rows(s, g):
        out = np.empty_like(s)
        for r in range(s.shape[0]):
            dot = 0.0
            for c in range(s.shape[1]):
                dot += g[r, c] * s[r, c]
            for c in range(s.shape[1]):
                out[r, c] = s[r, c] * (g[r, c] - dot)
        return out

    @njit(cache=True)
    def _nb_scatter_add_rows(table, idx, rows):
        for r in range(idx.shape[0]):
            t = idx[r]
            for c in range(rows.shape[1]):
                table[t, c] += rows[r, c]

    @njit(cache=True)
    def _nb_rescale_multipliers(d_out, d_in, exact, eps):
        out = np.empty_like(d_out)
        for i in range(d_out.shape[0]):
            if abs(d_in[i]) < eps:
                out[i] = exact[i]
            else:
                out[i] = d_out[i] / d_in[i]
        return out

    softmax_rows = _nb_softmax_rows
    softmax_grad_rows = _nb_softmax_grad_rows
    scatter_add_rows = _nb_scatter_add_rows
    _rescale_1d = _nb_rescale_multipliers
    BACKEND = "numba"
else:
    softmax_rows = _np_softmax_rows
    softmax_grad_rows = _np_softmax_grad_rows
    scatter_add_rows = _np_scatter_add_rows
    _rescale_1d = _np_rescale_multipliers
    BACKEND = "numpy"


def rescale_multipliers(d_out, d_in, exact, eps):
    """Elementwise d_out/d_in with the exact derivative where |d_in| < eps."""
    shape = d_out.shape
    flat = _rescale_1d(
        np.ascontiguousarray(d_out).ravel(),
        np.ascontiguousarray(d_in).ravel(),
        np.ascontiguousarray(exact).ravel(),
        eps,
    )
    return flat.reshape(shape)
