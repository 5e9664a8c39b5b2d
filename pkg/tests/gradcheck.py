"""Central finite-difference oracle shared by the numerics and acceptance tests."""
import numpy as np

import genrec.numerics as nx


def numeric_grad(f, arrays, eps, coords=None):
    """d f / d arrays[i] by central differences.

    ``f`` takes plain numpy arrays and returns a float. ``coords`` optionally
    maps array index to a list of flat positions to probe; others stay NaN.
    """
    out = []
    for i, a in enumerate(arrays):
        g = np.full(a.shape, np.nan)
        flat = a.reshape(-1)
        positions = range(flat.size) if coords is None else coords[i]
        for j in positions:
            old = flat[j]
            flat[j] = old + eps
            x_hi, hi = float(flat[j]), f(arrays)
            flat[j] = old - eps
            x_lo, lo = float(flat[j]), f(arrays)
            flat[j] = old
            # the realized step, after rounding to the array dtype
            g.reshape(-1)[j] = (hi - lo) / (x_hi - x_lo)
        out.append(g)
    return out


def relative_error(analytic, numeric):
    """max |a - n| / max |n| over the probed entries."""
    mask = ~np.isnan(numeric)
    a, n = analytic[mask].astype(np.float64), numeric[mask]
    scale = max(np.abs(n).max(), 1e-8)
    return float(np.abs(a - n).max() / scale)


def check_op(build, arrays, eps, dtype, seed):
    """Compare ``backward`` against finite differences for ``loss = sum(build(*x) * R)``.

    Returns the worst relative error over all inputs.
    """
    rng = np.random.default_rng(seed + 10_000)
    arrays = [np.array(a, dtype=dtype) for a in arrays]
    leaves = [nx.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*leaves)
    weights = rng.normal(size=out.shape).astype(dtype)
    loss = (out * weights).sum()
    nx.backward(loss)

    def f(xs):
        with nx.no_grad():
            o = build(*[nx.Tensor(x) for x in xs])
        return float((o.data.astype(np.float64) * weights).sum())

    numeric = numeric_grad(f, [a.copy() for a in arrays], eps)
    return max(relative_error(leaf.grad, n) for leaf, n in zip(leaves, numeric))
