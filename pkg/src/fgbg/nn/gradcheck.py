"""Central finite-difference gradient checking.

Checks run at float64 regardless of the training precision. The scalar
objective is a fixed random projection of the layer output, so analytic
gradients come straight from one backward call.
"""

from __future__ import annotations

import numpy as np

__all__ = ["numeric_gradient", "relative_error", "check_layer", "well_separated"]


def numeric_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar-valued f at x, elementwise."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if den == 0.0:
        return 0.0
    return float(num / den)


def well_separated(rng: np.random.Generator, shape, gap: float = 5e-3) -> np.ndarray:
    """Random float64 values whose pairwise gaps exceed the FD step.

    Keeps max-pool argmaxes and ReLU signs stable under the +/- eps probes.
    """
    n = int(np.prod(shape))
    vals = (rng.permutation(n).astype(np.float64) - n / 2.0) * (2.5 * gap)
    # never closer to zero than one gap, so ReLU never flips
    vals = np.where(vals >= 0, vals + gap, vals - gap)
    return vals.reshape(shape)


def check_layer(layer, x: np.ndarray, rng: np.random.Generator, eps: float = 1e-5):
    """Finite-difference check of dx and all parameter gradients.

    Returns {"x": err, **param errors}; the layer must be built at float64.
    """
    y0, _ = layer.forward(x, train=False)
    proj = rng.normal(size=y0.shape)

    def objective() -> float:
        y, _ = layer.forward(x, train=False)
        return float((y * proj).sum())

    _, cache = layer.forward(x, train=True, rng=None)
    dx, grads = layer.backward(proj.astype(x.dtype), cache)

    errors = {"x": relative_error(dx, numeric_gradient(objective, x, eps))}
    for name in sorted(layer.params):
        errors[name] = relative_error(
            grads[name], numeric_gradient(objective, layer.params[name], eps)
        )
    return errors
