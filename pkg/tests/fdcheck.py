"""Central finite-difference gradient checking for double-precision modules."""

import numpy as np
import torch


def finite_diff_grad(fn, x: torch.Tensor, indices, eps: float = 1e-6) -> torch.Tensor:
    """Central differences of the scalar fn at the given flat indices of x."""
    numeric = torch.zeros(len(indices), dtype=torch.float64)
    flat = x.reshape(-1)
    with torch.no_grad():
        for j, i in enumerate(indices):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = float(fn(x))
            flat[i] = orig - eps
            lo = float(fn(x))
            flat[i] = orig
            numeric[j] = (hi - lo) / (2 * eps)
    return numeric


def check_input_grad(fn, x: torch.Tensor, eps: float = 1e-6,
                     max_elements: int | None = None, seed: int = 0) -> float:
    """Max relative error between autograd and finite-difference gradients.

    fn maps a double tensor to a scalar tensor; the relative error is the
    max absolute deviation scaled by the largest checked gradient magnitude.
    """
    x = x.detach().clone().double()
    xg = x.clone().requires_grad_(True)
    fn(xg).backward()
    analytic = xg.grad.detach().reshape(-1)

    n = x.numel()
    if max_elements is not None and n > max_elements:
        rng = np.random.default_rng(seed)
        indices = rng.choice(n, size=max_elements, replace=False)
    else:
        indices = np.arange(n)
    numeric = finite_diff_grad(fn, x, indices, eps)
    scale = max(float(numeric.abs().max()), 1e-12)
    return float((analytic[indices] - numeric).abs().max()) / scale
