"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np

from autodiff.tensor import Tensor, backward, no_grad


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Mapping[str, Tensor],
    step: float = 1e-5,
    max_checks: int | None = None,
    seed: int = 0,
    atol: float = 1e-9,
) -> dict[str, float]:
    """Return the max relative error per tensor.

    ``fn`` rebuilds the scalar loss from the current tensor values. Relative
    error of a tensor is max|a - n| / max(max|a|, max|n|, 1e-8); a tensor whose
    max|a - n| is within ``atol`` scores 0, so exactly-zero gradients are not
    judged on finite-difference noise. With ``max_checks`` only that many
    coordinates per tensor are probed.
    """
    for t in tensors.values():
        t.zero_grad()
    analytic = backward(fn(), tensors)

    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    for name, t in tensors.items():
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_checks is not None and flat.size > max_checks:
            coords = np.sort(rng.choice(flat.size, size=max_checks, replace=False))

        a = analytic[name].reshape(-1)[coords]
        numeric = np.empty_like(a)
        with no_grad():
            for j, i in enumerate(coords):
                orig = flat[i]
                flat[i] = orig + step
                f_plus = fn().item()
                flat[i] = orig - step
                f_minus = fn().item()
                flat[i] = orig
                numeric[j] = (f_plus - f_minus) / (2.0 * step)

        diff = float(np.abs(a - numeric).max(initial=0.0))
        if diff <= atol:
            errors[name] = 0.0
            continue
        scale = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
        errors[name] = float(diff / scale)
    return errors
