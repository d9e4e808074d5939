"""Pointy interaction potentials and their derivatives.

A *pointy* potential is even, C^1 away from the origin, has a bounded
derivative and is one-sidedly concave; the kink at the origin is what
drives finite-time blow-up of smooth solutions.  The velocity field of
the transport model is built from the *hatted* derivative, i.e. the
derivative with its value at 0 replaced by exactly 0, which discretely
amounts to excluding the self-interaction term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "KernelValidationError",
    "PointyKernel",
    "pointy_kernel",
    "exponential_kernel",
    "regularize",
]


class KernelValidationError(ValueError):
    """A candidate kernel failed one of the sampled hypothesis checks."""


def _check_finite(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("kernel evaluated at non-finite position")
    return arr


@dataclass(frozen=True)
class PointyKernel:
    """Even interaction potential with bounded, one-sidedly concave slope.

    ``value`` and ``deriv`` must accept scalars or numpy arrays.  ``deriv``
    is only meaningful away from 0; use :meth:`hat_deriv` for the
    diagonal-zeroed version that the solvers consume.  ``lipschitz`` bounds
    ``|deriv|`` and ``lam`` is the one-sided concavity constant.
    """

    value_fn: Callable = field(repr=False)
    deriv_fn: Callable = field(repr=False)
    lipschitz: float
    lam: float
    kind: str = "custom"

    def value(self, x):
        """Potential value K(x); even in x."""
        arr = _check_finite(x)
        out = self.value_fn(arr)
        return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out

    def deriv(self, x):
        """Spatial derivative of the potential, defined for x != 0."""
        arr = _check_finite(x)
        out = self.deriv_fn(arr)
        return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out

    def hat_deriv(self, x):
        """Derivative with the origin value replaced by exactly 0."""
        arr = _check_finite(x)
        out = np.where(arr == 0.0, 0.0, self.deriv_fn(arr))
        return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def _sampled_hypothesis_checks(k: PointyKernel, n_samples: int = 1000, tol: float = 1e-10) -> None:
    rng = np.random.default_rng(20240 + n_samples)
    x = rng.uniform(-10.0, 10.0, size=n_samples)
    y = rng.uniform(-10.0, 10.0, size=n_samples)
    # force mixed-sign pairs into the sample
    y[: n_samples // 4] = -np.abs(y[: n_samples // 4])
    x[: n_samples // 4] = np.abs(x[: n_samples // 4])

    if k.hat_deriv(0.0) != 0.0:
        raise KernelValidationError("hat_deriv(0) must be exactly 0")

    kv = k.value(x)
    if np.max(np.abs(kv - k.value(-x))) > tol * max(1.0, float(np.max(np.abs(kv)))):
        raise KernelValidationError("evenness K(x) = K(-x) violated")

    hd_x = k.hat_deriv(x)
    if np.max(np.abs(hd_x + k.hat_deriv(-x))) > tol:
        raise KernelValidationError("oddness of hat_deriv violated")

    if np.max(np.abs(hd_x)) > k.lipschitz + tol:
        raise KernelValidationError("derivative exceeds declared Lipschitz bound")

    gap = (hd_x - k.hat_deriv(y)) * (x - y) - k.lam * (x - y) ** 2
    if np.max(gap) > tol:
        raise KernelValidationError("one-sided concavity violated for declared lambda")


def pointy_kernel(
    value: Callable,
    deriv: Callable,
    lipschitz: float,
    lam: float,
    kind: str = "custom",
    validate: bool = True,
) -> PointyKernel:
    """Build a kernel from callables, enforcing the pointy-potential
    hypotheses by sampled checks (1000 sample pairs, tolerance 1e-10)."""
    if lipschitz < 0 or lam < 0:
        raise KernelValidationError("lipschitz and lam must be nonnegative")
    k = PointyKernel(value, deriv, float(lipschitz), float(lam), kind)
    if validate:
        _sampled_hypothesis_checks(k)
    return k


def _exp_value(x):
    return 0.5 * np.exp(-np.abs(x))


def _exp_deriv(x):
    # sign(0) = 0, so this is already the hatted derivative at the origin
    return -0.5 * np.sign(x) * np.exp(-np.abs(x))


def exponential_kernel() -> PointyKernel:
    """The chemotaxis kernel K(x) = 0.5 * exp(-|x|).

    This is the Green function of 1 - d^2/dx^2 on the line, so the
    chemoattractant field is exactly K convolved with the weighted
    density.  |K'| <= 1/2 everywhere and the one-sided concavity
    constant is 1/2 (the supremum of K'' away from the origin; the
    downward kink at 0 only helps).
    """
    return PointyKernel(_exp_value, _exp_deriv, 0.5, 0.5, kind="exponential")


def regularize(kernel: PointyKernel, n: int) -> PointyKernel:
    """Replace the kink by a linear slope on [-1/n, 1/n].

    The returned kernel's derivative equals the original one for
    |x| > 1/n and interpolates linearly through 0 inside.  The Lipschitz
    bound can only shrink and the concavity constant is unchanged.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError("regularization index n must be a positive integer")
    n = int(n)
    inv_n = 1.0 / n
    slope = n * float(kernel.deriv(inv_n))

    def reg_deriv(x, _k=kernel, _inv=inv_n, _s=slope):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) > _inv, _k.deriv_fn(x), _s * x)

    def reg_value(x, _k=kernel, _inv=inv_n, _s=slope):
        x = np.asarray(x, dtype=float)
        inner = _k.value_fn(np.full_like(x, _inv)) + 0.5 * _s * (x * x - _inv * _inv)
        return np.where(np.abs(x) > _inv, _k.value_fn(x), inner)

    return PointyKernel(reg_value, reg_deriv, kernel.lipschitz, kernel.lam, kind="regularized")
