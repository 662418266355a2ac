"""Common interface for drift estimators and the worker-count policy."""

from __future__ import annotations

import os

import numpy as np

from .errors import DimensionError, ValidationError


def worker_count():
    """Workers allowed for data-parallel loops; ``SB_THREADS`` caps the CPU count."""
    n = os.cpu_count() or 1
    cap = os.environ.get("SB_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValidationError(f"SB_THREADS must be an integer, got {cap!r}") from None
    return n


class DriftField:
    """Correction drift ``u(x, t)`` added to the reference drift by the sampler.

    Subclasses implement :meth:`_evaluate` on a ``(k, d)`` batch at one time.
    """

    kind = "abstract"
    dim: int

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        if xb.shape[-1] != self.dim:
            raise DimensionError(f"query dimension {xb.shape[-1]} does not match drift dimension {self.dim}")
        t = float(t)
        if not 0.0 < t < 1.0:
            raise ValidationError(f"drift time must lie in (0, 1), got {t}")
        out = self._evaluate(xb, t)
        return out[0] if single else out

    def _evaluate(self, x, t):
        raise NotImplementedError
