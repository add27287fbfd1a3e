"""Inverse-form BFGS operator for the monolithic quasi-Newton scheme.

The stiffness approximation is never formed; instead the inverse operator

    H_new = (I - s y^T / (y^T s)) H (I - y s^T / (y^T s)) + s s^T / (y^T s)

is applied through the standard two-loop recursion on top of a factorized
base operator (the block-diagonal tangent of the first iteration).  Each
accepted pair (s, y) = (dz, dr) enforces the secant condition on the
implied stiffness, K~ s = y, and the operator stays symmetric positive
definite as long as the base operator is SPD and every accepted pair has
positive curvature s . y > 0.  Pairs violating the curvature condition are
skipped with a warning rather than damped.
"""

import logging
import math

import numpy as np

log = logging.getLogger("phasefrac.bfgs")


class BfgsOperator:
    """Applies the BFGS-updated inverse of a base operator.

    Parameters
    ----------
    base_solve : callable
        Action of the base inverse, ``r -> K0^{-1} r``.
    """

    def __init__(self, base_solve):
        self.base_solve = base_solve
        self.pairs = []
        self.skipped = 0

    @property
    def n_updates(self) -> int:
        return len(self.pairs)

    def push_pair(self, s: np.ndarray, y: np.ndarray) -> bool:
        """Store an update pair; returns False if curvature rejects it."""
        sy = float(s @ y)
        if sy <= 0.0 or not math.isfinite(1.0 / sy):
            self.skipped += 1
            log.warning(
                "skipping quasi-Newton pair with non-positive curvature "
                "(s.y = %.3e)", sy,
            )
            return False
        self.pairs.append((s.copy(), y.copy(), 1.0 / sy))
        return True

    def apply(self, r: np.ndarray) -> np.ndarray:
        """Two-loop recursion: returns H r."""
        q = np.array(r, dtype=float)
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * (s @ q)
            q -= a * y
            alphas.append(a)
        q = self.base_solve(q)
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return q

    def reset(self):
        self.pairs.clear()


def bfgs_apply_inverse(pairs, base_solve, residual: np.ndarray) -> np.ndarray:
    """Functional form: apply the updated inverse built from ``pairs``.

    ``pairs`` is a sequence of (dz, dr) tuples applied in order; pairs with
    non-positive curvature are skipped.  Returns H . residual, i.e. the
    (unnegated) solve of the approximated system.
    """
    op = BfgsOperator(base_solve)
    for s, y in pairs:
        op.push_pair(np.asarray(s, dtype=float), np.asarray(y, dtype=float))
    return op.apply(residual)
