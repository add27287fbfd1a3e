"""Strain-energy decompositions and the irreversibility history field.

Three splits are supported, all under plane strain with Voigt strains
{exx, eyy, gxy} (engineering shear):

* ``isotropic``      -- no decomposition, psi0_plus = psi0.
* ``vol-dev``        -- tensile volumetric + deviatoric energy is
  degradable; compressive volumetric energy is not.  The deviator and the
  bulk modulus K_n = lambda + 2 mu / n use n = 2 consistently.
* ``spectral``       -- decomposition by sign of the in-plane principal
  strains; the out-of-plane principal strain is zero and contributes only
  through the trace term.

The displacement problem always uses the full undamaged stress
sigma0 = C0 : eps (hybrid formulation); the split only feeds the history
field driving the phase field.
"""

from dataclasses import dataclass

import numpy as np

from .materials import MaterialParams

SPLITS = ("isotropic", "vol-dev", "spectral")


@dataclass
class SplitResult:
    """Decomposed undamaged strain energy density and stress.

    Energies in MPa (= mJ/mm^3), sigma0 in Voigt {sxx, syy, sxy} (MPa).
    """

    psi0_plus: float
    psi0_minus: float
    psi0: float
    sigma0: np.ndarray


def split_energy(eps: np.ndarray, params: MaterialParams, split: str) -> SplitResult:
    """Evaluate one split at a single Voigt strain.

    Thin wrapper over the vectorized :func:`split_energy_batch`.
    """
    eps = np.asarray(eps, dtype=float).reshape(1, 3)
    plus, minus, total = split_energy_batch(eps, params, split)
    sigma0 = eps @ params.elasticity_matrix().T
    return SplitResult(
        psi0_plus=float(plus[0]),
        psi0_minus=float(minus[0]),
        psi0=float(total[0]),
        sigma0=sigma0[0],
    )


def split_energy_batch(eps: np.ndarray, params: MaterialParams, split: str):
    """Vectorized split over strains of shape (..., 3).

    Returns
    -------
    (psi0_plus, psi0_minus, psi0) : ndarrays of shape ``eps.shape[:-1]``
    """
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}, expected one of {SPLITS}")
    eps = np.asarray(eps, dtype=float)
    exx, eyy, gxy = eps[..., 0], eps[..., 1], eps[..., 2]
    exy = 0.5 * gxy
    lam, mu = params.lam, params.mu
    tr = exx + eyy
    # eps:eps for the in-plane tensor (ezz = 0 under plane strain)
    ee = exx * exx + eyy * eyy + 2.0 * exy * exy
    psi0 = 0.5 * lam * tr * tr + mu * ee

    if split == "isotropic":
        return psi0, np.zeros_like(psi0), psi0

    if split == "vol-dev":
        kn = params.bulk_n
        tr_pos = np.maximum(tr, 0.0)
        tr_neg = np.minimum(tr, 0.0)
        dxx = exx - 0.5 * tr
        dyy = eyy - 0.5 * tr
        dev2 = dxx * dxx + dyy * dyy + 2.0 * exy * exy
        plus = 0.5 * kn * tr_pos * tr_pos + mu * dev2
        minus = 0.5 * kn * tr_neg * tr_neg
        return plus, minus, psi0

    # spectral: principal strains of the 2x2 in-plane tensor
    half_diff = 0.5 * (exx - eyy)
    radius = np.sqrt(half_diff * half_diff + exy * exy)
    e1 = 0.5 * tr + radius
    e2 = 0.5 * tr - radius
    tr_pos = np.maximum(tr, 0.0)
    tr_neg = np.minimum(tr, 0.0)
    plus = 0.5 * lam * tr_pos * tr_pos + mu * (
        np.maximum(e1, 0.0) ** 2 + np.maximum(e2, 0.0) ** 2
    )
    minus = 0.5 * lam * tr_neg * tr_neg + mu * (
        np.minimum(e1, 0.0) ** 2 + np.minimum(e2, 0.0) ** 2
    )
    return plus, minus, psi0


def update_history(h_prev, psi0_plus):
    """History update H = max(H_prev, psi0_plus), scalar or elementwise.

    Enforces the Kuhn-Tucker irreversibility conditions: H never decreases
    and grows only when the driving energy exceeds it.
    """
    h_prev = np.asarray(h_prev, dtype=float)
    psi0_plus = np.asarray(psi0_plus, dtype=float)
    if np.any(h_prev < 0.0) or np.any(psi0_plus < 0.0):
        raise ValueError("history update requires non-negative inputs")
    out = np.maximum(h_prev, psi0_plus)
    return float(out) if out.ndim == 0 else out
