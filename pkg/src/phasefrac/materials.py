"""Linear elastic material data for plane-strain phase-field fracture.

Consistent unit system: mm, N, MPa, tonne/mm^3, s.  With these units
energies per volume come out in MPa (= mJ/mm^3), fracture toughness in
N/mm (= kJ/m^2) and wave speeds in mm/s.
"""

from dataclasses import dataclass

import numpy as np

# Number of in-plane dimensions; enters the volumetric-deviatoric split
# and the bulk modulus K_n = lambda + 2*mu/n.
PLANE_DIM = 2


@dataclass
class MaterialParams:
    """Elastic and fracture parameters.

    Parameters
    ----------
    E : float
        Young's modulus (MPa).
    nu : float
        Poisson's ratio.
    Gc : float
        Critical energy release rate (N/mm).
    ell : float
        Phase-field regularization length (mm).
    rho : float, optional
        Mass density (tonne/mm^3). Only needed for dynamics.
    k : float, optional
        Small residual stiffness keeping the displacement block
        well-conditioned when the phase field approaches 1.
    """

    E: float
    nu: float
    Gc: float
    ell: float
    rho: float = 0.0
    k: float = 1.0e-7

    def __post_init__(self):
        if self.E <= 0.0:
            raise ValueError(f"E must be positive, got {self.E}")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError(f"nu must lie in [0, 0.5), got {self.nu}")
        if self.Gc <= 0.0:
            raise ValueError(f"Gc must be positive, got {self.Gc}")
        if self.ell <= 0.0:
            raise ValueError(f"ell must be positive, got {self.ell}")
        if self.rho < 0.0:
            raise ValueError(f"rho must be non-negative, got {self.rho}")
        if not 0.0 < self.k < 1.0:
            raise ValueError(f"k must lie in (0, 1), got {self.k}")

    @property
    def lam(self) -> float:
        """First Lame parameter (MPa)."""
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def mu(self) -> float:
        """Shear modulus (MPa)."""
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def bulk_n(self) -> float:
        """In-plane bulk modulus K_n = lambda + 2*mu/n with n = 2."""
        return self.lam + 2.0 * self.mu / PLANE_DIM

    def elasticity_matrix(self) -> np.ndarray:
        """Plane-strain stiffness in Voigt form {exx, eyy, gxy} (gxy engineering).

        Returns
        -------
        C0 : (3, 3) ndarray
        """
        lam, mu = self.lam, self.mu
        return np.array(
            [
                [lam + 2.0 * mu, lam, 0.0],
                [lam, lam + 2.0 * mu, 0.0],
                [0.0, 0.0, mu],
            ]
        )
