"""Element-level kernels for coupled displacement / phase-field quads.

Provides bilinear (Q4) and serendipity (Q8) shape functions, isoparametric
kinematics and the element residuals, tangent blocks and consistent mass.
Full Gauss integration is used throughout: 2x2 for Q4, 3x3 for Q8.

The hybrid formulation makes the element contributions simple functions of
the current state: the displacement residual always uses the undamaged
stress sigma0 = C0 : eps scaled by the degradation g(phi) = (1 - phi)^2 + k,
and the phase-field residual is driven by the integration-point history
field H (already updated by the caller).  A fatigue degradation factor f
multiplies the fracture-energy terms only.

:class:`ElementBatch` holds the precomputed shape-function data for a whole
mesh so residuals and tangents evaluate as a handful of einsums.
"""

from dataclasses import dataclass

import numpy as np

from .materials import MaterialParams


class DistortedElementError(Exception):
    """Jacobian determinant non-positive at a quadrature point."""


# Serendipity corner/midside local coordinates, counter-clockwise.
_Q8_CORNERS = ((-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0))
_Q8_MIDS = ((0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0))


def shape_eval(element_order: int, local_coords):
    """Shape functions and their local derivatives at (xi, eta).

    Returns
    -------
    N : (m,) ndarray
    dN : (2, m) ndarray
        Row 0 is dN/dxi, row 1 is dN/deta.
    """
    xi, eta = float(local_coords[0]), float(local_coords[1])
    if element_order == 1:
        N = 0.25 * np.array(
            [
                (1 - xi) * (1 - eta),
                (1 + xi) * (1 - eta),
                (1 + xi) * (1 + eta),
                (1 - xi) * (1 + eta),
            ]
        )
        dN = 0.25 * np.array(
            [
                [-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)],
                [-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)],
            ]
        )
        return N, dN
    if element_order != 2:
        raise ValueError(f"element_order must be 1 or 2, got {element_order}")

    N = np.empty(8)
    dN = np.empty((2, 8))
    for a, (xa, ea) in enumerate(_Q8_CORNERS):
        N[a] = 0.25 * (1 + xa * xi) * (1 + ea * eta) * (xa * xi + ea * eta - 1)
        dN[0, a] = 0.25 * xa * (1 + ea * eta) * (2 * xa * xi + ea * eta)
        dN[1, a] = 0.25 * ea * (1 + xa * xi) * (xa * xi + 2 * ea * eta)
    for a, (xa, ea) in enumerate(_Q8_MIDS, start=4):
        if xa == 0.0:  # midside on eta = +-1 edge
            N[a] = 0.5 * (1 - xi * xi) * (1 + ea * eta)
            dN[0, a] = -xi * (1 + ea * eta)
            dN[1, a] = 0.5 * ea * (1 - xi * xi)
        else:  # midside on xi = +-1 edge
            N[a] = 0.5 * (1 + xa * xi) * (1 - eta * eta)
            dN[0, a] = 0.5 * xa * (1 - eta * eta)
            dN[1, a] = -eta * (1 + xa * xi)
    return N, dN


def gauss_rule(element_order: int):
    """Full-integration Gauss points and weights on [-1, 1]^2."""
    if element_order == 1:
        p, w = np.array([-1.0, 1.0]) / np.sqrt(3.0), np.array([1.0, 1.0])
    elif element_order == 2:
        p = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
        w = np.array([5.0, 8.0, 5.0]) / 9.0
    else:
        raise ValueError(f"element_order must be 1 or 2, got {element_order}")
    pts = np.array([(a, b) for b in p for a in p])
    wts = np.array([wa * wb for wb in w for wa in w])
    return pts, wts


def _b_matrices(grad):
    """Assemble B_u (..., 3, 2m) and B_phi (..., 2, m) from spatial gradients."""
    m = grad.shape[-1]
    lead = grad.shape[:-2]
    b_u = np.zeros(lead + (3, 2 * m))
    b_u[..., 0, 0::2] = grad[..., 0, :]
    b_u[..., 1, 1::2] = grad[..., 1, :]
    b_u[..., 2, 0::2] = grad[..., 1, :]
    b_u[..., 2, 1::2] = grad[..., 0, :]
    return b_u, grad


def kinematics(node_coords, local_coords, u_e=None):
    """Strain-displacement matrices at a single local point.

    Returns ``(B_u, B_phi, detJ, eps)``; ``eps`` is the Voigt strain
    {exx, eyy, gxy} (zeros when ``u_e`` is omitted).  Raises
    :class:`DistortedElementError` for detJ <= 0.
    """
    node_coords = np.asarray(node_coords, dtype=float)
    m = node_coords.shape[0]
    order = 1 if m == 4 else 2
    _, dN = shape_eval(order, local_coords)
    jac = dN @ node_coords  # (2, 2)
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det <= 0.0:
        raise DistortedElementError(f"detJ = {det:g} at {tuple(local_coords)}")
    inv = np.array([[jac[1, 1], -jac[0, 1]], [-jac[1, 0], jac[0, 0]]]) / det
    grad = inv @ dN
    b_u, b_phi = _b_matrices(grad)
    if u_e is None:
        eps = np.zeros(3)
    else:
        eps = b_u @ np.asarray(u_e, dtype=float)
    return b_u, b_phi, float(det), eps


@dataclass
class ElementContribution:
    """Element residuals, tangent blocks and consistent mass."""

    r_u: np.ndarray
    r_phi: np.ndarray
    K_uu: np.ndarray
    K_phiphi: np.ndarray
    M_e: np.ndarray


class ElementBatch:
    """Precomputed shape-function data for a batch of same-order elements.

    Parameters
    ----------
    coords : (nel, m, 2) ndarray
        Nodal coordinates per element.
    thickness : float
        Out-of-plane thickness entering every volume integral.
    """

    def __init__(self, coords, thickness=1.0):
        coords = np.asarray(coords, dtype=float)
        self.nel, self.m, _ = coords.shape
        self.order = 1 if self.m == 4 else 2
        pts, wts = gauss_rule(self.order)
        self.ngp = len(wts)

        N = np.empty((self.ngp, self.m))
        dN = np.empty((self.ngp, 2, self.m))
        for g, pt in enumerate(pts):
            N[g], dN[g] = shape_eval(self.order, pt)
        self.N = N

        jac = np.einsum("gai,eib->egab", dN, coords)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        if np.any(det <= 0.0):
            e, g = np.unravel_index(int(np.argmin(det)), det.shape)
            raise DistortedElementError(
                f"detJ = {det[e, g]:g} in element {e} at gauss point {g}"
            )
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1]
        inv[..., 0, 1] = -jac[..., 0, 1]
        inv[..., 1, 0] = -jac[..., 1, 0]
        inv[..., 1, 1] = jac[..., 0, 0]
        inv /= det[..., None, None]
        grad = np.einsum("egab,gbi->egai", inv, dN)

        self.B_u, self.B_phi = _b_matrices(grad)
        self.dV = wts[None, :] * det * thickness  # (nel, ngp)

        # Shared per-gauss-point outer products.
        self.NN = np.einsum("gi,gj->gij", N, N)
        nu = np.zeros((self.ngp, 2, 2 * self.m))
        nu[:, 0, 0::2] = N
        nu[:, 1, 1::2] = N
        self.NuNu = np.einsum("gai,gaj->gij", nu, nu)

    def cache_stiffness_products(self, C0):
        """Precompute B^T C0 B and B_phi^T B_phi (memory for assembly speed)."""
        self.BtCB = np.einsum("egai,ab,egbj->egij", self.B_u, C0, self.B_u)
        self.BpBp = np.einsum("egai,egaj->egij", self.B_phi, self.B_phi)

    def strains(self, u_e):
        """Voigt strains at every Gauss point, shape (nel, ngp, 3)."""
        return np.einsum("egai,ei->ega", self.B_u, u_e)

    def phi_at_gp(self, phi_e):
        return phi_e @ self.N.T  # (nel, ngp)

    def grad_phi(self, phi_e):
        return np.einsum("egai,ei->ega", self.B_phi, phi_e)

    def residual_u(self, u_e, phi_e, C0, k):
        """Degraded internal force per element, plus absolute flux sums.

        The flux accumulates per-quadrature-point force magnitudes, so it
        measures the internal forces actually flowing and does not cancel
        at equilibrium; it feeds the time-averaged flux norm of the
        convergence criteria.
        """
        sigma0 = np.einsum("ab,egb->ega", C0, self.strains(u_e))
        g_deg = (1.0 - self.phi_at_gp(phi_e)) ** 2 + k
        contrib = np.einsum("eg,egai,ega->egi", self.dV * g_deg, self.B_u,
                            sigma0)
        return contrib.sum(axis=1), np.abs(contrib).sum(axis=1)

    def residual_phi(self, phi_e, h_gp, gc, ell, f_gp):
        """Phase-field internal flux; f_gp scales the fracture-energy terms.

        The absolute flux sums the magnitudes of the three competing terms
        (crack driving, local dissipation, gradient) separately, so the
        norm scale survives their mutual cancellation at equilibrium.
        """
        phi_gp = self.phi_at_gp(phi_e)
        drive = np.einsum(
            "eg,gi->egi", self.dV * (-2.0 * (1.0 - phi_gp) * h_gp), self.N
        )
        local = np.einsum(
            "eg,gi->egi", self.dV * (f_gp * gc / ell * phi_gp), self.N
        )
        grad = np.einsum(
            "eg,egai,ega->egi", self.dV * (f_gp * gc * ell), self.B_phi,
            self.grad_phi(phi_e),
        )
        total = (drive + local + grad).sum(axis=1)
        flux = (np.abs(drive) + np.abs(local) + np.abs(grad)).sum(axis=1)
        return total, flux

    def stiffness_uu(self, phi_e, C0, k):
        g_deg = (1.0 - self.phi_at_gp(phi_e)) ** 2 + k
        if not hasattr(self, "BtCB"):
            self.cache_stiffness_products(C0)
        return np.einsum("eg,egij->eij", self.dV * g_deg, self.BtCB)

    def stiffness_phiphi(self, h_gp, gc, ell, f_gp):
        if not hasattr(self, "BpBp"):
            self.BpBp = np.einsum("egai,egaj->egij", self.B_phi, self.B_phi)
        out = np.einsum("eg,gij->eij", self.dV * (2.0 * h_gp + f_gp * gc / ell), self.NN)
        out += np.einsum("eg,egij->eij", self.dV * (f_gp * gc * ell), self.BpBp)
        return out

    def mass(self, rho):
        return np.einsum("eg,gij->eij", self.dV * rho, self.NuNu)


def element_residual_and_tangent(
    node_coords,
    u_e,
    phi_e,
    h_gp,
    params: MaterialParams,
    f_fatigue=1.0,
    accel_e=None,
) -> ElementContribution:
    """Residuals, tangent blocks and mass for a single element.

    ``h_gp`` holds the (already updated) history value at each Gauss point;
    ``f_fatigue`` the fatigue degradation there (scalar or per point).  When
    ``accel_e`` is given the inertial force M_e . accel is added to r_u.
    """
    coords = np.asarray(node_coords, dtype=float)[None]
    batch = ElementBatch(coords, thickness=1.0)
    u_e = np.asarray(u_e, dtype=float)[None]
    phi_e = np.asarray(phi_e, dtype=float)[None]
    h_gp = np.broadcast_to(np.asarray(h_gp, dtype=float), (1, batch.ngp))
    f_gp = np.broadcast_to(np.asarray(f_fatigue, dtype=float), (1, batch.ngp))
    if np.any(f_gp <= 0.0) or np.any(f_gp > 1.0):
        raise ValueError("fatigue degradation must lie in (0, 1]")

    C0 = params.elasticity_matrix()
    r_u, _ = batch.residual_u(u_e, phi_e, C0, params.k)
    r_phi, _ = batch.residual_phi(phi_e, h_gp, params.Gc, params.ell, f_gp)
    k_uu = batch.stiffness_uu(phi_e, C0, params.k)
    k_pp = batch.stiffness_phiphi(h_gp, params.Gc, params.ell, f_gp)
    m_e = batch.mass(params.rho)
    r_u = r_u[0]
    if accel_e is not None:
        r_u = r_u + m_e[0] @ np.asarray(accel_e, dtype=float)
    return ElementContribution(
        r_u=r_u, r_phi=r_phi[0], K_uu=k_uu[0], K_phiphi=k_pp[0], M_e=m_e[0]
    )
