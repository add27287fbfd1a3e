"""Global DOF management, sparse assembly and the linear-solve contract.

DOF numbering is node based: node ``i`` owns displacement DOFs ``2i`` and
``2i + 1`` and phase DOF ``2 n_nodes + i``, so the stacked unknown vector is
``z = [u, phi]``.  Dirichlet constraints are handled by row/column
elimination with a right-hand-side lift (constrained DOFs are moved first,
then the residual of the reduced system is driven to zero), which keeps the
reduced tangent symmetric positive definite.

The global tangent is block diagonal: the u-phi coupling blocks are dropped,
so the initial stiffness consists of the degraded elastic block and the
phase block only.  Quasi-Newton updates later re-introduce the coupling.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elements import ElementBatch
from .materials import MaterialParams
from .mesh import DISPLACEMENT_X, DISPLACEMENT_Y, PHASE, Mesh
from .splits import split_energy_batch, update_history


class ConstraintError(Exception):
    """Conflicting or invalid Dirichlet prescriptions."""


class LinearSolveError(Exception):
    """Factorization failed or the solution did not satisfy the contract."""


class DofMap:
    """Dense global DOF numbering plus the constrained-DOF table.

    Parameters
    ----------
    mesh : Mesh
    dirichlet_specs : sequence of DirichletSpec
        Duplicate prescriptions of the same DOF are allowed only when they
        agree exactly; conflicting ones raise :class:`ConstraintError`.
    """

    def __init__(self, mesh: Mesh, dirichlet_specs=()):
        self.n_nodes = mesh.n_nodes
        self.n_u = 2 * mesh.n_nodes
        self.n_phi = mesh.n_nodes
        self.n_dofs = self.n_u + self.n_phi

        table = {}
        for spec in dirichlet_specs:
            if spec.node_set not in mesh.node_sets:
                raise ConstraintError(f"unknown node set {spec.node_set!r}")
            nodes = np.asarray(mesh.node_sets[spec.node_set])
            if spec.field == DISPLACEMENT_X:
                dofs = 2 * nodes
            elif spec.field == DISPLACEMENT_Y:
                dofs = 2 * nodes + 1
            elif spec.field == PHASE:
                dofs = self.n_u + nodes
            else:
                raise ConstraintError(f"unknown field {spec.field!r}")
            for d in dofs:
                entry = (float(spec.value), bool(spec.ramped))
                if d in table and table[d] != entry:
                    raise ConstraintError(
                        f"conflicting prescriptions on DOF {int(d)}"
                    )
                table[int(d)] = entry

        self.constrained = np.array(sorted(table), dtype=np.int64)
        self.values = np.array([table[d][0] for d in self.constrained])
        self.ramped = np.array([table[d][1] for d in self.constrained], dtype=bool)

        free_mask = np.ones(self.n_dofs, dtype=bool)
        free_mask[self.constrained] = False
        self.free = np.flatnonzero(free_mask)
        self.free_mask = free_mask
        # Stacked order keeps u DOFs first, so the reduced vector partitions
        # into [u-block, phi-block].
        self.n_u_free = int(np.count_nonzero(self.free < self.n_u))
        self.n_phi_free = self.free.size - self.n_u_free
        self.free_u = self.free[: self.n_u_free]
        self.free_phi = self.free[self.n_u_free :]

    @property
    def n_unknowns(self) -> int:
        return self.free.size

    def prescribed_values(self, factor: float) -> np.ndarray:
        """Constrained-DOF values at the given load factor."""
        return np.where(self.ramped, self.values * factor, self.values)

    def apply(self, z: np.ndarray, factor: float):
        """Write prescribed values into the full solution vector in place."""
        z[self.constrained] = self.prescribed_values(factor)


def build_dof_map(mesh: Mesh, dirichlet_specs=()) -> DofMap:
    """Spec-level constructor for :class:`DofMap`."""
    return DofMap(mesh, dirichlet_specs)


@dataclass
class SolutionState:
    """Primary fields plus per-integration-point internal variables."""

    z: np.ndarray                  # stacked [u (2N), phi (N)]
    h: np.ndarray                  # history field, (nel, ngp)
    alpha: np.ndarray              # fatigue variable at last commit
    alpha_bar: np.ndarray          # cumulative fatigue variable
    v: Optional[np.ndarray] = None # nodal velocity (dynamics)
    t: float = 0.0

    @classmethod
    def zero(cls, mesh: Mesh, ngp: int, dynamic: bool = False):
        n = mesh.n_nodes
        shape = (mesh.n_elements, ngp)
        return cls(
            z=np.zeros(3 * n),
            h=np.zeros(shape),
            alpha=np.zeros(shape),
            alpha_bar=np.zeros(shape),
            v=np.zeros(2 * n) if dynamic else None,
        )

    @property
    def u(self) -> np.ndarray:
        return self.z[: 2 * (self.z.size // 3)]

    @property
    def phi(self) -> np.ndarray:
        return self.z[2 * (self.z.size // 3) :]

    def copy(self):
        return SolutionState(
            z=self.z.copy(),
            h=self.h.copy(),
            alpha=self.alpha.copy(),
            alpha_bar=self.alpha_bar.copy(),
            v=None if self.v is None else self.v.copy(),
            t=self.t,
        )


class Assembler:
    """Vectorized global assembly for one mesh/material pair.

    Owns the precomputed element batch and the scatter index arrays; all
    residual/tangent evaluations are pure functions of the passed state.
    """

    def __init__(self, mesh: Mesh, params: MaterialParams, split: str = "vol-dev"):
        self.mesh = mesh
        self.params = params
        self.split = split
        self.C0 = params.elasticity_matrix()

        conn = mesh.elements
        coords = mesh.nodes[conn]
        self.batch = ElementBatch(coords, thickness=mesh.thickness)
        self.batch.cache_stiffness_products(self.C0)
        self.ngp = self.batch.ngp

        m = conn.shape[1]
        edof_u = np.empty((conn.shape[0], 2 * m), dtype=np.int64)
        edof_u[:, 0::2] = 2 * conn
        edof_u[:, 1::2] = 2 * conn + 1
        self.edof_u = edof_u
        self.edof_phi = conn.copy()

        self._rows_u = np.repeat(edof_u, 2 * m, axis=1).ravel()
        self._cols_u = np.tile(edof_u, (1, 2 * m)).ravel()
        self._rows_p = np.repeat(conn, m, axis=1).ravel()
        self._cols_p = np.tile(conn, (1, m)).ravel()

        self.n_u = 2 * mesh.n_nodes
        self.n_phi = mesh.n_nodes
        self._mass = None

    # -- gathering -----------------------------------------------------

    def gather_u(self, u):
        return u[self.edof_u]

    def gather_phi(self, phi):
        return phi[self.edof_phi]

    def strains(self, u):
        return self.batch.strains(self.gather_u(u))

    def psi_plus(self, u):
        """Active part of the undamaged energy at every Gauss point."""
        plus, _, _ = split_energy_batch(self.strains(u), self.params, self.split)
        return plus

    def psi_parts(self, u):
        return split_energy_batch(self.strains(u), self.params, self.split)

    def updated_history(self, h_committed, u):
        return update_history(h_committed, self.psi_plus(u))

    def phi_at_gp(self, phi):
        return self.batch.phi_at_gp(self.gather_phi(phi))

    # -- residual ------------------------------------------------------

    def residual(self, u, phi, h, f_gp=1.0, f_ext=None, inertial=None):
        """Out-of-balance force and absolute flux accumulations.

        Parameters
        ----------
        f_gp : float or (nel, ngp) ndarray
            Fatigue degradation of the fracture energy.
        f_ext : (n_u,) ndarray, optional
            External consistent load (tractions), subtracted from r_u.
        inertial : (n_u,) ndarray, optional
            Assembled inertial force M . a, added to r_u.

        Returns
        -------
        r : (n_dofs,) ndarray
        flux_u, flux_phi : ndarrays of per-DOF absolute flux sums
        """
        u_e = self.gather_u(u)
        phi_e = self.gather_phi(phi)
        f_arr = np.broadcast_to(
            np.asarray(f_gp, dtype=float), (self.mesh.n_elements, self.ngp)
        )

        r_u_e, abs_u_e = self.batch.residual_u(u_e, phi_e, self.C0, self.params.k)
        r_p_e, abs_p_e = self.batch.residual_phi(
            phi_e, h, self.params.Gc, self.params.ell, f_arr
        )

        r_u = np.bincount(self.edof_u.ravel(), weights=r_u_e.ravel(),
                          minlength=self.n_u)
        flux_u = np.bincount(self.edof_u.ravel(), weights=abs_u_e.ravel(),
                             minlength=self.n_u)
        r_p = np.bincount(self.edof_phi.ravel(), weights=r_p_e.ravel(),
                          minlength=self.n_phi)
        flux_p = np.bincount(self.edof_phi.ravel(), weights=abs_p_e.ravel(),
                             minlength=self.n_phi)

        if inertial is not None:
            r_u += inertial
            flux_u += np.abs(inertial)
        if f_ext is not None:
            r_u -= f_ext
            flux_u += np.abs(f_ext)
        return np.concatenate([r_u, r_p]), flux_u, flux_p

    # -- tangents ------------------------------------------------------

    def tangent_uu(self, phi) -> sp.csr_matrix:
        k_e = self.batch.stiffness_uu(self.gather_phi(phi), self.C0, self.params.k)
        return sp.coo_matrix(
            (k_e.ravel(), (self._rows_u, self._cols_u)),
            shape=(self.n_u, self.n_u),
        ).tocsr()

    def tangent_phiphi(self, h, f_gp=1.0) -> sp.csr_matrix:
        f_arr = np.broadcast_to(
            np.asarray(f_gp, dtype=float), (self.mesh.n_elements, self.ngp)
        )
        k_e = self.batch.stiffness_phiphi(h, self.params.Gc, self.params.ell, f_arr)
        return sp.coo_matrix(
            (k_e.ravel(), (self._rows_p, self._cols_p)),
            shape=(self.n_phi, self.n_phi),
        ).tocsr()

    def mass(self) -> sp.csr_matrix:
        if self._mass is None:
            m_e = self.batch.mass(self.params.rho)
            self._mass = sp.coo_matrix(
                (m_e.ravel(), (self._rows_u, self._cols_u)),
                shape=(self.n_u, self.n_u),
            ).tocsr()
        return self._mass

    # -- energies (diagnostics / dynamics audit) ------------------------

    def elastic_energy(self, u, phi) -> float:
        """Stored energy consistent with the hybrid internal force."""
        _, _, psi0 = self.psi_parts(u)
        g = (1.0 - self.phi_at_gp(phi)) ** 2 + self.params.k
        return float(np.sum(self.batch.dV * g * psi0))

    def fracture_energy(self, phi, f_gp=1.0) -> float:
        phi_e = self.gather_phi(phi)
        phi_gp = self.batch.phi_at_gp(phi_e)
        grad = self.batch.grad_phi(phi_e)
        grad2 = np.einsum("ega,ega->eg", grad, grad)
        gc, ell = self.params.Gc, self.params.ell
        dens = f_gp * gc * (phi_gp**2 / (2.0 * ell) + 0.5 * ell * grad2)
        return float(np.sum(self.batch.dV * dens))

    def kinetic_energy(self, v) -> float:
        return 0.5 * float(v @ (self.mass() @ v))


@dataclass
class SparseSystem:
    """Reduced (constraint-eliminated) block-diagonal system K dz = R."""

    K_uu: sp.csr_matrix
    K_phiphi: sp.csr_matrix
    r_u: np.ndarray
    r_phi: np.ndarray
    free_u: np.ndarray = field(repr=False, default=None)
    free_phi: np.ndarray = field(repr=False, default=None)

    def combined(self):
        """Stacked block-diagonal matrix and residual."""
        K = sp.block_diag((self.K_uu, self.K_phiphi), format="csr")
        return K, np.concatenate([self.r_u, self.r_phi])


def assemble(
    assembler: Assembler,
    dof_map: DofMap,
    state: SolutionState,
    f_gp=1.0,
    f_ext=None,
    inertial=None,
    dt: Optional[float] = None,
) -> SparseSystem:
    """Assemble the reduced residual and block tangents at the given state.

    ``state.h`` must already hold the updated history field.  For dynamics,
    pass the assembled inertial force and the time step; the u-block then
    becomes K_uu + M / dt^2.
    """
    r, _, _ = assembler.residual(
        state.u, state.phi, state.h, f_gp=f_gp, f_ext=f_ext, inertial=inertial
    )
    k_uu = assembler.tangent_uu(state.phi)
    if dt is not None:
        k_uu = k_uu + assembler.mass() / dt**2
    k_pp = assembler.tangent_phiphi(state.h, f_gp=f_gp)

    fu = dof_map.free_u
    fp = dof_map.free_phi - assembler.n_u
    return SparseSystem(
        K_uu=k_uu[fu][:, fu],
        K_phiphi=k_pp[fp][:, fp],
        r_u=r[dof_map.free_u],
        r_phi=r[dof_map.free_phi],
        free_u=dof_map.free_u,
        free_phi=dof_map.free_phi,
    )


def factorize(K: sp.spmatrix, context: str = ""):
    """SPD-oriented sparse LU factorization with failure diagnostics."""
    try:
        lu = spla.splu(K.tocsc())
    except RuntimeError as exc:
        raise LinearSolveError(
            f"factorization failed{' in ' + context if context else ''}: {exc}"
        ) from exc
    return lu


def solve_linear(system: SparseSystem, context: str = "") -> np.ndarray:
    """Solve K dz = R; the result satisfies |K dz - R| <= 1e-10 |R|."""
    K, r = system.combined()
    if r.size == 0:
        return np.zeros(0)
    lu = factorize(K, context)
    dz = lu.solve(r)
    if not np.all(np.isfinite(dz)):
        raise LinearSolveError(
            f"singular system{' in ' + context if context else ''}"
        )
    res = np.linalg.norm(K @ dz - r)
    if res > 1e-10 * max(np.linalg.norm(r), 1e-300):
        raise LinearSolveError(
            f"linear solve residual {res:g} exceeds contract"
            f"{' in ' + context if context else ''}"
        )
    return dz
