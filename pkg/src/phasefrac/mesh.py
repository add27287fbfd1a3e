"""Structured 2-D quadrilateral meshes with notches and named boundary sets.

Meshes are tensor-product grids over a rectangular domain, optionally graded:
a rectangular refinement band (typically along the anticipated crack path)
is meshed with a finer target element size while the rest of the domain uses
the coarse one.  Grid lines are inserted at band edges and notch coordinates
so that cracks always land on mesh lines.

Sharp cracks are introduced either by node duplication (topological
disconnection of the two crack faces) or by prescribing the phase field to 1
along the segment; see :class:`NotchSpec`.

Node ordering in each element is counter-clockwise; 8-node (serendipity)
elements list the four corners first, then the four mid-side nodes in edge
order bottom, right, top, left.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class MeshError(Exception):
    """Invalid mesh construction or query."""


DISPLACEMENT_X = "displacement-x"
DISPLACEMENT_Y = "displacement-y"
PHASE = "phase"
_FIELDS = (DISPLACEMENT_X, DISPLACEMENT_Y, PHASE)


@dataclass
class NotchSpec:
    """A straight initial crack segment.

    ``representation`` selects how the crack enters the model:
    ``"duplicated-nodes"`` disconnects the mesh topologically along the
    segment (which must then be axis-aligned and lie on grid lines), while
    ``"phase-field-prescribed"`` leaves the mesh intact and later fixes
    phi = 1 on the nodes along the segment.
    """

    start: tuple
    end: tuple
    representation: str = "duplicated-nodes"

    def __post_init__(self):
        if self.representation not in ("duplicated-nodes", "phase-field-prescribed"):
            raise MeshError(f"unknown notch representation {self.representation!r}")
        self.start = (float(self.start[0]), float(self.start[1]))
        self.end = (float(self.end[0]), float(self.end[1]))


@dataclass
class DirichletSpec:
    """Prescription of one solution field on a named node set.

    ``value`` is the target at load factor 1; if ``ramped`` the applied value
    is ``value * factor`` with the driver's current load factor, otherwise it
    is held fixed.  Phase prescriptions model initial cracks and therefore
    only use the fixed value 1.
    """

    field: str
    node_set: str
    value: float
    ramped: bool = True

    def __post_init__(self):
        if self.field not in _FIELDS:
            raise MeshError(f"unknown field {self.field!r}, expected one of {_FIELDS}")
        if self.field == PHASE:
            if self.value != 1.0 or self.ramped:
                raise MeshError("phase prescriptions must be the fixed value 1")


@dataclass
class Mesh:
    """Quadrilateral mesh with named node/element sets.

    Attributes
    ----------
    nodes : (n_nodes, 2) float ndarray
        Coordinates in mm.
    elements : (n_elements, 4 or 8) int ndarray
        Counter-clockwise connectivity.
    node_sets, element_sets : dict
        Name -> index array.
    thickness : float
        Out-of-plane thickness (mm).
    """

    nodes: np.ndarray
    elements: np.ndarray
    node_sets: dict = field(default_factory=dict)
    element_sets: dict = field(default_factory=dict)
    thickness: float = 1.0

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.validate()

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def element_order(self) -> int:
        return 1 if self.elements.shape[1] == 4 else 2

    def extent(self) -> float:
        """Largest domain dimension, used to scale geometric tolerances."""
        span = self.nodes.max(axis=0) - self.nodes.min(axis=0)
        return float(span.max())

    def validate(self):
        """Check connectivity bounds, orientation and set consistency."""
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        if self.elements.ndim != 2 or self.elements.shape[1] not in (4, 8):
            raise MeshError("elements must be an (m, 4) or (m, 8) array")
        if self.elements.size and (
            self.elements.min() < 0 or self.elements.max() >= self.n_nodes
        ):
            raise MeshError("element connectivity references missing nodes")
        # Positive corner cross products imply detJ > 0 at every quadrature
        # point for straight-edged quads.
        c = self.nodes[self.elements[:, :4]]
        for i in range(4):
            a = c[:, (i + 1) % 4] - c[:, i]
            b = c[:, (i + 3) % 4] - c[:, i]
            cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            if np.any(cross <= 0.0):
                bad = int(np.argmax(cross <= 0.0))
                raise MeshError(f"element {bad} is not counter-clockwise convex")
        for name, idx in self.node_sets.items():
            idx = np.asarray(idx)
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_nodes):
                raise MeshError(f"node set {name!r} references missing nodes")
        for name, idx in self.element_sets.items():
            idx = np.asarray(idx)
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_elements):
                raise MeshError(f"element set {name!r} references missing elements")


def _subdivide(a: float, b: float, h: float) -> int:
    """Number of uniform cells for [a, b] at target size h (h rounds down only)."""
    ratio = (b - a) / h
    n = int(round(ratio))
    if abs(ratio - n) > 1e-6 * max(ratio, 1.0):
        n = int(np.ceil(ratio))
    return max(n, 1)


def _axis_ticks(length, he, mandatory, band_interval, he_fine):
    """1-D grid coordinates: coarse he outside the band, he_fine inside.

    ``mandatory`` coordinates (band edges, notch endpoints/lines) always
    become grid points.
    """
    brk = {0.0, float(length)}
    for m in mandatory:
        if -1e-12 <= m <= length + 1e-12:
            brk.add(min(max(float(m), 0.0), float(length)))
    if band_interval is not None:
        lo, hi = band_interval
        brk.add(min(max(float(lo), 0.0), float(length)))
        brk.add(min(max(float(hi), 0.0), float(length)))
    brk = sorted(brk)
    ticks = [brk[0]]
    for a, b in zip(brk[:-1], brk[1:]):
        if b - a < 1e-12 * max(length, 1.0):
            continue
        h = he
        if band_interval is not None:
            lo, hi = band_interval
            if a >= lo - 1e-12 and b <= hi + 1e-12:
                h = he_fine
        n = _subdivide(a, b, h)
        ticks.extend(a + (b - a) * (k + 1) / n for k in range(n))
    return np.asarray(ticks)


def _corner_id(i, j, nx):
    return j * (nx + 1) + i


def generate_structured_quad_mesh(
    width: float,
    height: float,
    he: float,
    notch: Optional[NotchSpec] = None,
    element_order: int = 1,
    refine_band: Optional[tuple] = None,
    thickness: float = 1.0,
) -> Mesh:
    """Build a structured quad mesh of [0, width] x [0, height].

    Parameters
    ----------
    width, height : float
        Domain dimensions (mm).
    he : float
        Target element size (mm) outside any refinement band.
    notch : NotchSpec, optional
        Initial crack.  Duplicated-node notches must be axis-aligned.
    element_order : int
        1 for 4-node bilinear, 2 for 8-node serendipity elements.
    refine_band : ((x0, y0, x1, y1), he_fine), optional
        Rectangle meshed at the finer size ``he_fine``.
    thickness : float
        Out-of-plane thickness (mm).

    Returns
    -------
    Mesh
        With boundary node sets "bottom", "top", "left", "right" populated
        (recomputed after any node duplication, so both crack-mouth copies
        appear in their boundary set).
    """
    if width <= 0.0 or height <= 0.0 or he <= 0.0:
        raise MeshError("width, height and he must be positive")
    if he >= min(width, height):
        raise MeshError(f"he={he} must be smaller than min(width, height)")
    if element_order not in (1, 2):
        raise MeshError(f"element_order must be 1 or 2, got {element_order}")

    band_x = band_y = None
    he_fine = he
    if refine_band is not None:
        (x0, y0, x1, y1), he_fine = refine_band
        if he_fine <= 0.0:
            raise MeshError("refined element size must be positive")
        band_x, band_y = (min(x0, x1), max(x0, x1)), (min(y0, y1), max(y0, y1))

    mand_x, mand_y = [], []
    if notch is not None:
        for p in (notch.start, notch.end):
            if not (-1e-12 <= p[0] <= width + 1e-12 and -1e-12 <= p[1] <= height + 1e-12):
                raise MeshError(f"notch point {p} lies outside the domain")
            mand_x.append(p[0])
            mand_y.append(p[1])
        if notch.representation == "duplicated-nodes":
            dx = abs(notch.end[0] - notch.start[0])
            dy = abs(notch.end[1] - notch.start[1])
            if dx > 1e-12 and dy > 1e-12:
                raise MeshError("duplicated-node notches must be axis-aligned")

    xt = _axis_ticks(width, he, mand_x, band_x, he_fine)
    yt = _axis_ticks(height, he, mand_y, band_y, he_fine)
    nx, ny = len(xt) - 1, len(yt) - 1

    xx, yy = np.meshgrid(xt, yt)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii, jj = ii.ravel(), jj.ravel()
    corners = np.column_stack(
        [
            _corner_id(ii, jj, nx),
            _corner_id(ii + 1, jj, nx),
            _corner_id(ii + 1, jj + 1, nx),
            _corner_id(ii, jj + 1, nx),
        ]
    )

    if element_order == 1:
        elements = corners
    else:
        n_corner = nodes.shape[0]
        xm = 0.5 * (xt[:-1] + xt[1:])
        ym = 0.5 * (yt[:-1] + yt[1:])
        # Horizontal-edge midnodes: (nx, ny+1) grid; vertical: (nx+1, ny).
        hx, hy = np.meshgrid(xm, yt)
        vx, vy = np.meshgrid(xt, ym)
        h_nodes = np.column_stack([hx.ravel(), hy.ravel()])
        v_nodes = np.column_stack([vx.ravel(), vy.ravel()])
        nodes = np.vstack([nodes, h_nodes, v_nodes])
        n_h = n_corner

        def h_id(i, j):
            return n_h + j * nx + i

        def v_id(i, j):
            return n_h + (ny + 1) * nx + j * (nx + 1) + i

        mids = np.column_stack(
            [h_id(ii, jj), v_id(ii + 1, jj), h_id(ii, jj + 1), v_id(ii, jj)]
        )
        elements = np.hstack([corners, mids])

    if notch is not None and notch.representation == "duplicated-nodes":
        nodes, elements = _duplicate_notch_nodes(
            nodes, elements, notch, width, height
        )

    mesh = Mesh(nodes=nodes, elements=elements, thickness=thickness)
    tol = 1e-9 * max(width, height)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    mesh.node_sets["bottom"] = np.flatnonzero(np.abs(y) <= tol)
    mesh.node_sets["top"] = np.flatnonzero(np.abs(y - height) <= tol)
    mesh.node_sets["left"] = np.flatnonzero(np.abs(x) <= tol)
    mesh.node_sets["right"] = np.flatnonzero(np.abs(x - width) <= tol)
    return mesh


def _duplicate_notch_nodes(nodes, elements, notch, width, height):
    """Split the mesh along an axis-aligned notch segment.

    Nodes strictly inside the segment are duplicated; a segment endpoint is
    duplicated as well when it lies on the domain boundary (open crack
    mouth) and kept shared otherwise (crack tip).  Elements on the positive
    side of the crack line are rewired to the duplicates.
    """
    tol = 1e-9 * max(width, height)
    (xa, ya), (xb, yb) = notch.start, notch.end
    horizontal = abs(yb - ya) <= tol
    if horizontal:
        line_c, lo, hi = ya, min(xa, xb), max(xa, xb)
        along, across = nodes[:, 0], nodes[:, 1]
    else:
        line_c, lo, hi = xa, min(ya, yb), max(ya, yb)
        along, across = nodes[:, 1], nodes[:, 0]

    on_line = np.abs(across - line_c) <= tol
    in_span = (along >= lo - tol) & (along <= hi + tol)
    candidates = on_line & in_span

    domain_hi = width if horizontal else height
    for end in (lo, hi):
        on_boundary = end <= tol or end >= domain_hi - tol
        if not on_boundary:
            candidates &= ~(np.abs(along - end) <= tol)

    dup = np.flatnonzero(candidates)
    if dup.size == 0:
        raise MeshError("notch segment does not touch any mesh nodes")

    n_old = nodes.shape[0]
    nodes = np.vstack([nodes, nodes[dup]])
    remap = np.arange(nodes.shape[0])
    remap[dup] = n_old + np.arange(dup.size)

    corner_centroid = nodes[elements[:, :4], 1 if horizontal else 0].mean(axis=1)
    upper = corner_centroid > line_c
    elements = elements.copy()
    elements[upper] = remap[elements[upper]]
    return nodes, elements


def resolve_boundary_set(
    mesh: Mesh,
    x: Optional[float] = None,
    y: Optional[float] = None,
    where: Optional[Callable] = None,
) -> np.ndarray:
    """Nodes matching coordinate constraints within 1e-9 * domain size.

    ``x`` and/or ``y`` select nodes on those coordinate lines; ``where`` is
    an optional extra vectorized predicate ``where(x_arr, y_arr) -> bool``.
    An empty result raises, since it means a misconfigured boundary
    condition.
    """
    tol = 1e-9 * mesh.extent()
    mask = np.ones(mesh.n_nodes, dtype=bool)
    if x is not None:
        mask &= np.abs(mesh.nodes[:, 0] - x) <= tol
    if y is not None:
        mask &= np.abs(mesh.nodes[:, 1] - y) <= tol
    if where is not None:
        mask &= np.asarray(where(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise MeshError("boundary predicate matched no nodes")
    return idx


def _segment_distance(points, a, b):
    """Distance from each point to segment a-b (handles zero length)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    len2 = float(d @ d)
    if len2 == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ d / len2, 0.0, 1.0)
    proj = a + t[:, None] * d
    return np.linalg.norm(points - proj, axis=1)


def prescribe_initial_crack(
    mesh: Mesh, notch: NotchSpec, tol: Optional[float] = None,
    set_name: str = "initial-crack",
) -> DirichletSpec:
    """Fix phi = 1 on all nodes within half an element size of the notch.

    Registers the matched nodes as ``set_name`` on the mesh and returns the
    corresponding phase Dirichlet spec.  ``tol`` defaults to half the
    smallest element edge length.
    """
    if notch.representation != "phase-field-prescribed":
        raise MeshError("prescribe_initial_crack needs a phase-field-prescribed notch")
    lo = mesh.nodes.min(axis=0) - 1e-9 * mesh.extent()
    hi = mesh.nodes.max(axis=0) + 1e-9 * mesh.extent()
    for p in (notch.start, notch.end):
        if not (lo[0] <= p[0] <= hi[0] and lo[1] <= p[1] <= hi[1]):
            raise MeshError(f"notch point {p} lies outside the domain")
    if tol is None:
        c = mesh.nodes[mesh.elements[:, :4]]
        edges = np.linalg.norm(np.roll(c, -1, axis=1) - c, axis=2)
        tol = 0.5 * float(edges.min())
    dist = _segment_distance(mesh.nodes, notch.start, notch.end)
    idx = np.flatnonzero(dist <= tol)
    if idx.size == 0:
        raise MeshError("no nodes within tolerance of the crack segment")
    mesh.node_sets[set_name] = idx
    return DirichletSpec(field=PHASE, node_set=set_name, value=1.0, ramped=False)


def boundary_edges(mesh: Mesh, node_set) -> list:
    """Element edges whose nodes all belong to ``node_set``.

    Returns a list of node-index tuples, one per edge: (n1, n2) for linear
    elements and (n1, n2, n_mid) for quadratic ones.  Used for consistent
    traction integration.
    """
    if isinstance(node_set, str):
        node_set = mesh.node_sets[node_set]
    members = np.zeros(mesh.n_nodes, dtype=bool)
    members[np.asarray(node_set)] = True
    edges = []
    order = mesh.element_order
    for conn in mesh.elements:
        for k in range(4):
            n1, n2 = conn[k], conn[(k + 1) % 4]
            if order == 1:
                if members[n1] and members[n2]:
                    edges.append((int(n1), int(n2)))
            else:
                nm = conn[4 + k]
                if members[n1] and members[n2] and members[nm]:
                    edges.append((int(n1), int(n2), int(nm)))
    return edges
