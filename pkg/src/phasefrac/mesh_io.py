"""Line-oriented ASCII mesh exchange format.

Layout (all tokens whitespace-separated, floats written with %.17g so the
round trip is exact)::

    phasefrac-mesh 1
    thickness <t>
    nodes <n_nodes>
    <x> <y>                      one line per node
    elements <n_elements> <order>
    <i1> <i2> <i3> <i4> [... <i8>]   one line per element, zero-based
    node_sets <n_sets>
    <name> <count> <i1> ... <i_count>
    element_sets <n_sets>
    <name> <count> <i1> ... <i_count>

Set names must not contain whitespace.
"""

import numpy as np

from .mesh import Mesh, MeshError

_MAGIC = "phasefrac-mesh"
_VERSION = 1


def write_mesh(mesh: Mesh, path):
    with open(path, "w") as f:
        f.write(f"{_MAGIC} {_VERSION}\n")
        f.write("thickness %.17g\n" % mesh.thickness)
        f.write(f"nodes {mesh.n_nodes}\n")
        for x, y in mesh.nodes:
            f.write("%.17g %.17g\n" % (x, y))
        f.write(f"elements {mesh.n_elements} {mesh.element_order}\n")
        for conn in mesh.elements:
            f.write(" ".join(str(int(i)) for i in conn) + "\n")
        for label, sets in (
            ("node_sets", mesh.node_sets),
            ("element_sets", mesh.element_sets),
        ):
            f.write(f"{label} {len(sets)}\n")
            for name, idx in sets.items():
                if any(ch.isspace() for ch in name):
                    raise MeshError(f"set name {name!r} contains whitespace")
                idx = np.asarray(idx, dtype=np.int64)
                f.write(
                    f"{name} {idx.size}"
                    + ("" if idx.size == 0 else " " + " ".join(map(str, idx)))
                    + "\n"
                )


def read_mesh(path) -> Mesh:
    with open(path) as f:
        tokens = f.read().split()
    pos = 0

    def take(n=1):
        nonlocal pos
        if pos + n > len(tokens):
            raise MeshError(f"{path}: truncated mesh file")
        out = tokens[pos : pos + n]
        pos += n
        return out

    magic, version = take(2)
    if magic != _MAGIC or int(version) != _VERSION:
        raise MeshError(f"{path}: not a {_MAGIC} v{_VERSION} file")
    key, t = take(2)
    if key != "thickness":
        raise MeshError(f"{path}: expected 'thickness', got {key!r}")
    thickness = float(t)
    key, n = take(2)
    if key != "nodes":
        raise MeshError(f"{path}: expected 'nodes', got {key!r}")
    n = int(n)
    nodes = np.array([float(v) for v in take(2 * n)]).reshape(n, 2)
    key, m, order = take(3)
    if key != "elements":
        raise MeshError(f"{path}: expected 'elements', got {key!r}")
    m, order = int(m), int(order)
    width = 4 if order == 1 else 8
    elements = np.array([int(v) for v in take(width * m)], dtype=np.int64)
    elements = elements.reshape(m, width)

    def read_sets(label):
        key, k = take(2)
        if key != label:
            raise MeshError(f"{path}: expected {label!r}, got {key!r}")
        sets = {}
        for _ in range(int(k)):
            name, count = take(2)
            sets[name] = np.array([int(v) for v in take(int(count))], dtype=np.int64)
        return sets

    node_sets = read_sets("node_sets")
    element_sets = read_sets("element_sets")
    if pos != len(tokens):
        raise MeshError(f"{path}: trailing data after element_sets")
    return Mesh(
        nodes=nodes,
        elements=elements,
        node_sets=node_sets,
        element_sets=element_sets,
        thickness=thickness,
    )
