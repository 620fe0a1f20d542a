"""Structured triangulations of the rectangular domain (-1/2, 1/2) x (-1, 1).

The grid is split into right triangles along a single diagonal direction.
Non-obtuse triangles keep the scalar diffusion operator an M-matrix, which
the damage solver relies on for its discrete maximum principle.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

TAG_DIRICHLET_TOP = "DirichletTop"
TAG_DIRICHLET_BOTTOM = "DirichletBottom"
TAG_NEUMANN = "Neumann"

_VALID_TAGS = (TAG_DIRICHLET_TOP, TAG_DIRICHLET_BOTTOM, TAG_NEUMANN)

_HEADER = "trimesh 2d v1"
_COORD_TOL = 1e-12


class MeshFormatError(ValueError):
    """Raised when a mesh stream is malformed; carries the offending line."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation with tagged boundary edges.

    Instances are immutable and compared by identity, so they can be shared
    freely and used as cache keys for derived geometry.

    Attributes
    ----------
    node_coords : (n_nodes, 2) float array
    triangles : (n_triangles, 3) int array
        Counterclockwise node triples (positive signed area).
    boundary_edges : (n_edges, 2) int array
    boundary_tags : list of str, one per boundary edge
    element_areas : (n_triangles,) float array, cached positive areas
    """

    node_coords: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple[str, ...]
    element_areas: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.element_areas is None:
            object.__setattr__(
                self, "element_areas", signed_areas(self.node_coords, self.triangles)
            )

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def dirichlet_nodes(self) -> np.ndarray:
        """Sorted indices of nodes on a Dirichlet-tagged edge.

        Corner nodes shared with Neumann edges are included: the Dirichlet
        constraint wins at shared nodes.
        """
        mask = np.array([t != TAG_NEUMANN for t in self.boundary_tags])
        if not mask.any():
            return np.empty(0, dtype=np.int64)
        return np.unique(self.boundary_edges[mask].ravel())


def signed_areas(coords: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Signed area of each triangle (positive for counterclockwise)."""
    p0 = coords[triangles[:, 0]]
    p1 = coords[triangles[:, 1]]
    p2 = coords[triangles[:, 2]]
    return 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )


def generate_rect_mesh(nx: int, ny: int) -> TriMesh:
    """Structured triangulation of (-1/2, 1/2) x (-1, 1).

    Each of the nx*ny grid cells is cut into two right triangles along the
    same diagonal. Edges on x2 = +1 / x2 = -1 are tagged DirichletTop /
    DirichletBottom; the vertical sides are Neumann.

    Parameters
    ----------
    nx, ny : int
        Number of cells in x1 / x2. Must be >= 1.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"mesh resolution must be positive, got nx={nx}, ny={ny}")

    xs = -0.5 + np.arange(nx + 1) / nx
    ys = -1.0 + 2.0 * np.arange(ny + 1) / ny
    xg, yg = np.meshgrid(xs, ys)  # row-major: node (i, j) -> j * (nx + 1) + i
    coords = np.column_stack([xg.ravel(), yg.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    k = 0
    for j in range(ny):
        for i in range(nx):
            a = nid(i, j)
            b = nid(i + 1, j)
            c = nid(i + 1, j + 1)
            d = nid(i, j + 1)
            tris[k] = (a, b, c)  # right angle at b
            tris[k + 1] = (a, c, d)  # right angle at d
            k += 2

    edges = []
    tags = []
    for i in range(nx):
        edges.append((nid(i, 0), nid(i + 1, 0)))
        tags.append(TAG_DIRICHLET_BOTTOM)
    for i in range(nx):
        edges.append((nid(i, ny), nid(i + 1, ny)))
        tags.append(TAG_DIRICHLET_TOP)
    for j in range(ny):
        edges.append((nid(0, j), nid(0, j + 1)))
        tags.append(TAG_NEUMANN)
    for j in range(ny):
        edges.append((nid(nx, j), nid(nx, j + 1)))
        tags.append(TAG_NEUMANN)

    return TriMesh(
        node_coords=coords,
        triangles=tris,
        boundary_edges=np.array(edges, dtype=np.int64),
        boundary_tags=tuple(tags),
    )


def validate_mesh(mesh: TriMesh) -> None:
    """Check structural invariants; raises ValueError on the first violation."""
    areas = signed_areas(mesh.node_coords, mesh.triangles)
    if not (areas > 0).all():
        raise ValueError("triangle with nonpositive signed area")

    # Edge incidence: boundary edges belong to exactly one triangle,
    # interior edges to exactly two.
    counts: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(min(a, b)), int(max(a, b)))
            counts[key] = counts.get(key, 0) + 1
    boundary_keys = {
        (int(min(a, b)), int(max(a, b))) for a, b in mesh.boundary_edges
    }
    for key, cnt in counts.items():
        expected = 1 if key in boundary_keys else 2
        if cnt != expected:
            raise ValueError(f"edge {key} belongs to {cnt} triangles, expected {expected}")
    for key in boundary_keys:
        if key not in counts:
            raise ValueError(f"boundary edge {key} not part of any triangle")

    # Tag assignment is determined by the endpoint coordinates.
    x2 = mesh.node_coords[:, 1]
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        on_top = abs(x2[a] - 1.0) < _COORD_TOL and abs(x2[b] - 1.0) < _COORD_TOL
        on_bottom = abs(x2[a] + 1.0) < _COORD_TOL and abs(x2[b] + 1.0) < _COORD_TOL
        expected = (
            TAG_DIRICHLET_TOP if on_top else TAG_DIRICHLET_BOTTOM if on_bottom else TAG_NEUMANN
        )
        if tag != expected:
            raise ValueError(f"edge ({a}, {b}) tagged {tag}, expected {expected}")

    if abs(areas.sum() - 2.0) > 1e-10:
        raise ValueError(f"total area {areas.sum()!r} differs from domain area 2")


def write_mesh(mesh: TriMesh, sink) -> None:
    """Write a mesh in the plain-text format (17 significant digit floats).

    Accepts a binary or text stream.
    """
    out = [_HEADER, f"nodes {mesh.n_nodes}"]
    out.extend(f"{x:.17g} {y:.17g}" for x, y in mesh.node_coords)
    out.append(f"triangles {mesh.n_triangles}")
    out.extend(f"{i} {j} {k}" for i, j, k in mesh.triangles)
    out.append(f"boundary {len(mesh.boundary_edges)}")
    out.extend(
        f"{i} {j} {tag}"
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags)
    )
    text = "\n".join(out) + "\n"
    if isinstance(sink, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(sink, "mode", ""):
        sink.write(text.encode("ascii"))
    else:
        sink.write(text)


def read_mesh(source) -> TriMesh:
    """Parse a mesh from the plain-text format, validating as it goes.

    Raises MeshFormatError naming the offending line for malformed input.
    """
    raw = source.read()
    if isinstance(raw, bytes):
        raw = raw.decode("ascii")
    lines = raw.splitlines()
    pos = 0

    def next_line() -> tuple[str, int]:
        nonlocal pos
        while pos < len(lines):
            ln = lines[pos].strip()
            pos += 1
            if ln:
                return ln, pos
        raise MeshFormatError("unexpected end of stream", pos)

    if not lines or not raw.strip():
        raise MeshFormatError("missing header")
    header, n_header = next_line()
    if header != _HEADER:
        raise MeshFormatError(f"missing header (expected {_HEADER!r})", n_header)

    def section(name: str) -> int:
        ln, n = next_line()
        parts = ln.split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshFormatError(f"expected '{name} <count>'", n)
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshFormatError(f"bad count in '{name}' section", n) from None
        if count < 0:
            raise MeshFormatError(f"negative count in '{name}' section", n)
        return count

    n_nodes = section("nodes")
    coords = np.empty((n_nodes, 2))
    for r in range(n_nodes):
        ln, n = next_line()
        parts = ln.split()
        if len(parts) != 2:
            raise MeshFormatError("expected two coordinates", n)
        try:
            coords[r] = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise MeshFormatError("bad coordinate value", n) from None

    n_tris = section("triangles")
    tris = np.empty((n_tris, 3), dtype=np.int64)
    for r in range(n_tris):
        ln, n = next_line()
        parts = ln.split()
        if len(parts) != 3:
            raise MeshFormatError("expected three node indices", n)
        try:
            idx = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError("bad node index", n) from None
        if any(i < 0 or i >= n_nodes for i in idx):
            raise MeshFormatError("node index out of range", n)
        tris[r] = idx
        a, b, c = coords[idx[0]], coords[idx[1]], coords[idx[2]]
        area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
        if area <= 0:
            raise MeshFormatError("negative-area triangle", n)

    n_edges = section("boundary")
    edges = np.empty((n_edges, 2), dtype=np.int64)
    tags = []
    for r in range(n_edges):
        ln, n = next_line()
        parts = ln.split()
        if len(parts) != 3:
            raise MeshFormatError("expected 'i j TAG'", n)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise MeshFormatError("bad node index", n) from None
        if i < 0 or i >= n_nodes or j < 0 or j >= n_nodes:
            raise MeshFormatError("node index out of range", n)
        if parts[2] not in _VALID_TAGS:
            raise MeshFormatError(f"unknown boundary tag {parts[2]!r}", n)
        edges[r] = (i, j)
        tags.append(parts[2])

    return TriMesh(
        node_coords=coords,
        triangles=tris,
        boundary_edges=edges,
        boundary_tags=tuple(tags),
    )
