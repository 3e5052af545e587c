"""Multi-block hexahedral meshes with paired non-conforming DG interfaces.

The mesh file format is line oriented UTF-8 text:

    nodes <N>                  then N lines  ``id x y z``
    elements <M>               then M lines  ``id block_id p n0 .. n7``
    blocks <B>                 then B lines  ``block_id ELASTIC|ACOUSTIC``
    faces <F>                  then F lines  ``element_id local_face tag``

Corner ordering: bottom quad counter-clockwise viewed from +z, then the
top quad in the same rotational order.  Local faces: 0:-x 1:+x 2:-y
3:+y 4:-z 5:+z.  Face tags: FREE_E FREE_A ABC_E ABC_A EA DG.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sem_basis as sb
from .errors import GeometryError, MeshFormatError, PairingError


class BlockKind(enum.Enum):
    ELASTIC = "ELASTIC"
    ACOUSTIC = "ACOUSTIC"


class FaceTag(enum.Enum):
    FREE_ELASTIC = "FREE_E"
    FREE_ACOUSTIC = "FREE_A"
    ABC_ELASTIC = "ABC_E"
    ABC_ACOUSTIC = "ABC_A"
    EA_INTERFACE = "EA"
    DG_INTERFACE = "DG"


_ELASTIC_TAGS = {FaceTag.FREE_ELASTIC, FaceTag.ABC_ELASTIC, FaceTag.DG_INTERFACE, FaceTag.EA_INTERFACE}
_ACOUSTIC_TAGS = {FaceTag.FREE_ACOUSTIC, FaceTag.ABC_ACOUSTIC, FaceTag.EA_INTERFACE}


@dataclass(frozen=True)
class HexElement:
    id: int
    block_id: int
    p: int
    node_ids: np.ndarray  # (8,) int


@dataclass(frozen=True)
class BoundaryFace:
    element_id: int
    local_face: int
    tag: FaceTag


@dataclass(frozen=True)
class DGFacePair:
    """One clipped intersection polygon between two opposing faces.

    The normal points from the minus toward the plus side; quadrature
    weights carry the physical surface measure and sum to the polygon
    area.
    """

    plus: BoundaryFace
    minus: BoundaryFace
    polygon: np.ndarray  # (v, 3) vertices of the shared polygon
    normal: np.ndarray  # (3,) unit, minus -> plus
    h_f: float  # min of the two incident element diameters
    p_f: int  # max of the two incident degrees
    qpoints: np.ndarray  # (q, 3)
    qweights: np.ndarray  # (q,)

    @property
    def area(self) -> float:
        return float(self.qweights.sum())


@dataclass
class Mesh:
    nodes: np.ndarray  # (n, 3)
    elements: list[HexElement]
    blocks: dict[int, BlockKind]
    boundary_faces: list[BoundaryFace]
    dg_pairs: list[DGFacePair] = field(default_factory=list)
    ea_pairs: list[DGFacePair] = field(default_factory=list)

    def corner_coords(self, element_id: int) -> np.ndarray:
        return self.nodes[self.elements[element_id].node_ids]

    def element_diameter(self, element_id: int) -> float:
        return element_diameter(self, self.elements[element_id])

    def block_kind(self, element_id: int) -> BlockKind:
        return self.blocks[self.elements[element_id].block_id]


def element_diameter(mesh: Mesh, element: HexElement) -> float:
    """Maximum distance between any two of the 8 corner nodes."""
    c = mesh.nodes[element.node_ids]
    d = c[:, None, :] - c[None, :, :]
    return float(np.sqrt((d * d).sum(-1).max()))


def min_edge_length(mesh: Mesh, element: HexElement) -> float:
    """Shortest of the 12 hexahedron edges (used by the CFL estimate)."""
    edges = (
        (0, 1), (1, 2), (2, 3), (3, 0),
        (4, 5), (5, 6), (6, 7), (7, 4),
        (0, 4), (1, 5), (2, 6), (3, 7),
    )
    c = mesh.nodes[element.node_ids]
    return min(float(np.linalg.norm(c[a] - c[b])) for a, b in edges)


# ---------------------------------------------------------------------------
# parsing


def _tokens(text: str):
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield ln, line.split()


def parse_mesh(text: str) -> Mesh:
    """Parse and validate a mesh from its text representation."""
    toks = _tokens(text)

    def take(expected: str) -> tuple[int, list[str]]:
        try:
            ln, t = next(toks)
        except StopIteration:
            raise MeshFormatError(f"unexpected end of file, expected '{expected}' header") from None
        if t[0] != expected or len(t) != 2:
            raise MeshFormatError(f"line {ln}: expected '{expected} <count>', got {' '.join(t)!r}")
        try:
            return ln, [t[1]]
        except ValueError:
            raise MeshFormatError(f"line {ln}: bad count {t[1]!r}") from None

    def records(header: str, n_fields: int, count: int):
        for _ in range(count):
            try:
                ln, t = next(toks)
            except StopIteration:
                raise MeshFormatError(f"{header}: fewer records than declared") from None
            if len(t) != n_fields:
                raise MeshFormatError(f"line {ln}: expected {n_fields} fields, got {len(t)}")
            yield ln, t

    _, (n_nodes,) = take("nodes")
    n_nodes = int(n_nodes)
    nodes = np.full((n_nodes, 3), np.nan)
    seen = np.zeros(n_nodes, dtype=bool)
    for ln, t in records("nodes", 4, n_nodes):
        i = int(t[0])
        if not 0 <= i < n_nodes or seen[i]:
            raise MeshFormatError(f"line {ln}: node id {i} out of range or duplicated")
        seen[i] = True
        nodes[i] = [float(v) for v in t[1:]]
    if not np.all(np.isfinite(nodes)):
        raise MeshFormatError("non-finite node coordinates")

    _, (n_el,) = take("elements")
    n_el = int(n_el)
    elements: list[HexElement | None] = [None] * n_el
    for ln, t in records("elements", 11, n_el):
        i = int(t[0])
        if not 0 <= i < n_el or elements[i] is not None:
            raise MeshFormatError(f"line {ln}: element id {i} out of range or duplicated")
        p = int(t[2])
        if p < 1:
            raise MeshFormatError(f"line {ln}: polynomial degree must be >= 1")
        ids = np.array([int(v) for v in t[3:]], dtype=np.int64)
        if ids.min() < 0 or ids.max() >= n_nodes or len(set(ids.tolist())) != 8:
            raise MeshFormatError(f"line {ln}: invalid corner node ids")
        elements[i] = HexElement(i, int(t[1]), p, ids)

    _, (n_blocks,) = take("blocks")
    blocks: dict[int, BlockKind] = {}
    for ln, t in records("blocks", 2, int(n_blocks)):
        try:
            kind = BlockKind(t[1])
        except ValueError:
            raise MeshFormatError(f"line {ln}: unknown block kind {t[1]!r}") from None
        blocks[int(t[0])] = kind

    _, (n_faces,) = take("faces")
    faces: list[BoundaryFace] = []
    for ln, t in records("faces", 3, int(n_faces)):
        eid, lf = int(t[0]), int(t[1])
        if not 0 <= eid < n_el or not 0 <= lf <= 5:
            raise MeshFormatError(f"line {ln}: invalid face reference {t[0]} {t[1]}")
        try:
            tag = FaceTag(t[2])
        except ValueError:
            raise MeshFormatError(f"line {ln}: unknown face tag {t[2]!r}") from None
        faces.append(BoundaryFace(eid, lf, tag))

    try:
        extra_ln, extra = next(toks)
    except StopIteration:
        pass
    else:
        raise MeshFormatError(f"line {extra_ln}: trailing content {' '.join(extra)!r}")

    mesh = Mesh(nodes, elements, blocks, faces)  # type: ignore[arg-type]
    _validate(mesh)
    return mesh


def load_mesh(path: str | Path) -> Mesh:
    """Load and validate a mesh file (interfaces are not yet paired)."""
    return parse_mesh(Path(path).read_text())


def _validate(mesh: Mesh) -> None:
    for el in mesh.elements:
        if el.block_id not in mesh.blocks:
            raise MeshFormatError(f"element {el.id} references unknown block {el.block_id}")
        # Positive Jacobian at every quadrature point of the element.
        sb.element_geometry(mesh.corner_coords(el.id), sb.gll(el.p), element_id=el.id)

    # A block boundary face is one whose corner set is not shared with a
    # second element of the same block.
    face_owner: dict[tuple[int, tuple[int, ...]], list[tuple[int, int]]] = {}
    for el in mesh.elements:
        for lf, corners in enumerate(sb.FACE_CORNERS):
            key = (el.block_id, tuple(sorted(int(el.node_ids[c]) for c in corners)))
            face_owner.setdefault(key, []).append((el.id, lf))
    boundary = set()
    for key, owners in face_owner.items():
        if len(owners) == 1:
            boundary.add(owners[0])
        elif len(owners) > 2:
            raise MeshFormatError(f"face shared by more than two elements of block {key[0]}")

    tagged: dict[tuple[int, int], FaceTag] = {}
    for bf in mesh.boundary_faces:
        key = (bf.element_id, bf.local_face)
        if key in tagged:
            raise MeshFormatError(f"face {key} tagged twice")
        if key not in boundary:
            raise MeshFormatError(f"tag on interior face of element {bf.element_id} (local {bf.local_face})")
        kind = mesh.block_kind(bf.element_id)
        allowed = _ELASTIC_TAGS if kind is BlockKind.ELASTIC else _ACOUSTIC_TAGS
        if bf.tag not in allowed:
            raise MeshFormatError(
                f"tag {bf.tag.value} not allowed on {kind.value} element {bf.element_id}"
            )
        tagged[key] = bf.tag
    missing = boundary - set(tagged)
    if missing:
        eid, lf = sorted(missing)[0]
        raise MeshFormatError(
            f"{len(missing)} untagged boundary face(s), first: element {eid} local face {lf}"
        )


# ---------------------------------------------------------------------------
# interface pairing (planar patches, convex polygon clipping)


@dataclass
class _FaceGeom:
    face: BoundaryFace
    corners: np.ndarray  # (4, 3) in outward-CCW order
    normal: np.ndarray  # (3,) outward unit
    center: np.ndarray
    diam: float  # incident element diameter
    p: int
    kind: BlockKind
    block_id: int


def _face_geometry(mesh: Mesh, bf: BoundaryFace) -> _FaceGeom:
    el = mesh.elements[bf.element_id]
    corners = mesh.nodes[el.node_ids[list(sb.FACE_CORNERS[bf.local_face])]]
    v1 = corners[1] - corners[0]
    v2 = corners[3] - corners[0]
    n = np.cross(v1, corners[2] - corners[0])
    nrm = np.linalg.norm(n)
    if nrm <= 0.0:
        raise GeometryError(f"degenerate interface face on element {bf.element_id}")
    n = n / nrm
    diam = element_diameter(mesh, el)
    # planarity: all corners on the plane through corner 0
    dist = np.abs((corners - corners[0]) @ n)
    if dist.max() > 1e-8 * diam:
        raise PairingError(
            f"non-planar interface face on element {bf.element_id} "
            f"(deviation {dist.max():.3e} > 1e-8 * {diam:.3e})"
        )
    return _FaceGeom(bf, corners, n, corners.mean(axis=0), diam, el.p, mesh.block_kind(bf.element_id), el.block_id)


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(normal, a)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(normal, t1)


def _shoelace(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon against a convex CCW polygon."""
    out = [tuple(p) for p in subject]
    m = len(clip)
    for i in range(m):
        a, b = clip[i], clip[(i + 1) % m]
        edge = (b[0] - a[0], b[1] - a[1])
        inp, out = out, []
        if not inp:
            break

        def inside(p):
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]) >= 0.0

        def intersect(p, q):
            dp = (q[0] - p[0], q[1] - p[1])
            denom = edge[0] * dp[1] - edge[1] * dp[0]
            t = (edge[0] * (a[1] - p[1]) - edge[1] * (a[0] - p[0])) / denom
            return (p[0] + t * dp[0], p[1] + t * dp[1])

        s = inp[-1]
        for e in inp:
            if inside(e):
                if not inside(s):
                    out.append(intersect(s, e))
                out.append(e)
            elif inside(s):
                out.append(intersect(s, e))
            s = e
    return np.array(out) if out else np.empty((0, 2))


def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w  # on [0, 1]


def _polygon_quadrature(poly2d: np.ndarray, order_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre on a centroid-fan triangulation (2D coords)."""
    g, gw = _gauss_legendre(order_points)
    u, v = np.meshgrid(g, g, indexing="ij")
    wuv = np.outer(gw, gw).ravel()
    u, v = u.ravel(), v.ravel()
    # Duffy map of the unit square onto the triangle (0, b, c).
    l1 = u * (1.0 - v)
    l2 = u * v
    jac = u  # times triangle area * 2
    c0 = poly2d.mean(axis=0)
    pts, wts = [], []
    m = len(poly2d)
    for i in range(m):
        b, c = poly2d[i], poly2d[(i + 1) % m]
        area2 = (b[0] - c0[0]) * (c[1] - c0[1]) - (b[1] - c0[1]) * (c[0] - c0[0])
        p = c0 + np.outer(l1, b - c0) + np.outer(l2, c - c0)
        pts.append(p)
        wts.append(wuv * jac * area2)
    return np.concatenate(pts), np.concatenate(wts)


def pair_interfaces(mesh: Mesh, min_area_rel: float = 1e-12) -> Mesh:
    """Populate dg_pairs and ea_pairs by clipping opposing tagged faces.

    Every DG/EA-tagged face must be fully covered by the union of its
    intersection polygons (relative area deficit below 1e-8), otherwise a
    PairingError is raised.  Quadrature of order 2*p_F+1 (or better) is
    placed on each clipped polygon; its weights sum to the polygon area.
    """
    mesh.dg_pairs = []
    mesh.ea_pairs = []
    for tag, store in ((FaceTag.DG_INTERFACE, mesh.dg_pairs), (FaceTag.EA_INTERFACE, mesh.ea_pairs)):
        geoms = [_face_geometry(mesh, bf) for bf in mesh.boundary_faces if bf.tag is tag]
        if not geoms:
            continue
        covered = np.zeros(len(geoms))
        for ia, fa in enumerate(geoms):
            for ib in range(ia + 1, len(geoms)):
                fb = geoms[ib]
                if fa.block_id == fb.block_id:
                    continue
                if np.dot(fa.normal, fb.normal) > -1.0 + 1e-8:
                    continue  # not opposing
                href = min(fa.diam, fb.diam)
                if abs(np.dot(fb.center - fa.center, fa.normal)) > 1e-8 * href:
                    continue  # different planes
                if np.abs((fb.corners - fa.center) @ fa.normal).max() > 1e-8 * href:
                    continue
                pair = _build_pair(mesh, fa, fb, min_area_rel)
                if pair is None:
                    continue
                store.append(pair)
                covered[ia] += pair.area
                covered[ib] += pair.area
        for i, g in enumerate(geoms):
            t1, t2 = _plane_basis(g.normal)
            poly2d = np.column_stack(((g.corners - g.center) @ t1, (g.corners - g.center) @ t2))
            area = abs(_shoelace(poly2d))
            if abs(covered[i] - area) > 1e-8 * area:
                raise PairingError(
                    f"interface face on element {g.face.element_id} (local {g.face.local_face}) "
                    f"covered {covered[i]:.12e} of area {area:.12e}: gap or overlap"
                )
    _check_pair_invariants(mesh)
    return mesh


def _build_pair(mesh: Mesh, fa: _FaceGeom, fb: _FaceGeom, min_area_rel: float) -> DGFacePair | None:
    h_f = min(fa.diam, fb.diam)
    p_f = max(fa.p, fb.p)
    # The minus side is the one whose outward normal is lexicographically
    # positive; the pair normal then points minus -> plus.
    if _lex_positive(fa.normal):
        minus, plus = fa, fb
    else:
        minus, plus = fb, fa
    n = minus.normal
    t1, t2 = _plane_basis(n)
    origin = minus.center

    def project(corners: np.ndarray) -> np.ndarray:
        d = corners - origin
        q = np.column_stack((d @ t1, d @ t2))
        return q if _shoelace(q) > 0 else q[::-1]

    pm = project(minus.corners)
    pp = project(plus.corners)
    clipped = _clip_convex(pm, pp)
    if len(clipped) < 3:
        return None
    area = _shoelace(clipped)
    if area <= min_area_rel * h_f * h_f:
        return None
    qp2, qw = _polygon_quadrature(clipped, p_f + 2)
    if abs(qw.sum() - area) > 1e-10 * area:
        raise PairingError("face quadrature weights do not sum to polygon area")
    poly3 = origin + np.outer(clipped[:, 0], t1) + np.outer(clipped[:, 1], t2)
    qp3 = origin + np.outer(qp2[:, 0], t1) + np.outer(qp2[:, 1], t2)
    return DGFacePair(plus.face, minus.face, poly3, n.copy(), h_f, p_f, qp3, qw)


def _lex_positive(v: np.ndarray, tol: float = 1e-12) -> bool:
    for c in v:
        if abs(c) > tol:
            return c > 0
    return False


def _check_pair_invariants(mesh: Mesh) -> None:
    for pair in mesh.dg_pairs + mesh.ea_pairs:
        if abs(np.linalg.norm(pair.normal) - 1.0) > 1e-12:
            raise PairingError("pair normal is not unit length")
        ke, ka = mesh.block_kind(pair.plus.element_id), mesh.block_kind(pair.minus.element_id)
        if pair.plus.tag is FaceTag.DG_INTERFACE:
            if not (ke is BlockKind.ELASTIC and ka is BlockKind.ELASTIC):
                raise PairingError("DG pair must join two elastic blocks")
        else:
            if {ke, ka} != {BlockKind.ELASTIC, BlockKind.ACOUSTIC}:
                raise PairingError("EA pair must join one elastic and one acoustic block")
