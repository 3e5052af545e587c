"""Shared fixtures: text-format builders for box meshes and materials."""

from __future__ import annotations

import numpy as np

FACE_NAMES = ("-x", "+x", "-y", "+y", "-z", "+z")


class MeshBuilder:
    """Assembles multi-block axis-aligned box meshes in the solver's text format.

    Node ids are shared within a block (conforming interior) and duplicated
    across blocks, which the loader accepts either way.
    """

    def __init__(self):
        self.nodes: list[tuple[float, float, float]] = []
        self.elements: list[tuple[int, int, list[int]]] = []  # (block, p, corner ids)
        self.blocks: dict[int, str] = {}
        self.faces: list[tuple[int, int, str]] = []

    def add_box(self, block_id, kind, p, bounds, shape, tags):
        """Add an nx*ny*nz block; tags maps face names ('-x', ...) to tag strings."""
        (x0, x1), (y0, y1), (z0, z1) = bounds
        nx, ny, nz = shape
        xs = np.linspace(x0, x1, nx + 1)
        ys = np.linspace(y0, y1, ny + 1)
        zs = np.linspace(z0, z1, nz + 1)
        base = len(self.nodes)
        for i in range(nx + 1):
            for j in range(ny + 1):
                for k in range(nz + 1):
                    self.nodes.append((float(xs[i]), float(ys[j]), float(zs[k])))

        def nid(i, j, k):
            return base + (i * (ny + 1) + j) * (nz + 1) + k

        self.blocks[block_id] = kind
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    corners = [
                        nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k),
                        nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1),
                    ]
                    eid = len(self.elements)
                    self.elements.append((block_id, p, corners))
                    sides = {
                        "-x": i == 0, "+x": i == nx - 1,
                        "-y": j == 0, "+y": j == ny - 1,
                        "-z": k == 0, "+z": k == nz - 1,
                    }
                    for lf, name in enumerate(FACE_NAMES):
                        if sides[name]:
                            tag = tags[name] if isinstance(tags, dict) else tags
                            self.faces.append((eid, lf, tag))
        return self

    def text(self) -> str:
        out = [f"nodes {len(self.nodes)}"]
        out += [f"{i} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(self.nodes)]
        out.append(f"elements {len(self.elements)}")
        out += [
            f"{i} {b} {p} " + " ".join(str(c) for c in corners)
            for i, (b, p, corners) in enumerate(self.elements)
        ]
        out.append(f"blocks {len(self.blocks)}")
        out += [f"{bid} {kind}" for bid, kind in sorted(self.blocks.items())]
        out.append(f"faces {len(self.faces)}")
        out += [f"{e} {lf} {tag}" for e, lf, tag in self.faces]
        return "\n".join(out) + "\n"


def unit_cube_text(p=1, tag="FREE_E", kind="ELASTIC"):
    return MeshBuilder().add_box(1, kind, p, ((0, 1), (0, 1), (0, 1)), (1, 1, 1), tag).text()


def elastic_box_text(bounds, shape, p=2, tags="FREE_E", block_id=1):
    return MeshBuilder().add_box(block_id, "ELASTIC", p, bounds, shape, tags).text()


def two_block_dg_text(p=2, split=1.0, left_shape=(1, 1, 1), right_shape=(1, 1, 1),
                      width=1.0, x_end=2.0, outer="FREE_E"):
    """Two elastic blocks meeting at x=split with DG-tagged interface faces."""
    b = MeshBuilder()
    b.add_box(1, "ELASTIC", p, ((0, split), (0, width), (0, width)), left_shape,
              {"-x": outer, "+x": "DG", "-y": outer, "+y": outer, "-z": outer, "+z": outer})
    b.add_box(2, "ELASTIC", p, ((split, x_end), (0, width), (0, width)), right_shape,
              {"-x": "DG", "+x": outer, "-y": outer, "+y": outer, "-z": outer, "+z": outer})
    return b.text()


def materials_text(lines):
    return "\n".join(lines) + "\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p
