"""Per-block material records, derived Lame/damping parameters, layering.

Materials file format (text, '#' comments allowed):

    block <id> elastic <rho> <vp> <vs> <Qs>
    block <id> acoustic <rho> <c> <b>
    layer <z_top> <z_bot> <rho> <vp> <vs> <Qs>

Depths are in meters with z negative downward; layer intervals must be
contiguous and ordered from shallow to deep.  Block entries override
layer assignment.  Q_s may be 'inf' for an undamped material.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MaterialError, MeshFormatError
from .mesh import BlockKind, Mesh

WATER_DAMPING_DEFAULT = 6e-9  # m^2/s, used when an acoustic 'b' is omitted


def derive_lame(rho: float, vp: float, vs: float) -> tuple[float, float]:
    """Lame parameters from density and wave speeds.

    mu = rho*vs^2 and lambda = rho*vp^2 - 2*mu; raises if lambda < 0
    (requires vp^2 >= 2 vs^2).
    """
    if rho <= 0 or vp <= 0 or vs <= 0:
        raise MaterialError(f"rho, vp, vs must be positive (got {rho}, {vp}, {vs})")
    mu = rho * vs * vs
    lam = rho * vp * vp - 2.0 * mu
    if lam < 0:
        raise MaterialError(f"negative lambda = {lam:.6g} Pa: vp={vp} too small for vs={vs}")
    return lam, mu


def derive_damping(q_s: float, f_0: float) -> float:
    """Viscous damping rate zeta = pi*f_0/Q_s; zeta = 0 for Q_s = inf."""
    if f_0 <= 0:
        raise MaterialError(f"reference frequency must be positive, got {f_0}")
    if math.isinf(q_s):
        return 0.0
    if q_s <= 0:
        raise MaterialError(f"quality factor must be positive or inf, got {q_s}")
    return math.pi * f_0 / q_s


@dataclass(frozen=True)
class ElasticMaterial:
    rho: float
    vp: float
    vs: float
    q_s: float = math.inf
    lam: float = 0.0
    mu: float = 0.0
    zeta: float = 0.0

    @staticmethod
    def create(rho: float, vp: float, vs: float, q_s: float = math.inf, f_0: float = 1.0) -> "ElasticMaterial":
        lam, mu = derive_lame(rho, vp, vs)
        return ElasticMaterial(rho, vp, vs, q_s, lam, mu, derive_damping(q_s, f_0))


@dataclass(frozen=True)
class AcousticMaterial:
    rho: float
    c: float
    b: float = WATER_DAMPING_DEFAULT

    def __post_init__(self):
        if self.rho <= 0 or self.c <= 0:
            raise MaterialError(f"acoustic rho and c must be positive (got {self.rho}, {self.c})")
        if self.b < 0:
            raise MaterialError(f"acoustic damping b must be non-negative, got {self.b}")


@dataclass(frozen=True)
class Layer:
    z_top: float  # shallow bound (larger z)
    z_bot: float  # deep bound (smaller z)
    rho: float
    vp: float
    vs: float
    q_s: float


@dataclass
class LayerStack:
    """Depth-ordered elastic layers; intervals contiguous, shallow first."""

    layers: list[Layer]

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.z_bot != b.z_top:
                raise MaterialError(f"layer intervals not contiguous at z={a.z_bot}")
        for ly in self.layers:
            if ly.z_top <= ly.z_bot:
                raise MaterialError(f"layer z_top must exceed z_bot (got {ly.z_top}, {ly.z_bot})")

    def lookup(self, z: float) -> Layer | None:
        # A centroid exactly on an interface goes to the deeper layer.
        for ly in self.layers:
            if ly.z_bot < z <= ly.z_top or (ly is self.layers[0] and z == ly.z_top):
                return ly
        return None


@dataclass
class MaterialTable:
    block_elastic: dict[int, tuple[float, float, float, float]]
    block_acoustic: dict[int, AcousticMaterial]
    layers: LayerStack | None


def parse_materials(text: str) -> MaterialTable:
    be: dict[int, tuple[float, float, float, float]] = {}
    ba: dict[int, AcousticMaterial] = {}
    layers: list[Layer] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        t = line.split()
        try:
            if t[0] == "block" and t[2] == "elastic" and len(t) == 7:
                be[int(t[1])] = (float(t[3]), float(t[4]), float(t[5]), float(t[6]))
            elif t[0] == "block" and t[2] == "acoustic" and len(t) in (6, 7):
                b = float(t[6]) if len(t) == 7 else WATER_DAMPING_DEFAULT
                ba[int(t[1])] = AcousticMaterial(float(t[3]), float(t[4]), b)
            elif t[0] == "layer" and len(t) == 7:
                layers.append(Layer(*[float(v) for v in t[1:]]))
            else:
                raise ValueError
        except (ValueError, IndexError):
            raise MeshFormatError(f"materials line {ln}: cannot parse {raw!r}") from None
    return MaterialTable(be, ba, LayerStack(layers) if layers else None)


def load_materials(path: str | Path) -> MaterialTable:
    return parse_materials(Path(path).read_text())


@dataclass
class MaterialMap:
    """Resolved per-element materials."""

    elastic: dict[int, ElasticMaterial]  # element id -> material
    acoustic: dict[int, AcousticMaterial]

    def of(self, element_id: int) -> ElasticMaterial | AcousticMaterial:
        return self.elastic.get(element_id) or self.acoustic[element_id]


def assign_materials(mesh: Mesh, table: MaterialTable, f_0: float = 1.0) -> MaterialMap:
    """Resolve one material per element.

    Elastic elements take the block entry when present, otherwise the
    layer containing their centroid depth.  Acoustic blocks require a
    block entry.
    """
    elastic: dict[int, ElasticMaterial] = {}
    acoustic: dict[int, AcousticMaterial] = {}
    block_cache: dict[int, ElasticMaterial] = {}
    for el in mesh.elements:
        kind = mesh.blocks[el.block_id]
        if kind is BlockKind.ACOUSTIC:
            mat = table.block_acoustic.get(el.block_id)
            if mat is None:
                raise MaterialError(f"no acoustic material for block {el.block_id}")
            acoustic[el.id] = mat
            continue
        if el.block_id in table.block_elastic:
            if el.block_id not in block_cache:
                rho, vp, vs, qs = table.block_elastic[el.block_id]
                block_cache[el.block_id] = ElasticMaterial.create(rho, vp, vs, qs, f_0)
            elastic[el.id] = block_cache[el.block_id]
            continue
        if table.layers is None:
            raise MaterialError(f"element {el.id}: block {el.block_id} has no material and no layers given")
        z = float(mesh.corner_coords(el.id)[:, 2].mean())
        ly = table.layers.lookup(z)
        if ly is None:
            raise MaterialError(f"element {el.id}: centroid depth z={z} not covered by any layer")
        key = -1000 - table.layers.layers.index(ly)
        if key not in block_cache:
            block_cache[key] = ElasticMaterial.create(ly.rho, ly.vp, ly.vs, ly.q_s, f_0)
        elastic[el.id] = block_cache[key]
    return MaterialMap(elastic, acoustic)
