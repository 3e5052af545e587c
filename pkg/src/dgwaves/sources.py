"""Seismic load vectors: kinematic finite-fault moment tensors and the
plane-wave equivalent body force.

Fault file format:

    fault <strike_deg> <dip_deg> <updip|downdip> <n_points>
    <x> <y> <z> <slip_strike> <slip_dip> <M0> <t_rupt> <t_rise>    (n lines)

Slip components are in fault-plane coordinates (along strike and along
dip, the third token fixing whether positive slip_dip points up- or
down-dip); they are rotated to global Cartesian (x east, y north, z up)
on load.  Plane-wave file format:

    planewave <z0> <rho> <vp> <dt> <n_samples>
    <vx> <vy> <vz>                                                 (n lines)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshFormatError
from .mesh import BlockKind
from .operators import Discretization

log = logging.getLogger(__name__)


def moment_function(t_hat: float | np.ndarray) -> float | np.ndarray:
    """Normalized moment release: 0 before, 1 after, smooth ramp between.

    The ramp is t - sin(2 pi t)/(2 pi), monotone and C1; the rate shape
    is pluggable through MomentTensorPoint.ramp.
    """
    t = np.asarray(t_hat, dtype=float)
    out = np.where(t <= 0.0, 0.0, np.where(t >= 1.0, 1.0, t - np.sin(2.0 * np.pi * t) / (2.0 * np.pi)))
    return float(out) if np.isscalar(t_hat) or out.ndim == 0 else out


@dataclass(frozen=True)
class MomentTensorPoint:
    location: np.ndarray  # (3,)
    slip: np.ndarray  # (3,) global Cartesian slip direction * magnitude
    normal: np.ndarray  # (3,) unit fault normal
    m0: float  # N*m
    t_rupt: float
    t_rise: float
    ramp: object = moment_function  # callable t_hat -> [0, 1]

    def __post_init__(self):
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise ValueError("fault normal must be a unit vector")
        if self.t_rise <= 0:
            raise ValueError("rise time must be positive")
        if self.m0 < 0:
            raise ValueError("seismic moment must be non-negative")


def moment_tensor_at(point: MomentTensorPoint, t: float) -> np.ndarray:
    """M(t) = M0 * m((t - t_rupt)/t_rise) * [(s x n) + (s x n)^T]."""
    sn = np.outer(point.slip, point.normal)
    return point.m0 * point.ramp((t - point.t_rupt) / point.t_rise) * (sn + sn.T)


def released_moment(point: MomentTensorPoint, t: float) -> float:
    """Scalar moment released so far, M0 * m(t_hat) (for |s| = 1)."""
    return point.m0 * float(point.ramp((t - point.t_rupt) / point.t_rise))


@dataclass
class KinematicFault:
    points: list[MomentTensorPoint]
    normal: np.ndarray

    def __post_init__(self):
        locs = np.array([p.location for p in self.points])
        if len(locs) > 1:
            center = locs.mean(axis=0)
            extent = np.linalg.norm(locs - center, axis=1).max()
            off = np.abs((locs - center) @ self.normal)
            if extent > 0 and off.max() > 1e-6 * extent:
                raise MeshFormatError(
                    f"fault points deviate from the fault plane by {off.max():.3e}"
                )


def strike_dip_vectors(strike_deg: float, dip_deg: float):
    """Strike, down-dip and (upward) normal unit vectors, x east / y north / z up."""
    phi, dlt = math.radians(strike_deg), math.radians(dip_deg)
    s_hat = np.array([math.sin(phi), math.cos(phi), 0.0])
    d_hat = np.array([math.cos(phi) * math.cos(dlt), -math.sin(phi) * math.cos(dlt), -math.sin(dlt)])
    n_hat = np.array([math.cos(phi) * math.sin(dlt), -math.sin(phi) * math.sin(dlt), math.cos(dlt)])
    return s_hat, d_hat, n_hat


def parse_fault(text: str) -> KinematicFault:
    lines = [l.split("#", 1)[0].strip() for l in text.splitlines()]
    lines = [l for l in lines if l]
    if not lines or not lines[0].startswith("fault"):
        raise MeshFormatError("fault file must start with a 'fault' header")
    h = lines[0].split()
    if len(h) != 5:
        raise MeshFormatError("fault header: 'fault strike dip updip|downdip n_points'")
    strike, dip, conv, n = float(h[1]), float(h[2]), h[3], int(h[4])
    if conv not in ("updip", "downdip"):
        raise MeshFormatError(f"unknown slip-dip convention {conv!r}")
    if len(lines) - 1 != n:
        raise MeshFormatError(f"fault file declares {n} points but has {len(lines) - 1}")
    s_hat, d_hat, n_hat = strike_dip_vectors(strike, dip)
    dip_dir = -d_hat if conv == "updip" else d_hat
    pts = []
    for ln in lines[1:]:
        v = [float(x) for x in ln.split()]
        if len(v) != 8:
            raise MeshFormatError(f"fault point needs 8 fields, got {ln!r}")
        x, y, z, ss, sd, m0, t_rupt, t_rise = v
        pts.append(
            MomentTensorPoint(np.array([x, y, z]), ss * s_hat + sd * dip_dir, n_hat, m0, t_rupt, t_rise)
        )
    return KinematicFault(pts, n_hat)


def load_fault(path: str | Path) -> KinematicFault:
    return parse_fault(Path(path).read_text())


class MomentSource:
    """Assembles F_h(t) for a kinematic fault snapped to GLL nodes.

    Each point contributes M(t) : grad(w) evaluated at the hosting node
    (the divergence form of the equivalent body-force couple); snapping
    distances are recorded and nearest-node ties break toward the lowest
    global node index.
    """

    def __init__(self, disc: Discretization, fault: KinematicFault):
        self.disc = disc
        self.fault = fault
        self.snap_distances: list[float] = []
        self._entries: list[tuple[np.ndarray, np.ndarray, MomentTensorPoint]] = []
        coords = disc.elastic_node_coords
        tree = disc.elastic_node_tree()
        lo = coords.min(axis=0) - 1e-9
        hi = coords.max(axis=0) + 1e-9
        margin = 1e-6 * float(np.linalg.norm(hi - lo))
        for pt in fault.points:
            if np.any(pt.location < lo - margin) or np.any(pt.location > hi + margin):
                raise MeshFormatError(f"fault point {pt.location} outside the mesh")
            dist, idx = tree.query(pt.location)
            close = tree.query_ball_point(pt.location, dist * (1.0 + 1e-12) + 1e-300)
            node = int(min(close)) if close else int(idx)
            self.snap_distances.append(float(dist))
            eid, local = self._host_of(node)
            side = disc.trace_operators(eid, coords[node][None, :], need_grads=True)
            self._entries.append((side.gdofs, side.grads[0], pt))

    def _host_of(self, node: int) -> tuple[int, int]:
        # lowest element id whose connectivity contains the node
        for blk in self.disc.dofmap.blocks:
            if blk.kind is not BlockKind.ELASTIC:
                continue
            gl = node - blk.offset
            if 0 <= gl < len(blk.coords):
                rows, cols = np.nonzero(blk.conn == gl)
                if len(rows):
                    best = int(np.argmin(blk.element_ids[rows]))
                    return int(blk.element_ids[rows[best]]), int(cols[best])
        raise MeshFormatError(f"elastic node {node} not found in any block")

    def __call__(self, t: float) -> np.ndarray:
        out = np.zeros((self.disc.n_elastic, 3))
        for gdofs, grads, pt in self._entries:
            m = moment_tensor_at(pt, t)
            out[gdofs] += grads @ m.T  # (n,3): sum_b M_cb dphi_a/dx_b
        return out


def assemble_moment_load(disc: Discretization, fault: KinematicFault, t: float) -> np.ndarray:
    """One-shot moment load; prefer MomentSource for repeated evaluation."""
    return MomentSource(disc, fault)(t)


@dataclass
class PlaneWaveSource:
    """Equivalent-body-force plane-wave excitation in a one-element layer."""

    z0: float
    rho: float
    vp: float
    dt: float
    v_ref: np.ndarray  # (n, 3) velocity samples
    thickness: float = 0.0  # set when bound to a mesh

    def sample(self, t: float) -> np.ndarray:
        n = len(self.v_ref)
        if t < 0.0 or t > (n - 1) * self.dt:
            return np.zeros(3)
        return np.array(
            [np.interp(t, np.arange(n) * self.dt, self.v_ref[:, c]) for c in range(3)]
        )


def parse_plane_wave(text: str) -> PlaneWaveSource:
    lines = [l.split("#", 1)[0].strip() for l in text.splitlines()]
    lines = [l for l in lines if l]
    if not lines or not lines[0].startswith("planewave"):
        raise MeshFormatError("plane-wave file must start with a 'planewave' header")
    h = lines[0].split()
    if len(h) != 6:
        raise MeshFormatError("planewave header: 'planewave z0 rho vp dt n_samples'")
    z0, rho, vp, dt, n = float(h[1]), float(h[2]), float(h[3]), float(h[4]), int(h[5])
    if len(lines) - 1 != n:
        raise MeshFormatError(f"plane-wave file declares {n} samples but has {len(lines) - 1}")
    v = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
    if v.shape != (n, 3) or not np.all(np.isfinite(v)):
        raise MeshFormatError("plane-wave samples must be n lines of 'vx vy vz'")
    return PlaneWaveSource(z0, rho, vp, dt, v)


def load_plane_wave(path: str | Path) -> PlaneWaveSource:
    return parse_plane_wave(Path(path).read_text())


class PlaneWaveLoad:
    """Uniform body force over the injection layer hosting z0.

    The force density is 2 rho v_c vref_c(t) / L per component, with the
    P speed for the vertical component and the S speed for the horizontal
    ones (the impedance matching that makes an upgoing wave of amplitude
    vref, which doubles at the free surface).
    """

    def __init__(self, disc: Discretization, source: PlaneWaveSource):
        self.disc = disc
        self.source = source
        layer = []
        for el in disc.mesh.elements:
            if disc.mesh.block_kind(el.id) is not BlockKind.ELASTIC:
                continue
            zc = disc.mesh.corner_coords(el.id)[:, 2]
            if zc.min() <= source.z0 <= zc.max():
                layer.append(el.id)
        if not layer:
            raise MeshFormatError(f"no elastic elements contain the injection depth z0={source.z0}")
        exts = [np.ptp(disc.mesh.corner_coords(e)[:, 2]) for e in layer]
        self.thickness = float(np.mean(exts))
        source.thickness = self.thickness
        mat = disc.materials.elastic[layer[0]]
        for e in layer:
            if disc.materials.elastic[e] is not mat:
                raise MeshFormatError("injection layer spans more than one material")
        if abs(mat.rho - source.rho) > 1e-6 * mat.rho or abs(mat.vp - source.vp) > 1e-6 * mat.vp:
            raise MeshFormatError(
                f"plane-wave rho/vp ({source.rho}, {source.vp}) do not match the "
                f"injection layer material ({mat.rho}, {mat.vp})"
            )
        self.speeds = np.array([mat.vs, mat.vs, mat.vp])
        self.rho = mat.rho
        # lumped volume restricted to the layer elements
        vol = np.zeros(disc.n_elastic)
        for e in layer:
            bi, row = disc.dofmap.elem_loc[e]
            blk = disc.dofmap.blocks[bi]
            idx = (blk.conn[row] + blk.offset).ravel()
            vol += np.bincount(idx, disc._blocks[bi].wdetj[row], minlength=disc.n_elastic)
        self.layer_volume = vol
        self._warned = False

    def __call__(self, t: float) -> np.ndarray:
        n = len(self.source.v_ref)
        if t > (n - 1) * self.source.dt and not self._warned:
            log.warning("plane-wave time history exhausted at t=%.6g; treating as zero", t)
            self._warned = True
        dens = 2.0 * self.rho * self.speeds * self.source.sample(t) / self.thickness
        return self.layer_volume[:, None] * dens[None, :]
