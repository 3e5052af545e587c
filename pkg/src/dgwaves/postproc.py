"""Receivers, derived pressure fields, peak-ground maps, section profiles.

Receiver CSVs carry `t,ux,uy,uz,vx,vy,vz` for elastic stations and
`t,psi,psidot,pac` for acoustic ones, at 17 significant digits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sem_basis as sb
from .errors import ConfigError
from .mesh import BlockKind, FaceTag
from .operators import Discretization, State

log = logging.getLogger(__name__)

_FMT = "{:.17g}"


@dataclass
class Receiver:
    id: str
    location: np.ndarray
    kind: BlockKind
    element_id: int = -1
    ref: np.ndarray | None = None


@dataclass
class TraceSet:
    """Uniformly sampled receiver histories."""

    times: np.ndarray
    data: dict[str, np.ndarray]  # receiver id -> (n, 6) elastic u,v or (n, 3) psi, psidot, pac
    kinds: dict[str, BlockKind]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


def locate_point(disc: Discretization, x: np.ndarray, kind: BlockKind) -> tuple[int, np.ndarray]:
    """Host element and reference coordinates of a physical point.

    Candidates are bounding-box filtered and tried in element-id order,
    so points on shared element faces resolve deterministically.
    """
    mesh = disc.mesh
    for el in mesh.elements:
        if mesh.block_kind(el.id) is not kind:
            continue
        c = mesh.corner_coords(el.id)
        pad = 1e-8 * mesh.element_diameter(el.id)
        if np.any(x < c.min(axis=0) - pad) or np.any(x > c.max(axis=0) + pad):
            continue
        ref, ok = sb.invert_map(c, x)
        if ok and np.max(np.abs(ref)) <= 1.0 + 1e-8:
            return el.id, np.clip(ref, -1.0, 1.0)
    raise ConfigError(f"point {x.tolist()} not found in any {kind.value} element")


class ReceiverRecorder:
    """Samples receiver values every output_stride global steps."""

    def __init__(self, disc: Discretization, receivers: list[Receiver], stride: int = 1):
        self.disc = disc
        self.receivers = receivers
        self.stride = max(1, int(stride))
        self._rows = []
        for r in receivers:
            r.element_id, r.ref = locate_point(disc, np.asarray(r.location, dtype=float), r.kind)
            side = disc.trace_operators(r.element_id, np.asarray(r.location, dtype=float)[None, :])
            rho_a = disc.materials.acoustic[r.element_id].rho if r.kind is BlockKind.ACOUSTIC else 0.0
            self._rows.append((side.gdofs, side.bvals[0], rho_a))
        self.times: list[float] = []
        self.samples: dict[str, list] = {r.id: [] for r in receivers}

    def sample(self, state: State) -> None:
        if state.step % self.stride:
            return
        self.times.append(state.t)
        for r, (gdofs, row, rho_a) in zip(self.receivers, self._rows):
            if r.kind is BlockKind.ELASTIC:
                u = row @ state.u[gdofs]
                v = row @ state.udot[gdofs]
                self.samples[r.id].append(np.concatenate([u, v]))
            else:
                psi = row @ state.psi[gdofs]
                psidot = row @ state.psidot[gdofs]
                self.samples[r.id].append(np.array([psi, psidot, rho_a * psidot]))

    def traces(self) -> TraceSet:
        return TraceSet(
            np.array(self.times),
            {rid: np.array(rows) for rid, rows in self.samples.items()},
            {r.id: r.kind for r in self.receivers},
        )


class SurfaceRecorder:
    """Running absolute peaks of u and v on the free top surface.

    Sampling points are the GLL nodes of FREE-tagged elastic faces whose
    outward normal has a positive z component, deduplicated per dof.
    """

    def __init__(self, disc: Discretization, stride: int = 1, z_normal_min: float = 0.1):
        self.disc = disc
        self.stride = max(1, int(stride))
        grp = disc.free_elastic_group
        mask = grp.normals[:, 2] > z_normal_min if len(grp.gdofs) else np.zeros(0, bool)
        dofs, first = np.unique(grp.gdofs[mask], return_index=True)
        self.dofs = dofs
        self.coords = grp.coords[mask][first]
        self.peak_u = np.zeros((len(dofs), 2))
        self.peak_v = np.zeros((len(dofs), 2))

    def sample(self, state: State) -> None:
        if state.step % self.stride:
            return
        np.maximum(self.peak_u, np.abs(state.u[self.dofs, :2]), out=self.peak_u)
        np.maximum(self.peak_v, np.abs(state.udot[self.dofs, :2]), out=self.peak_v)

    def peak_maps(self) -> np.ndarray:
        """Rows x, y, z, PGU_gmh, PGV_gmh (geometric mean of the horizontal
        absolute peaks)."""
        pgu = np.sqrt(self.peak_u[:, 0] * self.peak_u[:, 1])
        pgv = np.sqrt(self.peak_v[:, 0] * self.peak_v[:, 1])
        return np.column_stack([self.coords, pgu, pgv])


def peak_ground_maps(traces: TraceSet) -> list[tuple[str, float, float]]:
    """PGU_gmh / PGV_gmh per elastic receiver from full time histories."""
    out = []
    for rid, arr in traces.data.items():
        if traces.kinds[rid] is not BlockKind.ELASTIC:
            continue
        pu = np.abs(arr[:, 0:2]).max(axis=0)
        pv = np.abs(arr[:, 3:5]).max(axis=0)
        out.append((rid, float(np.sqrt(pu[0] * pu[1])), float(np.sqrt(pv[0] * pv[1]))))
    return out


def section_max_displacement(traces: TraceSet, ids: list[str], direction: np.ndarray) -> np.ndarray:
    """sup_t |u . e_perp| per sampled point along a section polyline."""
    e = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(e)
    if abs(nrm - 1.0) > 1e-12:
        log.warning("section direction %s is not unit length; normalizing", e.tolist())
        e = e / nrm
    return np.array([np.abs(traces.data[rid][:, 0:3] @ e).max() for rid in ids])


def pressures(disc: Discretization, state: State) -> tuple[np.ndarray, np.ndarray]:
    """(p_ac, p_el): rho_a psidot on acoustic dofs and -tr(sigma)/3 on
    elastic dofs (element stresses averaged at shared nodes)."""
    p_ac = disc.rho_acoustic_node * state.psidot
    num = np.zeros(disc.n_elastic)
    cnt = np.zeros(disc.n_elastic)
    for blk in disc._blocks:
        if blk.bd.kind is not BlockKind.ELASTIC:
            continue
        ul = state.u[blk.gconn]
        e, q = ul.shape[:2]
        m = blk.basis.n
        d = blk.basis.deriv_matrix
        u3 = ul.reshape(e, m, m, m, 3)
        g = np.empty((e, m, m, m, 3, 3))
        g[..., 0] = np.einsum("ai,Eijkc->Eajkc", d, u3)
        g[..., 1] = np.einsum("aj,Eijkc->Eiakc", d, u3)
        g[..., 2] = np.einsum("ak,Eijkc->Eijac", d, u3)
        h = np.einsum("Eqcr,Eqrb->Eqcb", g.reshape(e, q, 3, 3), blk.jinv)
        div = np.trace(h, axis1=2, axis2=3)
        # p_el = -tr(sigma)/3 = -(lambda + 2 mu/3) div u
        pel = -(blk.lam + 2.0 * blk.mu / 3.0)[:, None] * div
        idx = blk.gconn.ravel()
        num += np.bincount(idx, pel.ravel(), minlength=disc.n_elastic)
        cnt += np.bincount(idx, np.ones(idx.size), minlength=disc.n_elastic)
    p_el = np.divide(num, cnt, out=np.zeros_like(num), where=cnt > 0)
    return p_ac, p_el


# ---------------------------------------------------------------------------
# CSV output


def _fmt_row(vals) -> str:
    return ",".join(_FMT.format(v) for v in vals)


def write_receiver_csv(path: Path, rid: str, traces: TraceSet) -> None:
    arr = traces.data[rid]
    if traces.kinds[rid] is BlockKind.ELASTIC:
        header = "t,ux,uy,uz,vx,vy,vz"
    else:
        header = "t,psi,psidot,pac"
    lines = [header]
    for t, row in zip(traces.times, arr):
        lines.append(_fmt_row([t, *row]))
    path.write_text("\n".join(lines) + "\n")


def read_receiver_csv(path: Path) -> tuple[np.ndarray, np.ndarray, str]:
    """Returns (times, columns, header) for a seismogram CSV."""
    text = path.read_text().strip().splitlines()
    header = text[0]
    arr = np.array([[float(v) for v in ln.split(",")] for ln in text[1:]])
    return arr[:, 0], arr[:, 1:], header


def write_peak_map_csv(path: Path, rows: np.ndarray) -> None:
    lines = ["x,y,z,pgu_gmh,pgv_gmh"]
    lines += [_fmt_row(r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def write_section_csv(path: Path, points: np.ndarray, values: np.ndarray) -> None:
    lines = ["s,x,y,z,uperp_max"]
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))])
    for si, p, v in zip(s, points, values):
        lines.append(_fmt_row([si, *p, v]))
    path.write_text("\n".join(lines) + "\n")
