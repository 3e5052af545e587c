"""Matrix-free actions of every term in the semi-discrete coupled system.

Degrees of freedom are block-conforming (nodes at identical coordinates
within one block share a dof) and block-discontinuous (never shared
across DG/EA interfaces).  Mass matrices are diagonal by GLL
collocation; stiffness, interface-flux, coupling and absorbing-boundary
terms are applied element- and face-wise without ever forming a global
matrix.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import sem_basis as sb
from .errors import MaterialError, MeshFormatError, NumericsError
from .materials import AcousticMaterial, ElasticMaterial, MaterialMap
from .mesh import BlockKind, DGFacePair, FaceTag, Mesh


@dataclass(frozen=True)
class PenaltyConfig:
    """Interior-penalty multiplier; the face penalty is
    beta * harmonic(lambda + 2 mu) * p_F^2 / h_F."""

    beta: float = 1.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"penalty multiplier must be positive, got {self.beta}")


@dataclass
class State:
    """Solution vectors on elastic (vector) and acoustic (scalar) dofs."""

    u: np.ndarray
    udot: np.ndarray
    uddot: np.ndarray
    psi: np.ndarray
    psidot: np.ndarray
    psiddot: np.ndarray
    t: float = 0.0
    step: int = 0

    @staticmethod
    def zeros(n_elastic: int, n_acoustic: int) -> "State":
        e = lambda: np.zeros((n_elastic, 3))
        a = lambda: np.zeros(n_acoustic)
        return State(e(), e(), e(), a(), a(), a())

    def check_finite(self) -> None:
        for name in ("u", "udot", "uddot", "psi", "psidot", "psiddot"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NumericsError(f"non-finite values in {name} at step {self.step} (t={self.t:.6g})")


# ---------------------------------------------------------------------------
# dof numbering


@dataclass
class BlockDofs:
    block_id: int
    kind: BlockKind
    p: int
    element_ids: np.ndarray  # (e,)
    conn: np.ndarray  # (e, n) block-local node ids
    coords: np.ndarray  # (n_block, 3)
    offset: int  # into the global elastic or acoustic numbering


@dataclass
class DofMap:
    blocks: list[BlockDofs]
    n_elastic: int
    n_acoustic: int
    elem_loc: dict[int, tuple[int, int]]  # element id -> (block index, row)


def build_dofmap(mesh: Mesh) -> DofMap:
    """Number dofs block by block, merging coincident nodes within a block.

    All elements of a block must share one polynomial degree (conforming
    spectral elements inside a block).  The coordinate merge tolerance is
    1e-10 times the mean element diameter of the block.
    """
    blocks: list[BlockDofs] = []
    elem_loc: dict[int, tuple[int, int]] = {}
    n_e = n_a = 0
    for bid in sorted(mesh.blocks):
        els = [el for el in mesh.elements if el.block_id == bid]
        if not els:
            raise MeshFormatError(f"block {bid} has no elements")
        degrees = {el.p for el in els}
        if len(degrees) > 1:
            raise MeshFormatError(f"block {bid} mixes polynomial degrees {sorted(degrees)}")
        p = els[0].p
        basis = sb.gll(p)
        ref = sb.tensor_nodes(basis)
        pts = np.concatenate([sb.map_to_physical(mesh.corner_coords(el.id), ref)[0] for el in els])
        tol = 1e-10 * float(np.mean([mesh.element_diameter(el.id) for el in els]))
        owner = _merge_coincident(pts, tol)
        # renumber by first occurrence so ids are deterministic and contiguous
        order: dict[int, int] = {}
        ids = np.empty(len(pts), dtype=np.int64)
        for i, r in enumerate(owner):
            if r not in order:
                order[r] = len(order)
            ids[i] = order[r]
        n_block = len(order)
        coords = np.empty((n_block, 3))
        coords[ids] = pts
        kind = mesh.blocks[bid]
        offset = n_e if kind is BlockKind.ELASTIC else n_a
        bd = BlockDofs(
            bid, kind, p,
            np.array([el.id for el in els], dtype=np.int64),
            ids.reshape(len(els), -1), coords, offset,
        )
        for row, el in enumerate(els):
            elem_loc[el.id] = (len(blocks), row)
        blocks.append(bd)
        if kind is BlockKind.ELASTIC:
            n_e += n_block
        else:
            n_a += n_block
    return DofMap(blocks, n_e, n_a, elem_loc)


def _merge_coincident(pts: np.ndarray, tol: float) -> np.ndarray:
    """Union-find over point pairs closer than tol; returns root per point."""
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    return np.array([find(i) for i in range(len(pts))])


# ---------------------------------------------------------------------------
# per-block tabulated data


@dataclass
class _Block:
    bd: BlockDofs
    basis: sb.Basis1D
    gconn: np.ndarray  # (e, q) global dof ids
    jinv: np.ndarray  # (e, q, 3, 3) rows: grad xi_r
    wdetj: np.ndarray  # (e, q)
    coords: np.ndarray  # (e, q, 3)
    # elastic material arrays (None on acoustic blocks)
    rho: np.ndarray | None = None
    lam: np.ndarray | None = None
    mu: np.ndarray | None = None
    zeta: np.ndarray | None = None
    # acoustic material (block constant)
    ac: AcousticMaterial | None = None


@dataclass
class _PairSide:
    gdofs: np.ndarray  # (n,)
    bvals: np.ndarray  # (nq, n)
    grads: np.ndarray  # (nq, n, 3) physical basis gradients
    lam: float = 0.0
    mu: float = 0.0


@dataclass
class _DGPairOps:
    plus: _PairSide
    minus: _PairSide
    normal: np.ndarray
    w: np.ndarray
    chi: float


@dataclass
class _EAPairOps:
    elastic: _PairSide
    acoustic: _PairSide
    n_elastic: np.ndarray  # outward normal of the elastic side
    w: np.ndarray
    rho_a: float


@dataclass
class _FaceGroup:
    """Flattened per-node data of a set of tagged boundary faces."""

    gdofs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    normals: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    coords: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))


class Discretization:
    """Tabulated mesh/material data plus all operator applications."""

    def __init__(self, mesh: Mesh, materials: MaterialMap, penalty: PenaltyConfig | None = None,
                 workers: int = 1):
        self.mesh = mesh
        self.materials = materials
        self.penalty = penalty or PenaltyConfig()
        self.workers = max(1, int(workers))
        self._pool: ThreadPoolExecutor | None = None
        self.dofmap = build_dofmap(mesh)
        self.n_elastic = self.dofmap.n_elastic
        self.n_acoustic = self.dofmap.n_acoustic

        self._blocks: list[_Block] = [self._tabulate_block(bd) for bd in self.dofmap.blocks]
        self._assemble_masses()
        self._collect_boundary_groups()
        self._dg_ops = [self._build_dg_pair(pr) for pr in mesh.dg_pairs]
        self._ea_ops = [self._build_ea_pair(pr) for pr in mesh.ea_pairs]
        self._elastic_tree: cKDTree | None = None

    # -- setup ---------------------------------------------------------

    def _tabulate_block(self, bd: BlockDofs) -> _Block:
        basis = sb.gll(bd.p)
        geos = [sb.element_geometry(self.mesh.corner_coords(int(e)), basis, int(e)) for e in bd.element_ids]
        w3 = sb.tensor_weights(basis)
        jinv = np.stack([g.inv for g in geos])
        wdetj = np.stack([g.det * w3 for g in geos])
        coords = np.stack([g.coords for g in geos])
        gconn = bd.conn + bd.offset
        blk = _Block(bd, basis, gconn, jinv, wdetj, coords)
        if bd.kind is BlockKind.ELASTIC:
            mats = [self.materials.elastic[int(e)] for e in bd.element_ids]
            blk.rho = np.array([m.rho for m in mats])
            blk.lam = np.array([m.lam for m in mats])
            blk.mu = np.array([m.mu for m in mats])
            blk.zeta = np.array([m.zeta for m in mats])
        else:
            acs = {self.materials.acoustic[int(e)] for e in bd.element_ids}
            if len(acs) != 1:
                raise MaterialError(f"acoustic block {bd.block_id} must have one material")
            blk.ac = next(iter(acs))
        return blk

    def _assemble_masses(self) -> None:
        m2e = np.zeros(self.n_elastic)
        m1e = np.zeros(self.n_elastic)
        m0e = np.zeros(self.n_elastic)
        vol = np.zeros(self.n_elastic)
        m2a = np.zeros(self.n_acoustic)
        rho_a = np.zeros(self.n_acoustic)
        bc2 = np.zeros(self.n_acoustic)
        for blk in self._blocks:
            idx = blk.gconn.ravel()
            if blk.bd.kind is BlockKind.ELASTIC:
                rw = (blk.rho[:, None] * blk.wdetj).ravel()
                z = blk.zeta[:, None]
                m2e += np.bincount(idx, rw, minlength=self.n_elastic)
                m1e += np.bincount(idx, (2.0 * z * blk.rho[:, None] * blk.wdetj).ravel(), minlength=self.n_elastic)
                m0e += np.bincount(idx, (z * z * blk.rho[:, None] * blk.wdetj).ravel(), minlength=self.n_elastic)
                vol += np.bincount(idx, blk.wdetj.ravel(), minlength=self.n_elastic)
            else:
                ac = blk.ac
                m2a += np.bincount(idx, (blk.wdetj / ac.c**2).ravel(), minlength=self.n_acoustic)
                sl = slice(blk.bd.offset, blk.bd.offset + len(blk.bd.coords))
                rho_a[sl] = ac.rho
                bc2[sl] = ac.b / ac.c**2
        if self.n_elastic and m2e.min() <= 0:
            raise MaterialError(f"zero elastic mass entry (orphan dof {int(np.argmin(m2e))})")
        if self.n_acoustic and m2a.min() <= 0:
            raise MaterialError(f"zero acoustic mass entry (orphan dof {int(np.argmin(m2a))})")
        self.m2_elastic, self.m1_elastic, self.m0_elastic = m2e, m1e, m0e
        self.m2_acoustic = m2a
        self.rho_acoustic_node = rho_a
        self.bc2_acoustic = bc2
        self.lumped_volume = vol

    def _collect_boundary_groups(self) -> None:
        abc_e = _FaceGroup()
        abc_a = _FaceGroup()
        free_e = _FaceGroup()
        a_elastic = np.zeros((self.n_elastic, 3, 3))
        c_abc = np.zeros(self.n_acoustic)
        parts: dict[str, list] = {"ed": [], "en": [], "ew": [], "ec": [],
                                  "fd": [], "fn": [], "fw": [], "fc": [],
                                  "ad": [], "aw": []}
        for bf in self.mesh.boundary_faces:
            if bf.tag in (FaceTag.DG_INTERFACE, FaceTag.EA_INTERFACE):
                continue
            dofs, normals, wts, coords = self._face_nodal_data(bf.element_id, bf.local_face)
            if bf.tag is FaceTag.ABC_ELASTIC:
                mat = self.materials.elastic[bf.element_id]
                nn = np.einsum("ni,nj->nij", normals, normals)
                a_node = mat.rho * (mat.vp * nn + mat.vs * (np.eye(3)[None] - nn))
                np.add.at(a_elastic, dofs, wts[:, None, None] * a_node)
                parts["ed"].append(dofs); parts["en"].append(normals)
                parts["ew"].append(wts); parts["ec"].append(coords)
            elif bf.tag is FaceTag.ABC_ACOUSTIC:
                ac = self._block_of(bf.element_id).ac
                np.add.at(c_abc, dofs, wts / ac.c)
                parts["ad"].append(dofs); parts["aw"].append(wts)
            elif bf.tag is FaceTag.FREE_ELASTIC:
                parts["fd"].append(dofs); parts["fn"].append(normals)
                parts["fw"].append(wts); parts["fc"].append(coords)

        def cat(keys, grp):
            if parts[keys[0]]:
                grp.gdofs = np.concatenate(parts[keys[0]])
                if len(keys) > 2:
                    grp.normals = np.concatenate(parts[keys[1]])
                    grp.weights = np.concatenate(parts[keys[2]])
                    grp.coords = np.concatenate(parts[keys[3]])
                else:
                    grp.weights = np.concatenate(parts[keys[1]])

        cat(("ed", "en", "ew", "ec"), abc_e)
        cat(("fd", "fn", "fw", "fc"), free_e)
        cat(("ad", "aw"), abc_a)
        self.abc_elastic_group = abc_e
        self.abc_acoustic_group = abc_a
        self.free_elastic_group = free_e
        self._abc_elastic_matrix = a_elastic
        self._abc_acoustic_diag = c_abc

    def _block_of(self, element_id: int) -> _Block:
        bi, _ = self.dofmap.elem_loc[element_id]
        return self._blocks[bi]

    def _face_nodal_data(self, element_id: int, local_face: int):
        """Global dofs, outward unit normals, surface weights and coordinates
        of the GLL nodes on one boundary face."""
        bi, row = self.dofmap.elem_loc[element_id]
        blk = self._blocks[bi]
        basis = blk.basis
        fidx = sb.face_node_indices(basis, local_face)
        axis, side = sb.FACE_AXIS[local_face]
        ax_u, ax_v = [a for a in (0, 1, 2) if a != axis]
        corners = self.mesh.corner_coords(element_id)
        ref = sb.tensor_nodes(basis)[fidx]
        _, jac = sb.map_to_physical(corners, ref)
        tu, tv = jac[:, :, ax_u], jac[:, :, ax_v]
        ds = np.linalg.norm(np.cross(tu, tv), axis=1)
        n = side * blk.jinv[row, fidx, axis, :]
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
        w1 = basis.weights
        n1 = basis.n
        grid = np.unravel_index(fidx, (n1, n1, n1))
        wts = w1[grid[ax_u]] * w1[grid[ax_v]] * ds
        return blk.gconn[row, fidx], n, wts, blk.coords[row, fidx]

    def _trace_side(self, element_id: int, qpoints: np.ndarray, need_grads: bool) -> _PairSide:
        bi, row = self.dofmap.elem_loc[element_id]
        blk = self._blocks[bi]
        corners = self.mesh.corner_coords(element_id)
        diam = self.mesh.element_diameter(element_id)
        refs = np.empty((len(qpoints), 3))
        for i, x in enumerate(qpoints):
            r, ok = sb.invert_map(corners, x, diameter=diam)
            if not ok or np.max(np.abs(r)) > 1.0 + 1e-8:
                raise MeshFormatError(
                    f"interface quadrature point {x} not inside element {element_id}"
                )
            refs[i] = np.clip(r, -1.0, 1.0)
        b = blk.basis
        vx, dx = sb.lagrange_eval(b.nodes, refs[:, 0])
        vy, dy = sb.lagrange_eval(b.nodes, refs[:, 1])
        vz, dz = sb.lagrange_eval(b.nodes, refs[:, 2])
        q = len(qpoints)
        bvals = np.einsum("qi,qj,qk->qijk", vx, vy, vz).reshape(q, -1)
        grads = np.empty((q, bvals.shape[1], 3))
        if need_grads:
            gref = np.stack(
                [
                    np.einsum("qi,qj,qk->qijk", dx, vy, vz).reshape(q, -1),
                    np.einsum("qi,qj,qk->qijk", vx, dy, vz).reshape(q, -1),
                    np.einsum("qi,qj,qk->qijk", vx, vy, dz).reshape(q, -1),
                ],
                axis=-1,
            )  # (q, n, refdir)
            _, jac = sb.map_to_physical(corners, refs)
            jinv = np.linalg.inv(jac)
            grads = np.einsum("qnr,qrb->qnb", gref, jinv)
        side = _PairSide(blk.gconn[row], bvals, grads)
        if blk.bd.kind is BlockKind.ELASTIC:
            mat = self.materials.elastic[element_id]
            side.lam, side.mu = mat.lam, mat.mu
        return side

    def trace_operators(self, element_id: int, points: np.ndarray, need_grads: bool = False) -> _PairSide:
        """Basis values (and physical gradients) of one element's basis at
        arbitrary physical points, plus the element's global dof row."""
        return self._trace_side(element_id, points, need_grads)

    def _build_dg_pair(self, pr: DGFacePair) -> _DGPairOps:
        plus = self._trace_side(pr.plus.element_id, pr.qpoints, need_grads=True)
        minus = self._trace_side(pr.minus.element_id, pr.qpoints, need_grads=True)
        mp = plus.lam + 2.0 * plus.mu
        mm = minus.lam + 2.0 * minus.mu
        harm = 2.0 * mp * mm / (mp + mm)
        chi = self.penalty.beta * harm * pr.p_f**2 / pr.h_f
        return _DGPairOps(plus, minus, pr.normal, pr.qweights, chi)

    def _build_ea_pair(self, pr: DGFacePair) -> _EAPairOps:
        kp = self.mesh.block_kind(pr.plus.element_id)
        if kp is BlockKind.ELASTIC:
            e_face, a_face, n_e = pr.plus, pr.minus, -pr.normal
        else:
            e_face, a_face, n_e = pr.minus, pr.plus, pr.normal
        el = self._trace_side(e_face.element_id, pr.qpoints, need_grads=False)
        ac = self._trace_side(a_face.element_id, pr.qpoints, need_grads=False)
        rho_a = self.materials.acoustic[a_face.element_id].rho
        return _EAPairOps(el, ac, n_e, pr.qweights, rho_a)

    # -- stiffness -----------------------------------------------------

    def _pool_map(self, fn, jobs):
        if self.workers == 1 or len(jobs) <= 1:
            return [fn(j) for j in jobs]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.workers)
        return list(self._pool.map(fn, jobs))

    def _chunks(self, n: int) -> list[slice]:
        k = min(self.workers, n)
        bounds = np.linspace(0, n, k + 1).astype(int)
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def apply_elastic_stiffness(self, u: np.ndarray) -> np.ndarray:
        """K_e u: rows are (sigma(u), eps(w)) for every test function w."""
        out = np.zeros((self.n_elastic, 3))
        for blk in self._blocks:
            if blk.bd.kind is not BlockKind.ELASTIC:
                continue
            locs = self._pool_map(
                lambda s, b=blk: _elastic_stiffness_chunk(b, u[b.gconn[s]], s),
                self._chunks(len(blk.bd.element_ids)),
            )
            loc = np.concatenate(locs)
            idx = blk.gconn.ravel()
            for c in range(3):
                out[:, c] += np.bincount(idx, loc[..., c].ravel(), minlength=self.n_elastic)
        return out

    def apply_acoustic_stiffness(self, psi: np.ndarray) -> np.ndarray:
        """K_a psi: rows are (grad psi, grad phi)."""
        out = np.zeros(self.n_acoustic)
        for blk in self._blocks:
            if blk.bd.kind is not BlockKind.ACOUSTIC:
                continue
            locs = self._pool_map(
                lambda s, b=blk: _acoustic_stiffness_chunk(b, psi[b.gconn[s]], s),
                self._chunks(len(blk.bd.element_ids)),
            )
            loc = np.concatenate(locs)
            out += np.bincount(blk.gconn.ravel(), loc.ravel(), minlength=self.n_acoustic)
        return out

    # -- DG interface flux ----------------------------------------------

    def apply_dg_flux(self, u: np.ndarray) -> np.ndarray:
        """(D + D^T - P) u: symmetric interior-penalty flux, added to the
        right-hand side alongside -K_e u."""
        out = np.zeros((self.n_elastic, 3))
        for op in self._dg_ops:
            up, um = u[op.plus.gdofs], u[op.minus.gdofs]
            tp, tm = op.plus.bvals @ up, op.minus.bvals @ um  # (q, 3)
            jump = tp - tm
            sp = _stress_at_q(op.plus, up)
            sm = _stress_at_q(op.minus, um)
            tn = 0.5 * np.einsum("qcb,b->qc", sp + sm, op.normal)  # mean stress . n
            wtn = op.w[:, None] * tn
            wpen = (op.chi * op.w)[:, None] * jump
            # D term: <{sigma(u)}, [[w]]>, P term: -<chi [[u]], [[w]]>
            out[op.plus.gdofs] += op.plus.bvals.T @ (wtn - wpen)
            out[op.minus.gdofs] -= op.minus.bvals.T @ (wtn - wpen)
            # D^T term: <[[u]], {sigma(w)}> with [[u]]_sym = (j x n + n x j)/2
            jdotn = jump @ op.normal
            for side in (op.plus, op.minus):
                t = 0.5 * (
                    side.lam * jdotn[:, None, None] * np.eye(3)[None]
                    + side.mu * (np.einsum("qc,b->qcb", jump, op.normal)
                                 + np.einsum("c,qb->qcb", op.normal, jump))
                )
                out[side.gdofs] += np.einsum("qcb,qab,q->ac", t, side.grads, op.w)
        return out

    # -- elasto-acoustic coupling ---------------------------------------

    def ea_elastic_load(self, psi_tilde_dot: np.ndarray) -> np.ndarray:
        """Interface load on the elastic side: -rho_a psitilde_dot (n . w)."""
        out = np.zeros((self.n_elastic, 3))
        for op in self._ea_ops:
            val = op.acoustic.bvals @ psi_tilde_dot[op.acoustic.gdofs]  # (q,)
            contrib = (-op.rho_a * op.w * val)[:, None] * op.n_elastic[None, :]
            out[op.elastic.gdofs] += op.elastic.bvals.T @ contrib
        return out

    def ea_acoustic_load(self, udot: np.ndarray) -> np.ndarray:
        """Interface load on the acoustic side: -(udot . n_a) phi."""
        out = np.zeros(self.n_acoustic)
        for op in self._ea_ops:
            vtrace = op.elastic.bvals @ udot[op.elastic.gdofs]  # (q, 3)
            vn = vtrace @ (-op.n_elastic)  # acoustic outward normal
            out[op.acoustic.gdofs] += op.acoustic.bvals.T @ (-op.w * vn)
        return out

    def apply_ea_coupling(self, udot: np.ndarray, psidot: np.ndarray, psiddot: np.ndarray):
        """Both interface loads with psitilde_dot = psidot + (b/c^2) psiddot."""
        ptd = psidot + self.bc2_acoustic * psiddot
        return self.ea_elastic_load(ptd), self.ea_acoustic_load(udot)

    # -- absorbing boundaries --------------------------------------------

    def apply_abc_elastic(self, udot: np.ndarray) -> np.ndarray:
        """Viscous traction load -rho (vp (v.n)n + vs v_t) tested against w."""
        return -np.einsum("nij,nj->ni", self._abc_elastic_matrix, udot)

    def apply_abc_acoustic(self, psidot: np.ndarray) -> np.ndarray:
        """-(1/c) psidot tested against phi (diagonal boundary mass)."""
        return -self._abc_acoustic_diag * psidot

    # -- auxiliary loads --------------------------------------------------

    @property
    def elastic_node_coords(self) -> np.ndarray:
        return np.concatenate(
            [b.bd.coords for b in self._blocks if b.bd.kind is BlockKind.ELASTIC]
        ) if self.n_elastic else np.empty((0, 3))

    @property
    def acoustic_node_coords(self) -> np.ndarray:
        return np.concatenate(
            [b.bd.coords for b in self._blocks if b.bd.kind is BlockKind.ACOUSTIC]
        ) if self.n_acoustic else np.empty((0, 3))

    def elastic_node_tree(self) -> cKDTree:
        if self._elastic_tree is None:
            self._elastic_tree = cKDTree(self.elastic_node_coords)
        return self._elastic_tree

    def nodal_body_force(self, f_nodes: np.ndarray) -> np.ndarray:
        """(f, w) by GLL lumping: f sampled at the elastic nodes."""
        return f_nodes * self.lumped_volume[:, None]

    def free_surface_traction_load(self, traction_fn, t: float) -> np.ndarray:
        """(tbar, w) over all FREE-tagged elastic faces; traction_fn maps
        (coords, normals, t) to tractions."""
        grp = self.free_elastic_group
        out = np.zeros((self.n_elastic, 3))
        if len(grp.gdofs) == 0:
            return out
        tr = traction_fn(grp.coords, grp.normals, t) * grp.weights[:, None]
        for c in range(3):
            out[:, c] = np.bincount(grp.gdofs, tr[:, c], minlength=self.n_elastic)
        return out

    # -- diagnostics -------------------------------------------------------

    def energy(self, state: State) -> float:
        """Discrete energy: elastic kinetic + strain (+ zeta^2 mass term)
        plus rho_a-weighted acoustic kinetic + potential energy."""
        e = 0.0
        if self.n_elastic:
            e += 0.5 * float(np.sum(self.m2_elastic * np.sum(state.udot**2, axis=1)))
            ku = self.apply_elastic_stiffness(state.u) - self.apply_dg_flux(state.u)
            e += 0.5 * float(np.sum(state.u * ku))
            e += 0.5 * float(np.sum(self.m0_elastic * np.sum(state.u**2, axis=1)))
        if self.n_acoustic:
            w = self.rho_acoustic_node
            e += 0.5 * float(np.sum(w * self.m2_acoustic * state.psidot**2))
            e += 0.5 * float(np.sum(w * state.psi * self.apply_acoustic_stiffness(state.psi)))
        return e


def _stress_at_q(side: _PairSide, uloc: np.ndarray) -> np.ndarray:
    """Stress tensor at the pair quadrature points from one side's trace."""
    h = np.einsum("qab,ac->qcb", side.grads, uloc)  # du_c/dx_b
    eps = 0.5 * (h + np.swapaxes(h, 1, 2))
    tr = np.trace(eps, axis1=1, axis2=2)
    sig = 2.0 * side.mu * eps
    sig[:, (0, 1, 2), (0, 1, 2)] += side.lam * tr[:, None]
    return sig


def _elastic_stiffness_chunk(blk: _Block, ul: np.ndarray, s: slice) -> np.ndarray:
    e, q = ul.shape[:2]
    m = blk.basis.n
    d = blk.basis.deriv_matrix
    u3 = ul.reshape(e, m, m, m, 3)
    g = np.empty((e, m, m, m, 3, 3))
    g[..., 0] = np.einsum("ai,Eijkc->Eajkc", d, u3)
    g[..., 1] = np.einsum("aj,Eijkc->Eiakc", d, u3)
    g[..., 2] = np.einsum("ak,Eijkc->Eijac", d, u3)
    jinv = blk.jinv[s]
    h = np.einsum("Eqcr,Eqrb->Eqcb", g.reshape(e, q, 3, 3), jinv)
    eps = 0.5 * (h + np.swapaxes(h, 2, 3))
    tr = np.trace(eps, axis1=2, axis2=3)
    sig = 2.0 * blk.mu[s][:, None, None, None] * eps
    sig[:, :, (0, 1, 2), (0, 1, 2)] += blk.lam[s][:, None, None] * tr[:, :, None]
    p = np.einsum("Eqcb,Eqrb,Eq->Eqrc", sig, jinv, blk.wdetj[s])
    p3 = p.reshape(e, m, m, m, 3, 3)  # (..., refdir, comp)
    r = np.einsum("ai,Eajkc->Eijkc", d, p3[..., 0, :])
    r += np.einsum("aj,Eiakc->Eijkc", d, p3[..., 1, :])
    r += np.einsum("ak,Eijac->Eijkc", d, p3[..., 2, :])
    return r.reshape(e, q, 3)


def _acoustic_stiffness_chunk(blk: _Block, pl: np.ndarray, s: slice) -> np.ndarray:
    e, q = pl.shape[:2]
    m = blk.basis.n
    d = blk.basis.deriv_matrix
    p3 = pl.reshape(e, m, m, m)
    g = np.stack(
        [
            np.einsum("ai,Eijk->Eajk", d, p3),
            np.einsum("aj,Eijk->Eiak", d, p3),
            np.einsum("ak,Eijk->Eija", d, p3),
        ],
        axis=-1,
    ).reshape(e, q, 3)
    jinv = blk.jinv[s]
    grad = np.einsum("Eqr,Eqrb->Eqb", g, jinv)
    f = np.einsum("Eqb,Eqrb,Eq->Eqr", grad, jinv, blk.wdetj[s]).reshape(e, m, m, m, 3)
    r = np.einsum("ai,Eajk->Eijk", d, f[..., 0])
    r += np.einsum("aj,Eiak->Eijk", d, f[..., 1])
    r += np.einsum("ak,Eija->Eijk", d, f[..., 2])
    return r.reshape(e, q)
