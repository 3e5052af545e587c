"""Leap-frog predictor-corrector time integration with acoustic sub-cycling.

One global step advances the elastic field by dt while the acoustic
field is advanced in n_loc substeps of dt/n_loc; elastic interface
traces are frozen at their predicted values and interpolated linearly
in substep time.  With n_loc = 1 the loop degenerates to the plain
coupled leap-frog step along the identical arithmetic path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .materials import MaterialMap
from .mesh import BlockKind, Mesh, min_edge_length
from .operators import Discretization, State


@dataclass
class TimeConfig:
    dt: float
    n_steps: int
    n_loc: int = 1
    cfl_safety: float = 0.5
    nan_check_interval: int = 100

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0 or self.n_loc < 1:
            raise ConfigError("n_steps must be >= 0 and n_loc >= 1")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError(f"cfl_safety must be in (0, 1], got {self.cfl_safety}")


def predict(phi: np.ndarray, dphi: np.ndarray, ddphi: np.ndarray, dt: float):
    """phi_pred = phi + dt phidot + dt^2/2 phiddot; phidot_pred likewise."""
    return phi + dt * dphi + (0.5 * dt * dt) * ddphi, dphi + (0.5 * dt) * ddphi


def correct(dphi_pred: np.ndarray, ddphi_new: np.ndarray, dt: float) -> np.ndarray:
    """phidot_new = phidot_pred + dt/2 phiddot_new."""
    return dphi_pred + (0.5 * dt) * ddphi_new


def estimate_dt_max(mesh: Mesh, materials: MaterialMap, n_loc: int = 1, beta: float = 1.0) -> float:
    """Explicit step estimate min_e h_e / (v_max p^2), h_e the shortest edge.

    Elements touching a DG interface are additionally reduced by
    1/sqrt(1 + beta) to account for the penalty stiffening; acoustic
    elements gain the factor n_loc from sub-cycling.
    """
    dg_elems = set()
    for pr in mesh.dg_pairs:
        dg_elems.add(pr.plus.element_id)
        dg_elems.add(pr.minus.element_id)
    dt = np.inf
    for el in mesh.elements:
        h = min_edge_length(mesh, el)
        if mesh.block_kind(el.id) is BlockKind.ELASTIC:
            v = materials.elastic[el.id].vp
            d = h / (v * el.p**2)
            if el.id in dg_elems:
                d /= np.sqrt(1.0 + beta)
        else:
            v = materials.acoustic[el.id].c
            d = n_loc * h / (v * el.p**2)
        dt = min(dt, d)
    return float(dt)


class Integrator:
    """Advances a State through the coupled semi-discrete system.

    elastic_loads are callables t -> (n_elastic, 3) load vector; they are
    summed into the right-hand side of the elastic solve (kinematic and
    plane-wave sources, manufactured body forces / tractions).
    """

    def __init__(self, disc: Discretization, config: TimeConfig, elastic_loads=()):
        self.disc = disc
        self.config = config
        self.elastic_loads = list(elastic_loads)
        self.state = State.zeros(disc.n_elastic, disc.n_acoustic)
        self._initialized = False

    def _external_load(self, t: float) -> np.ndarray | None:
        if not self.elastic_loads:
            return None
        out = self.elastic_loads[0](t)
        for ld in self.elastic_loads[1:]:
            out = out + ld(t)
        return out

    def _acoustic_rhs(self, psi_pred, psidot_pred, udot_trace) -> np.ndarray:
        d = self.disc
        psi_tilde = psi_pred + d.bc2_acoustic * psidot_pred
        rhs = -d.apply_acoustic_stiffness(psi_tilde)
        rhs += d.apply_abc_acoustic(psidot_pred)
        if d._ea_ops:
            rhs += d.ea_acoustic_load(udot_trace)
        return rhs

    def _elastic_rhs(self, u_pred, udot_pred, psi_tilde_dot, t_new) -> np.ndarray:
        d = self.disc
        rhs = -d.apply_elastic_stiffness(u_pred)
        if d._dg_ops:
            rhs += d.apply_dg_flux(u_pred)
        rhs -= d.m1_elastic[:, None] * udot_pred
        rhs -= d.m0_elastic[:, None] * u_pred
        rhs += d.apply_abc_elastic(udot_pred)
        if d._ea_ops:
            rhs += d.ea_elastic_load(psi_tilde_dot)
        ext = self._external_load(t_new)
        if ext is not None:
            rhs += ext
        return rhs

    def initialize_accelerations(self) -> None:
        """Consistent accelerations for the current (u, udot, psi, psidot)."""
        s, d = self.state, self.disc
        if d.n_acoustic:
            s.psiddot = self._acoustic_rhs(s.psi, s.psidot, s.udot) / d.m2_acoustic
        if d.n_elastic:
            ptd = s.psidot + d.bc2_acoustic * s.psiddot
            s.uddot = self._elastic_rhs(s.u, s.udot, ptd, s.t) / d.m2_elastic[:, None]
        self._initialized = True

    def advance_global_step(self) -> None:
        if not self._initialized:
            self.initialize_accelerations()
        s, d, cfg = self.state, self.disc, self.config
        dt = cfg.dt
        u_pred, udot_pred = predict(s.u, s.udot, s.uddot, dt)
        if d.n_acoustic:
            sub_dt = dt / cfg.n_loc
            for m in range(cfg.n_loc):
                psi_pred, psidot_pred = predict(s.psi, s.psidot, s.psiddot, sub_dt)
                tau = (m + 0.5) * sub_dt
                udot_trace = s.udot + tau * s.uddot
                psiddot_new = self._acoustic_rhs(psi_pred, psidot_pred, udot_trace) / d.m2_acoustic
                s.psi = psi_pred
                s.psidot = correct(psidot_pred, psiddot_new, sub_dt)
                s.psiddot = psiddot_new
        if d.n_elastic:
            psi_tilde_dot = s.psidot + d.bc2_acoustic * s.psiddot
            uddot_new = self._elastic_rhs(u_pred, udot_pred, psi_tilde_dot, s.t + dt) / d.m2_elastic[:, None]
            s.u = u_pred
            s.udot = correct(udot_pred, uddot_new, dt)
            s.uddot = uddot_new
        s.t += dt
        s.step += 1

    def run(self, on_step=None) -> State:
        """Advance n_steps global steps with periodic NaN checks."""
        cfg = self.config
        for _ in range(cfg.n_steps):
            self.advance_global_step()
            if cfg.nan_check_interval and self.state.step % cfg.nan_check_interval == 0:
                self.state.check_finite()
            if on_step is not None:
                on_step(self.state)
        self.state.check_finite()
        return self.state
