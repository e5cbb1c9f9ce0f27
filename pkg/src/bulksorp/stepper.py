"""Positivity-preserving IMEX integration of the coupled bulk-surface system.

One step is a sequential splitting:

1. explicit first-order upwind advection (bulk),
2. Patankar-Euler update of bulk and surface reactions,
3. modified-Patankar sorption exchange: backward Euler in the bulk trace and
   surface concentration with the occupancy-dependent adsorption factor
   resolved by fixed-point iteration, which keeps the exchange exactly
   conservative,
4. backward-Euler diffusion in bulk and on the surface, solved by CG.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .disc import (Grid, SparseOperator, State, VelocityField, advective_rate, assemble_advection,
                   assemble_bulk_diffusion, assemble_surface_diffusion, total_mass)
from .errors import DomainError, StepFailure, UsageError
from .model import ReactionNetwork, SorptionModel, SpeciesSystem

log = logging.getLogger(__name__)

NORM_COLUMNS = ("l1_bulk", "l2_bulk", "linf_bulk", "l1_surf", "l2_surf", "linf_surf")


@dataclass(frozen=True)
class StepperConfig:
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = 5e-3
    cfl: float = 0.9
    lin_tol: float = 1e-12
    max_lin_iter: int = 2000
    blowup_threshold: float = 1e6
    positivity_tol: float = 1e-12
    output_every: float = 0.1
    max_rel_change: float = 0.1
    grow_after: int = 5
    picard_tol: float = 1e-13
    picard_max_iter: int = 200
    record_steps: bool = False

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise UsageError("need 0 < dt_min <= dt_init <= dt_max")
        if not 0 < self.cfl <= 1:
            raise UsageError("cfl must lie in (0, 1]")
        if not self.blowup_threshold > 0:
            raise UsageError("blowup_threshold must be positive")
        if not self.output_every > 0:
            raise UsageError("output_every must be positive")
        if not self.lin_tol > 0:
            raise UsageError("lin_tol must be positive")


@dataclass(frozen=True)
class Problem:
    grid: Grid
    species: SpeciesSystem
    sorption: SorptionModel
    bulk_reactions: ReactionNetwork
    surface_reactions: ReactionNetwork
    velocity: VelocityField = field(default_factory=VelocityField)

    def __post_init__(self):
        n = self.species.n_species
        for what, m in (("sorption model", self.sorption.n_species),
                        ("bulk network", self.bulk_reactions.n_species),
                        ("surface network", self.surface_reactions.n_species)):
            if m != n:
                raise UsageError(f"{what} has {m} species, expected {n}")

    def has_reactions(self) -> bool:
        return self.bulk_reactions.n_reactions > 0 or self.surface_reactions.n_reactions > 0


@dataclass
class StepRecord:
    """Frozen data of one accepted step, enough to replay it on auxiliary problems."""

    t: float
    dt: float
    reaction_bulk: np.ndarray  # increment applied by the reaction substep
    reaction_surf: np.ndarray
    trace: np.ndarray  # bulk trace used by the implicit sorption exchange
    surf_after_sorption: np.ndarray
    state: State  # state after the full step


@dataclass(frozen=True)
class BlowupInfo:
    trigger_time: float
    t_est: float | None


@dataclass
class RunResult:
    times: np.ndarray
    norms: np.ndarray  # (n_times, N, 6) in NORM_COLUMNS order
    masses: np.ndarray  # (n_times, N)
    final_state: State
    reason: str  # reached_T | blowup | dt_underflow
    blowup: BlowupInfo | None
    sup_times: np.ndarray
    sup_values: np.ndarray
    min_value: float
    n_steps: int
    n_rejected: int
    snapshots: list[State] = field(default_factory=list)
    records: list[StepRecord] = field(default_factory=list)


def solve_spd(operator, rhs: np.ndarray, tol: float = 1e-12, max_iter: int = 2000,
              x0: np.ndarray | None = None) -> np.ndarray:
    """Conjugate gradients to relative residual ``tol``; raises :class:`StepFailure` otherwise."""
    rhs = np.asarray(rhs, dtype=float)
    norm_b = np.linalg.norm(rhs)
    if norm_b == 0.0:
        return np.zeros_like(rhs)
    x, info = cg(operator, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter)
    if info != 0:
        raise StepFailure(f"CG did not converge (info={info})")
    return x


def norms(grid: Grid, state: State) -> np.ndarray:
    """Per-species ``(L1, L2, Linf)`` of bulk then surface fields, shape ``(N, 6)``."""
    V, a = grid.cell_volume, grid.face_area
    c, cs = np.abs(state.c), np.abs(state.c_surf)
    return np.column_stack([
        c @ V, np.sqrt((c**2) @ V), c.max(axis=1),
        cs @ a, np.sqrt((cs**2) @ a), cs.max(axis=1),
    ])


class Integrator:
    """Pre-assembled operators plus the step and run drivers for one :class:`Problem`."""

    def __init__(self, problem: Problem, config: StepperConfig | None = None):
        self.problem = problem
        self.config = config or StepperConfig()
        grid, species = problem.grid, problem.species
        self.bulk_ops = [assemble_bulk_diffusion(grid, d) for d in species.d_bulk]
        self.surf_ops = [assemble_surface_diffusion(grid, d) for d in species.d_surf]
        self.bulk_flux = [op.flux_matrix() for op in self.bulk_ops]
        self.surf_flux = [op.flux_matrix() for op in self.surf_ops]
        self.advection: SparseOperator = assemble_advection(grid, problem.velocity)
        self.adv_rate = advective_rate(self.advection)
        self._face_weight = grid.face_area / grid.cell_volume[grid.face_cell]
        # colour k holds the k-th face of every cell, so faces of one colour never share a cell
        rank = np.zeros(grid.n_faces, dtype=int)
        seen: dict[int, int] = {}
        for f, k in enumerate(grid.face_cell):
            rank[f] = seen.get(int(k), 0)
            seen[int(k)] = rank[f] + 1
        self._face_colours = [rank == r for r in range(int(rank.max(initial=-1)) + 1)]
        self._cache_dt: float | None = None
        self._cache: tuple[list, list] = ([], [])

    # -- substeps -------------------------------------------------------

    def cfl_dt(self) -> float:
        return np.inf if self.adv_rate == 0 else self.config.cfl / self.adv_rate

    def advect(self, c: np.ndarray, dt: float) -> np.ndarray:
        if self.adv_rate == 0:
            return c
        if dt * self.adv_rate > self.config.cfl * (1 + 1e-12):
            raise StepFailure("advective CFL bound violated")
        return c + dt * (self.advection.matrix @ c.T).T

    def react(self, c: np.ndarray, net: ReactionNetwork, dt: float) -> np.ndarray:
        if net.n_reactions == 0:
            return c
        prod, dest_rel = net.production_destruction(c)
        return (c + dt * prod) / (1.0 + dt * dest_rel)

    def sorb(self, c: np.ndarray, cs: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Implicit bulk-surface exchange; returns the new bulk and surface fields."""
        model, grid = self.problem.sorption, self.problem.grid
        cells = grid.face_cell
        k_ad = model.k_ad[:, None]
        k_de = model.k_de[:, None]
        w = dt * self._face_weight[None, :] / (1.0 + dt * k_de)
        de_in = w * k_de * cs
        theta = model.occupancy(cs)
        henry = model.variant == "henry"
        tol = self.config.picard_tol

        def exchange(th):
            ad = k_ad * model.adsorption_factor(th)
            num = c.copy()
            den = np.ones_like(c)
            np.add.at(num.T, cells, de_in.T)
            np.add.at(den.T, cells, (w * ad).T)
            c_new = num / den
            return c_new, (cs + dt * ad * c_new[:, cells]) / (1.0 + dt * k_de)

        def residual(th):
            c_new, cs_new = exchange(th)
            g = model.occupancy(cs_new)
            return c_new, cs_new, g, g - th

        def converged(g, f, mask=True):
            return np.max(np.abs(f) * mask, initial=0.0) <= tol * (1.0 + np.max(g, initial=0.0))

        c_new, cs_new, g, f = residual(theta)
        if henry:
            return c_new, cs_new
        # Nonlinear Gauss-Seidel over the face colours. Within a colour each
        # face sees a scalar equation F(theta) = G(theta) - theta with G >= 0,
        # so F changes sign; brackets are built from the signs seen and secant
        # steps are kept inside them, with bisection (or substitution while
        # unbounded) as fallback.
        for _ in range(self.config.picard_max_iter):
            if converged(g, f):
                return c_new, cs_new
            for mask in self._face_colours:
                lo = np.zeros_like(theta)
                hi = np.full_like(theta, np.inf)
                prev_t = prev_f = None
                for _ in range(self.config.picard_max_iter):
                    if converged(g, f, mask):
                        break
                    lo = np.where(f > 0, np.maximum(lo, theta), lo)
                    hi = np.where(f < 0, np.minimum(hi, theta), hi)
                    bounded = np.isfinite(hi)
                    fallback = np.where(bounded, 0.5 * (lo + np.where(bounded, hi, 0.0)), np.maximum(g, lo))
                    if prev_f is None:
                        cand = g
                    else:
                        with np.errstate(divide="ignore", invalid="ignore"):
                            cand = theta - f * (theta - prev_t) / (f - prev_f)
                        slow = bounded & (np.abs(f) > 0.5 * np.abs(prev_f))
                        ok = np.isfinite(cand) & (cand > lo) & (cand < hi) & ~slow
                        cand = np.where(ok, cand, fallback)
                    prev_t, prev_f = theta, f
                    theta = np.where(mask & (f != 0), cand, theta)
                    c_new, cs_new, g, f = residual(theta)
                else:
                    break
        raise StepFailure("sorption fixed-point iteration did not converge")

    def _systems(self, dt: float) -> tuple[list, list]:
        """``diag(w) - dt * flux`` for every species, cached for the most recent ``dt``."""
        if self._cache_dt != dt:
            V, a = self.problem.grid.cell_volume, self.problem.grid.face_area
            self._cache = ([(sp.diags(V) - dt * f).tocsr() for f in self.bulk_flux],
                           [(sp.diags(a) - dt * f).tocsr() for f in self.surf_flux])
            self._cache_dt = dt
        return self._cache

    def diffuse_bulk(self, c: np.ndarray, dt: float) -> np.ndarray:
        V = self.problem.grid.cell_volume
        out = np.empty_like(c)
        for i, mat in enumerate(self._systems(dt)[0]):
            out[i] = solve_spd(mat, V * c[i], self.config.lin_tol, self.config.max_lin_iter, x0=c[i])
        return out

    def diffuse_surface(self, cs: np.ndarray, dt: float) -> np.ndarray:
        if self.problem.grid.dim == 1:
            return cs
        a = self.problem.grid.face_area
        out = np.empty_like(cs)
        for i, mat in enumerate(self._systems(dt)[1]):
            out[i] = solve_spd(mat, a * cs[i], self.config.lin_tol, self.config.max_lin_iter, x0=cs[i])
        return out

    # -- one step -------------------------------------------------------

    def step(self, state: State, dt: float, record: bool = False):
        """Advance ``state`` by ``dt``; returns the new state (and a :class:`StepRecord` if asked)."""
        if not dt > 0:
            raise UsageError("dt must be positive")
        p = self.problem
        c = self.advect(state.c, dt)
        c_r = self.react(c, p.bulk_reactions, dt)
        cs_r = self.react(state.c_surf, p.surface_reactions, dt)
        c_s, cs_s = self.sorb(c_r, cs_r, dt)
        c_new = self.diffuse_bulk(c_s, dt)
        cs_new = self.diffuse_surface(cs_s, dt)
        new = State(state.t + dt, c_new, cs_new)
        if not (np.all(np.isfinite(c_new)) and np.all(np.isfinite(cs_new))):
            raise StepFailure("non-finite values")
        if new.min_value() < -self.config.positivity_tol:
            raise StepFailure(f"negative concentration {new.min_value():.3e}")
        if not record:
            return new
        rec = StepRecord(state.t, dt, c_r - c, cs_r - state.c_surf, c_s[:, p.grid.face_cell].copy(),
                         cs_s.copy(), new)
        return new, rec

    # -- driver ---------------------------------------------------------

    def run(self, initial: State, t_end: float) -> RunResult:
        cfg, grid = self.config, self.problem.grid
        initial.validate(grid, self.problem.species.n_species)
        if not initial.is_nonnegative():
            raise DomainError("initial state must be nonnegative")
        if not t_end > initial.t:
            raise UsageError("t_end must exceed the initial time")
        eps = 1e-12 * max(1.0, abs(t_end))
        state = initial
        dt = cfg.dt_init
        streak = 0
        n_steps = n_rejected = 0
        times, norm_rows, mass_rows, snaps = [], [], [], []
        sup_t, sup_v = [state.t], [state.sup_norm()]
        min_value = state.min_value()
        records: list[StepRecord] = []

        def sample(s: State):
            times.append(s.t)
            norm_rows.append(norms(grid, s))
            mass_rows.append(total_mass(grid, s))
            snaps.append(s)

        sample(state)
        k_out = 1
        next_out = min(initial.t + k_out * cfg.output_every, t_end)
        reason, blowup = "reached_T", None
        cfl_cap = self.cfl_dt()

        while t_end - state.t > eps:
            dt = min(dt, cfg.dt_max, cfl_cap)
            if dt < cfg.dt_min:
                reason = "dt_underflow"
                break
            dt_try = dt
            hits_output = False
            if state.t + dt_try >= next_out - eps:
                dt_try = next_out - state.t
                hits_output = True
            try:
                out = self.step(state, dt_try, record=cfg.record_steps)
            except StepFailure as exc:
                log.debug("step at t=%.6g dt=%.3g failed: %s", state.t, dt_try, exc)
                n_rejected += 1
                dt = dt_try / 2
                streak = 0
                continue
            new, rec = out if cfg.record_steps else (out, None)
            old_sup, new_sup = state.sup_norm(), new.sup_norm()
            if old_sup > 0 and abs(new_sup - old_sup) > cfg.max_rel_change * old_sup:
                n_rejected += 1
                dt = dt_try / 2
                streak = 0
                continue
            if hits_output:
                new = State(next_out, new.c, new.c_surf)
                if rec is not None:
                    rec.state = new
            state = new
            n_steps += 1
            if rec is not None:
                records.append(rec)
            sup_t.append(state.t)
            sup_v.append(new_sup)
            min_value = min(min_value, state.min_value())
            streak += 1
            if streak >= cfg.grow_after:
                dt = min(2 * dt, cfg.dt_max)
                streak = 0
            if new_sup >= cfg.blowup_threshold:
                sample(state)
                t_est = estimate_blowup(sup_t, sup_v, threshold=cfg.blowup_threshold)
                reason, blowup = "blowup", BlowupInfo(state.t, t_est)
                break
            if hits_output:
                sample(state)
                k_out += 1
                next_out = min(initial.t + k_out * cfg.output_every, t_end)

        if times[-1] != state.t:
            sample(state)
        return RunResult(
            times=np.array(times), norms=np.array(norm_rows), masses=np.array(mass_rows),
            final_state=state, reason=reason, blowup=blowup,
            sup_times=np.array(sup_t), sup_values=np.array(sup_v), min_value=min_value,
            n_steps=n_steps, n_rejected=n_rejected, snapshots=snaps, records=records,
        )


def step(state: State, dt: float, problem: Problem, config: StepperConfig | None = None) -> State:
    return Integrator(problem, config).step(state, dt)


def run(initial: State, t_end: float, problem: Problem, config: StepperConfig | None = None) -> RunResult:
    return Integrator(problem, config).run(initial, t_end)


def estimate_blowup(times, sups, threshold: float | None = None, window: int = 8,
                    min_samples: int | None = None) -> float | None:
    """Root of the least-squares line through ``(t, 1 / sup)`` over the last ``window`` samples.

    With a ``threshold`` only samples whose sup-norm exceeds ``threshold / 10``
    are used and at least 4 are required.  Returns ``None`` unless the fitted
    slope is negative.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(sups, dtype=float)
    if threshold is not None:
        keep = s > threshold / 10
        t, s = t[keep], s[keep]
    if min_samples is None:
        min_samples = 4 if threshold is not None else 2
    if t.size < max(min_samples, 2) or np.any(s <= 0):
        return None
    t, y = t[-window:], 1.0 / s[-window:]
    slope, intercept = np.polyfit(t, y, 1)
    # a slope at round-off level is a constant series
    if not slope < -1e-10 * np.max(np.abs(y)) / max(np.ptp(t), np.finfo(float).tiny):
        return None
    return float(-intercept / slope)
