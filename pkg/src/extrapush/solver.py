"""Matrix-form iteration engines.

Every engine performs one stacked-gradient evaluation per round, reuses the
previous round's gradient for the two-step difference, and caches ``A z`` so the
``Abar``-weighted term costs no extra mixing: ``Abar z = (z + A z)/2``.
"""
from __future__ import annotations

import csv
import math
import os
import re
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .analysis import residual_opt
from .constants import LOAD_TOL, WEIGHT_FLOOR
from .graph import MixingMatrix, stationary_distribution
from .objective import ObjectiveSuite, grad_stack

FIXED_STEP = ("extra", "extrapush", "normalized-extrapush",
              "normalized-extrapush-z", "normalized-extrapush-x")
ALGORITHMS = FIXED_STEP[:2] + ("subgradient-push",) + FIXED_STEP[2:]

CSV_HEADER = ("t", "err_opt", "consensus", "residual_opt", "residual_feas", "alpha_t")


class SolverError(RuntimeError):
    pass


# -- step-size schedules ------------------------------------------------------

@dataclass(frozen=True)
class InverseSqrtSchedule:
    """``alpha_t = c / sqrt(t + t0)``: diverging sum, summable squares, non-increasing."""

    c: float
    t0: float = 0.0
    validated = True

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"schedule constant must be positive, got {self.c}")
        if self.t0 < 0:
            raise ValueError(f"schedule offset must be non-negative, got {self.t0}")

    def __call__(self, t: int) -> float:
        return self.c / math.sqrt(t + self.t0)

    def __str__(self):
        return f"{self.c:g}/sqrt(t+{self.t0:g})" if self.t0 else f"{self.c:g}/sqrt(t)"


@dataclass(frozen=True)
class CustomSchedule:
    """Arbitrary user schedule; positivity and monotonicity are checked as it runs."""

    fn: Callable[[int], float]
    validated = False

    def __call__(self, t: int) -> float:
        return float(self.fn(t))

    def __str__(self):
        return getattr(self.fn, "__name__", "custom")


_SCHED_RE = re.compile(r"^\s*([0-9.eE+-]+)\s*/\s*sqrt\(\s*t\s*(?:\+\s*([0-9.eE+]+)\s*)?\)\s*$")


def parse_schedule(text: str) -> InverseSqrtSchedule:
    """Parse ``"c/sqrt(t)"`` or ``"c/sqrt(t+t0)"``."""
    m = _SCHED_RE.match(text)
    if not m:
        raise ValueError(f"unrecognized schedule {text!r}; expected 'c/sqrt(t)' or 'c/sqrt(t+t0)'")
    return InverseSqrtSchedule(float(m.group(1)), float(m.group(2) or 0.0))


# -- configuration and state -------------------------------------------------

@dataclass(frozen=True)
class AlgorithmConfig:
    algorithm: str
    alpha: float | None = None
    schedule: object = None
    max_iters: int = 1000
    tol: float = 0.0
    record_every: int = 1
    label: str | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.algorithm in FIXED_STEP:
            if self.alpha is None or not self.alpha > 0:
                raise ValueError(f"{self.algorithm} needs a positive step size alpha")
        elif self.schedule is None:
            raise ValueError("subgradient-push needs a step-size schedule")
        if self.max_iters < 1 or self.record_every < 1:
            raise ValueError("max_iters and record_every must be >= 1")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.algorithm == "subgradient-push":
            return f"{self.algorithm}"
        return f"{self.algorithm}-{self.alpha:g}"


@dataclass(eq=False)
class IterateState:
    """Round-``t`` iterates plus what the two-step recursion needs from round ``t-1``."""

    t: int
    z: np.ndarray
    x: np.ndarray
    g: np.ndarray              # stacked gradient at x
    s: np.ndarray              # A z (cached mixing)
    w: np.ndarray              # push-sum weights, or n*phi for the normalized forms
    y: np.ndarray              # sum_k (Abar - A) z^k
    u: np.ndarray              # sum_k z^k
    z_prev: np.ndarray | None = None
    x_prev: np.ndarray | None = None
    g_prev: np.ndarray | None = None
    s_prev: np.ndarray | None = None
    w_prev: np.ndarray | None = None


@dataclass(eq=False)
class TrajectoryRecord:
    algorithm: str
    label: str
    t: list = field(default_factory=list)
    err_opt: list = field(default_factory=list)
    consensus: list = field(default_factory=list)
    residual_opt: list = field(default_factory=list)
    residual_feas: list = field(default_factory=list)
    residual_link: list = field(default_factory=list)
    alpha_t: list = field(default_factory=list)
    w_min: list = field(default_factory=list)
    x_history: list = field(default_factory=list)
    z_history: list = field(default_factory=list)
    stop_reason: str = ""
    final: IterateState | None = None
    schedule_validated: bool = True
    checkpoint: "Checkpoint | None" = None

    @property
    def rounds(self) -> int:
        return self.final.t if self.final is not None else 0

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=np.float64)

    def relative_errors(self) -> np.ndarray:
        e = self.column("err_opt")
        return e / e[0]


def stop_rule(x, x_prev, t: int, cfg: AlgorithmConfig, residual: float | None = None) -> str | None:
    """Reason to stop after round ``t``, or ``None`` to continue.

    Non-finite iterates stop with ``"diverged"``. The tolerance tests start at
    ``t = 2`` (the first round produced by the two-step recursion) and are
    disabled when ``cfg.tol <= 0``.
    """
    if not np.all(np.isfinite(x)):
        return "diverged"
    if cfg.tol > 0 and t >= 2:
        if x_prev is not None:
            change = np.linalg.norm(x - x_prev) / (1.0 + np.linalg.norm(x))
            if change <= cfg.tol:
                return "step-tolerance"
        if residual is not None and residual <= cfg.tol:
            return "residual-tolerance"
    if t >= cfg.max_iters:
        return "max-iters"
    return None


class _Recorder:
    def __init__(self, cfg, a, phi, obj, x_star, history, monitor):
        self.cfg = cfg
        self.a = a
        self.phi = phi
        self.obj = obj
        self.history = history
        self.monitor = monitor
        self.x_star = None if x_star is None else np.asarray(x_star, dtype=np.float64)
        self.traj = TrajectoryRecord(cfg.algorithm, cfg.name)
        self.last_residual = None
        self.last_t = None

    def step(self, st: IterateState, alpha_t: float) -> str | None:
        """Monitor and record round ``st.t``; return the stop reason, if any."""
        if self.monitor is not None:
            self.monitor(st)
        self.record(st, alpha_t)
        residual = self.last_residual if self.last_t == st.t else None
        reason = stop_rule(st.x, st.x_prev, st.t, self.cfg, residual)
        if reason is not None:
            self.record(st, alpha_t, force=True)
        return reason

    def record(self, st: IterateState, alpha_t: float, force: bool = False) -> None:
        if not (force or st.t % self.cfg.record_every == 0):
            return
        tr = self.traj
        if tr.t and tr.t[-1] == st.t:
            return
        self.last_t = st.t
        with np.errstate(all="ignore"):
            tr.t.append(st.t)
            if self.x_star is not None:
                ref = self.x_star if self.x_star.ndim == 2 else self.x_star[None, :]
                tr.err_opt.append(float(np.linalg.norm(st.x - ref)))
            else:
                tr.err_opt.append(math.nan)
            tr.consensus.append(float(np.linalg.norm(st.x - st.x.mean(axis=0))))
            if self.phi is not None and alpha_t == alpha_t:
                r = residual_opt(st, self.a, self.phi, alpha_t, self.obj, grad=st.g)
                tr.residual_opt.append(r.r_grad)
                tr.residual_feas.append(r.r_null)
                tr.residual_link.append(r.r_link)
                self.last_residual = max(r.r_null, r.r_grad)
            else:
                tr.residual_opt.append(math.nan)
                tr.residual_feas.append(float(np.linalg.norm(st.z - st.s)))
                tr.residual_link.append(math.nan)
            tr.alpha_t.append(alpha_t)
            tr.w_min.append(float(np.min(st.w)))
        if self.history:
            tr.x_history.append(st.x.copy())
            tr.z_history.append(st.z.copy())


def _as_matrix(A) -> np.ndarray:
    return np.asarray(getattr(A, "a", A), dtype=np.float64)


def _phi_vec(phi) -> np.ndarray:
    return np.asarray(getattr(phi, "phi", phi), dtype=np.float64)


def _initial_z(z0, obj):
    if z0 is None:
        return np.zeros((obj.n, obj.p))
    z0 = np.array(z0, dtype=np.float64)
    if z0.shape != (obj.n, obj.p):
        raise ValueError(f"z0 must have shape {(obj.n, obj.p)}, got {z0.shape}")
    return z0


# -- checkpoints --------------------------------------------------------------

@dataclass(eq=False)
class Checkpoint:
    """Enough of rounds ``t`` and ``t-1`` to continue a two-step run bit-for-bit."""

    algorithm: str
    t: int
    z: np.ndarray
    z_prev: np.ndarray
    w: np.ndarray
    w_prev: np.ndarray
    y: np.ndarray
    u: np.ndarray

    @classmethod
    def from_state(cls, algorithm: str, st: IterateState) -> "Checkpoint":
        return cls(algorithm, st.t, st.z.copy(), st.z_prev.copy(), st.w.copy(),
                   st.w_prev.copy(), st.y.copy(), st.u.copy())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, algorithm=np.array(self.algorithm), t=np.array(self.t), z=self.z,
                     z_prev=self.z_prev, w=self.w, w_prev=self.w_prev, y=self.y, u=self.u)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with np.load(path, allow_pickle=False) as f:
            return cls(str(f["algorithm"]), int(f["t"]), f["z"].copy(), f["z_prev"].copy(),
                       f["w"].copy(), f["w_prev"].copy(), f["y"].copy(), f["u"].copy())


# -- two-step engines ---------------------------------------------------------

def _two_step_run(a, obj, cfg, z0, *, push_sum, scale, phi, x_star, monitor, history,
                  start, checkpoint_at):
    """Shared engine for ExtraPush (``push_sum=True``) and Normalized ExtraPush (fixed ``scale``)."""
    alpha = cfg.alpha
    n = a.shape[0]
    rec = _Recorder(cfg, a, phi, obj, x_star, history, monitor)
    saved = None

    def weights(w_prev):
        w = kernels.mix(a, w_prev)
        if np.any(w < WEIGHT_FLOOR):
            raise SolverError(f"push-sum weight {w.min():.3e} below floor; mixing matrix is broken")
        return w

    def normalize(z, w):
        return z / w[:, None]

    with np.errstate(all="ignore"):
        if start is None:
            z = _initial_z(z0, obj)
            w = np.ones(n) if push_sum else scale.copy()
            x = normalize(z, w)
            g = grad_stack(obj, x)
            s = kernels.mix(a, z)
            st = IterateState(0, z, x, g, s, w, 0.5 * (z - s), z.copy())
            if monitor is not None:
                monitor(st)
            rec.record(st, alpha)
            # first round: z^1 = A z^0 - alpha grad f(x^0)
            z1 = s - alpha * g
            w1 = weights(w) if push_sum else w
            x1 = normalize(z1, w1)
            g1 = grad_stack(obj, x1) if np.all(np.isfinite(x1)) else np.full_like(x1, np.nan)
            s1 = kernels.mix(a, z1)
            st = IterateState(1, z1, x1, g1, s1, w1, st.y + 0.5 * (z1 - s1), st.u + z1,
                              z, x, g, s, w)
        else:
            if start.algorithm != cfg.algorithm:
                raise SolverError(f"checkpoint is for {start.algorithm}, not {cfg.algorithm}")
            z, zp, w, wp = start.z, start.z_prev, start.w, start.w_prev
            x, xp = normalize(z, w), normalize(zp, wp)
            st = IterateState(start.t, z, x, grad_stack(obj, x), kernels.mix(a, z), w,
                              start.y, start.u, zp, xp, grad_stack(obj, xp), kernels.mix(a, zp), wp)

        while True:
            if st.t == checkpoint_at:
                saved = Checkpoint.from_state(cfg.algorithm, st)
            reason = rec.step(st, alpha)
            if reason is not None:
                break
            z = kernels.two_step(st.z, st.s, st.z_prev, st.s_prev, st.g, st.g_prev, alpha)
            w = weights(st.w) if push_sum else st.w
            x = normalize(z, w)
            g = grad_stack(obj, x) if np.all(np.isfinite(x)) else np.full_like(x, np.nan)
            s = kernels.mix(a, z)
            st = IterateState(st.t + 1, z, x, g, s, w, st.y + 0.5 * (z - s), st.u + z,
                              st.z, st.x, st.g, st.s, st.w)

    tr = rec.traj
    tr.stop_reason = reason
    tr.final = st
    tr.checkpoint = saved
    return tr


def run_extrapush(A, obj: ObjectiveSuite, cfg: AlgorithmConfig, z0=None, *, x_star=None,
                  phi=None, monitor=None, history=False, start: Checkpoint | None = None,
                  checkpoint_at: int | None = None) -> TrajectoryRecord:
    """ExtraPush: two-step recursion on ``z`` with push-sum weights ``w^t = A w^{t-1}``, ``x = z / w``.

    ``phi`` is only used for the recorded residuals and is computed when omitted.
    """
    a = _as_matrix(A)
    if phi is None:
        phi = stationary_distribution(A if isinstance(A, MixingMatrix) else MixingMatrix.from_array(a))
    cfg = _ensure(cfg, "extrapush")
    return _two_step_run(a, obj, cfg, z0, push_sum=True, scale=None, phi=_phi_vec(phi),
                         x_star=x_star, monitor=monitor, history=history, start=start,
                         checkpoint_at=checkpoint_at)


def run_normalized_extrapush(A, phi, obj: ObjectiveSuite, cfg: AlgorithmConfig, z0=None, *,
                             x_star=None, monitor=None, history=False,
                             start: Checkpoint | None = None,
                             checkpoint_at: int | None = None) -> TrajectoryRecord:
    """Normalized ExtraPush: ExtraPush with ``w^t`` replaced by its limit ``n phi``."""
    a = _as_matrix(A)
    ph = _check_phi(phi)
    cfg = _ensure(cfg, "normalized-extrapush")
    return _two_step_run(a, obj, cfg, z0, push_sum=False, scale=len(ph) * ph, phi=ph,
                         x_star=x_star, monitor=monitor, history=history, start=start,
                         checkpoint_at=checkpoint_at)


def run_normalized_z_form(A, phi, obj: ObjectiveSuite, cfg: AlgorithmConfig, z0=None, *,
                          x_star=None, monitor=None, history=False) -> TrajectoryRecord:
    """Single-variable recursion on ``z`` with gradients of ``z -> f(D^-1 z)``; reports ``x = D^-1 z``."""
    a = _as_matrix(A)
    ph = _check_phi(phi)
    cfg = _ensure(cfg, "normalized-extrapush-z")
    dvec = len(ph) * ph
    rec = _Recorder(cfg, a, ph, obj, x_star, history, monitor)
    alpha = cfg.alpha

    def grad_phi(z):
        return grad_stack(obj, z / dvec[:, None])

    with np.errstate(all="ignore"):
        z0 = _initial_z(z0, obj)
        g0, s0 = grad_phi(z0), kernels.mix(a, z0)
        prev = IterateState(0, z0, z0 / dvec[:, None], g0, s0, dvec, 0.5 * (z0 - s0), z0.copy())
        if monitor is not None:
            monitor(prev)
        rec.record(prev, alpha)
        z1 = s0 - alpha * g0
        s1 = kernels.mix(a, z1)
        st = IterateState(1, z1, z1 / dvec[:, None], _safe(grad_phi, z1), s1, dvec,
                          prev.y + 0.5 * (z1 - s1), prev.u + z1, z0, prev.x, g0, s0, dvec)
        while True:
            reason = rec.step(st, alpha)
            if reason:
                break
            z = kernels.two_step(st.z, st.s, st.z_prev, st.s_prev, st.g, st.g_prev, alpha)
            s = kernels.mix(a, z)
            st = IterateState(st.t + 1, z, z / dvec[:, None], _safe(grad_phi, z), s, dvec,
                              st.y + 0.5 * (z - s), st.u + z, st.z, st.x, st.g, st.s, dvec)
    rec.traj.stop_reason, rec.traj.final = reason, st
    return rec.traj


def run_normalized_x_form(A, phi, obj: ObjectiveSuite, cfg: AlgorithmConfig, z0=None, *,
                          x_star=None, monitor=None, history=False) -> TrajectoryRecord:
    """Row-stochastic form on ``x`` with ``A_phi = D^-1 A D`` and gradients scaled by ``D^-1``."""
    a = _as_matrix(A)
    ph = _check_phi(phi)
    cfg = _ensure(cfg, "normalized-extrapush-x")
    dvec = len(ph) * ph
    a_phi = a * dvec[None, :] / dvec[:, None]
    rec = _Recorder(cfg, a, ph, obj, x_star, history, monitor)
    alpha = cfg.alpha

    def state(t, x, gs, sx, prev):
        # z = D x is reported so residuals and monitors see the same variables
        z = dvec[:, None] * x
        g = gs * dvec[:, None]
        s = kernels.mix(a, z)
        if prev is None:
            return IterateState(t, z, x, g, s, dvec, 0.5 * (z - s), z.copy()), sx, gs
        st = IterateState(t, z, x, g, s, dvec, prev.y + 0.5 * (z - s), prev.u + z,
                          prev.z, prev.x, prev.g, prev.s, dvec)
        return st, sx, gs

    def scaled_grad(x):
        if not np.all(np.isfinite(x)):
            return np.full_like(x, np.nan)
        return grad_stack(obj, x) / dvec[:, None]

    with np.errstate(all="ignore"):
        x0 = _initial_z(z0, obj) / dvec[:, None]
        gs0, sx0 = scaled_grad(x0), kernels.mix(a_phi, x0)
        st0, _, _ = state(0, x0, gs0, sx0, None)
        if monitor is not None:
            monitor(st0)
        rec.record(st0, alpha)
        x1 = sx0 - alpha * gs0
        gs1, sx1 = scaled_grad(x1), kernels.mix(a_phi, x1)
        st, _, _ = state(1, x1, gs1, sx1, st0)
        cur = (x1, sx1, gs1)
        old = (x0, sx0, gs0)
        while True:
            reason = rec.step(st, alpha)
            if reason:
                break
            x = kernels.two_step(cur[0], cur[1], old[0], old[1], cur[2], old[2], alpha)
            gs, sx = scaled_grad(x), kernels.mix(a_phi, x)
            st, _, _ = state(st.t + 1, x, gs, sx, st)
            old, cur = cur, (x, sx, gs)
    rec.traj.stop_reason, rec.traj.final = reason, st
    return rec.traj


def run_extra(W, obj: ObjectiveSuite, cfg: AlgorithmConfig, x0=None, *, x_star=None,
              monitor=None, history=False) -> TrajectoryRecord:
    """Extra on a symmetric doubly stochastic ``W``, started with ``x^1 = x^0 - alpha grad f(x^0)``."""
    w_mat = _as_matrix(W)
    n = w_mat.shape[0]
    if np.max(np.abs(w_mat - w_mat.T)) > LOAD_TOL:
        raise SolverError("Extra needs a symmetric mixing matrix")
    if np.max(np.abs(w_mat.sum(axis=0) - 1)) > LOAD_TOL or np.any(w_mat < 0):
        raise SolverError("Extra needs a doubly stochastic mixing matrix")
    cfg = _ensure(cfg, "extra")
    alpha = cfg.alpha
    ones = np.ones(n)
    rec = _Recorder(cfg, w_mat, ones / n, obj, x_star, history, monitor)

    with np.errstate(all="ignore"):
        x0 = _initial_z(x0, obj)
        g0, s0 = grad_stack(obj, x0), kernels.mix(w_mat, x0)
        prev = IterateState(0, x0, x0, g0, s0, ones, 0.5 * (x0 - s0), x0.copy())
        if monitor is not None:
            monitor(prev)
        rec.record(prev, alpha)
        x1 = x0 - alpha * g0
        s1 = kernels.mix(w_mat, x1)
        st = IterateState(1, x1, x1, _safe(lambda v: grad_stack(obj, v), x1), s1, ones,
                          prev.y + 0.5 * (x1 - s1), prev.u + x1, x0, x0, g0, s0, ones)
        while True:
            reason = rec.step(st, alpha)
            if reason:
                break
            x = kernels.two_step(st.z, st.s, st.z_prev, st.s_prev, st.g, st.g_prev, alpha)
            s = kernels.mix(w_mat, x)
            st = IterateState(st.t + 1, x, x, _safe(lambda v: grad_stack(obj, v), x), s, ones,
                              st.y + 0.5 * (x - s), st.u + x, st.z, st.x, st.g, st.s, ones)
    rec.traj.stop_reason, rec.traj.final = reason, st
    return rec.traj


def run_subgradient_push(A, obj: ObjectiveSuite, cfg: AlgorithmConfig, z0=None, *,
                         x_star=None, monitor=None, history=False) -> TrajectoryRecord:
    """Subgradient-push with a diminishing schedule; round ``t`` uses ``alpha_t``."""
    a = _as_matrix(A)
    cfg = _ensure(cfg, "subgradient-push")
    sched = cfg.schedule
    if callable(sched) and not isinstance(sched, (InverseSqrtSchedule, CustomSchedule)):
        sched = CustomSchedule(sched)
    rec = _Recorder(cfg, a, None, obj, x_star, history, monitor)
    rec.traj.schedule_validated = bool(getattr(sched, "validated", False))
    n = a.shape[0]

    with np.errstate(all="ignore"):
        z = _initial_z(z0, obj)
        w = np.ones(n)
        x = z.copy()
        g = grad_stack(obj, x)
        st = IterateState(0, z, x, g, kernels.mix(a, z), w, np.zeros_like(z), z.copy())
        prev_alpha = math.inf
        alpha_t = math.nan
        while True:
            reason = rec.step(st, alpha_t)
            if reason:
                break
            t = st.t + 1
            alpha_t = sched(t)
            if not alpha_t > 0 or alpha_t > prev_alpha:
                raise ValueError(f"invalid schedule: alpha_{t} = {alpha_t} (must be positive, non-increasing)")
            prev_alpha = alpha_t
            z = st.s - alpha_t * st.g
            w = kernels.mix(a, st.w)
            x = z / w[:, None]
            g = _safe(lambda v: grad_stack(obj, v), x)
            st = IterateState(t, z, x, g, kernels.mix(a, z), w, st.y, st.u + z,
                              st.z, st.x, st.g, st.s, st.w)
    rec.traj.stop_reason, rec.traj.final = reason, st
    return rec.traj


def _safe(fn, x):
    if np.all(np.isfinite(x)):
        return fn(x)
    return np.full_like(x, np.nan)


def _check_phi(phi) -> np.ndarray:
    ph = _phi_vec(phi)
    if np.any(ph <= 0):
        raise SolverError("stationary distribution must be strictly positive")
    return ph


def _ensure(cfg: AlgorithmConfig, algorithm: str) -> AlgorithmConfig:
    return cfg if cfg.algorithm == algorithm else replace(cfg, algorithm=algorithm)


def initial_z(algorithm: str, x0, phi=None) -> np.ndarray:
    """Map a desired starting ``x^0`` to the ``z^0`` each algorithm expects."""
    x0 = np.asarray(x0, dtype=np.float64)
    if algorithm.startswith("normalized"):
        ph = _phi_vec(phi)
        return (len(ph) * ph)[:, None] * x0
    return x0.copy()


def run_algorithm(cfg: AlgorithmConfig, A, obj: ObjectiveSuite, x0=None, *, phi=None,
                  x_star=None, monitor=None, history=False) -> TrajectoryRecord:
    """Dispatch on ``cfg.algorithm``, starting every method from the same ``x^0``."""
    m = A if isinstance(A, MixingMatrix) else MixingMatrix.from_array(A)
    if x0 is None:
        x0 = np.zeros((obj.n, obj.p))
    if phi is None and cfg.algorithm != "subgradient-push":
        phi = stationary_distribution(m)
    kw = dict(x_star=x_star, monitor=monitor, history=history)
    z0 = initial_z(cfg.algorithm, x0, phi)
    if cfg.algorithm == "extra":
        return run_extra(m, obj, cfg, z0, **kw)
    if cfg.algorithm == "subgradient-push":
        return run_subgradient_push(m, obj, cfg, z0, **kw)
    if cfg.algorithm == "extrapush":
        return run_extrapush(m, obj, cfg, z0, phi=phi, **kw)
    runner = {"normalized-extrapush": run_normalized_extrapush,
              "normalized-extrapush-z": run_normalized_z_form,
              "normalized-extrapush-x": run_normalized_x_form}[cfg.algorithm]
    return runner(m, phi, obj, cfg, z0, **kw)


# -- output -------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_trajectory_csv(traj: TrajectoryRecord, path) -> None:
    """Write the per-round history atomically (temp file, then rename)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(CSV_HEADER)
            for row in zip(traj.t, traj.err_opt, traj.consensus, traj.residual_opt,
                           traj.residual_feas, traj.alpha_t):
                wr.writerow([str(row[0])] + [_fmt(v) for v in row[1:]])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_trajectory_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * len(CSV_HEADER)
    out = {"t": np.array([int(v) for v in cols[0]])}
    for name, col in zip(CSV_HEADER[1:], cols[1:]):
        out[name] = np.array([float(v) for v in col])
    return out
