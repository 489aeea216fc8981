"""Synchronous message-passing simulation of ExtraPush with strictly local agent state."""
from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .graph import DirectedGraph, MixingMatrix, stationary_distribution
from .objective import ObjectiveSuite
from .solver import AlgorithmConfig, IterateState, TrajectoryRecord, _Recorder, _ensure


class MissingMessageError(RuntimeError):
    pass


@dataclass(frozen=True)
class RoundMessage:
    sender: int
    round: int
    z: np.ndarray      # read-only copy of the sender's z
    w: float


@dataclass
class LogEntry:
    round: int
    sender: int
    receiver: int
    w: float
    z_hash: str


def _frozen(v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


class Agent:
    """One node. It sees its own state and the messages delivered to it, nothing else.

    ``in_weights`` lists ``(j, A_ij)`` for every in-neighbor ``j`` (itself included),
    ascending in ``j``; that order fixes the floating-point accumulation.
    """

    def __init__(self, ident: int, in_weights, out_neighbors, grad, alpha: float, z0):
        if any(wt <= 0 for _, wt in in_weights):
            raise ValueError(f"agent {ident}: in-weights must be positive")
        self.id = ident
        self.in_weights = tuple(sorted(in_weights))
        self.out_neighbors = tuple(out_neighbors)
        self._grad = grad
        self.alpha = alpha
        self.z = np.array(z0, dtype=np.float64)
        self.w = 1.0
        self.x = self.z / self.w
        self.g = grad(self.x)
        self.z_prev = self.s_prev = self.g_prev = None
        self.consumed = []      # senders whose messages this agent read, per round

    def outgoing(self, t: int) -> RoundMessage:
        return RoundMessage(self.id, t, _frozen(self.z), self.w)

    def update(self, t: int, inbox: dict) -> None:
        """Apply round ``t`` from the round-``t`` messages of the in-neighbors."""
        needed = {j for j, _ in self.in_weights if j != self.id}
        if set(inbox) != needed:
            raise MissingMessageError(f"agent {self.id} round {t}: expected {sorted(needed)}, got {sorted(inbox)}")
        s = np.zeros_like(self.z)
        ws = 0.0
        for j, a_ij in self.in_weights:
            if j == self.id:
                zj, wj = self.z, self.w
            else:
                msg = inbox[j]
                if msg.round != t:
                    raise MissingMessageError(f"agent {self.id}: stale message from {j}")
                zj, wj = msg.z, msg.w
            s += a_ij * zj
            ws += a_ij * wj
        self.consumed.append(tuple(sorted(inbox)))
        if t == 1:
            z = s - self.alpha * self.g
        else:
            z = ((self.z + s) - 0.5 * (self.z_prev + self.s_prev)) - self.alpha * (self.g - self.g_prev)
        self.z_prev, self.s_prev, self.g_prev = self.z, s, self.g
        self.z, self.w = z, ws
        self.x = z / ws
        self.g = self._grad(self.x) if np.all(np.isfinite(self.x)) else np.full_like(self.x, np.nan)


def _agents(g: DirectedGraph, a: np.ndarray, obj: ObjectiveSuite, alpha: float, z0):
    agents = []
    for i in range(g.n):
        ins = g.in_neighbors(i)
        weights = [(j, float(a[i, j])) for j in ins]
        outs = [j for j in g.out_neighbors(i) if j != i]
        agents.append(Agent(i, weights, outs, (lambda v, i=i: obj.grad(i, v)), alpha, z0[i]))
    return agents


def _check_consistent(g: DirectedGraph, a: np.ndarray) -> None:
    if a.shape != (g.n, g.n):
        raise ValueError("mixing matrix size does not match the graph")
    support = (a > 0) & ~np.eye(g.n, dtype=bool)
    if not np.array_equal(support, g.adjacency().T):
        raise ValueError("mixing matrix support does not match the graph's edges")


def _deliver(agents, t, log):
    inboxes = {ag.id: {} for ag in agents}
    for ag in agents:
        msg = ag.outgoing(t)
        for r in ag.out_neighbors:
            inboxes[r][ag.id] = msg
            if log is not None:
                log.append(LogEntry(t, ag.id, r, msg.w, _hash(msg.z)))
    return inboxes


def _hash(z: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(z).tobytes()).hexdigest()[:16]


def simulate_extrapush(g: DirectedGraph, A, obj: ObjectiveSuite, cfg: AlgorithmConfig, z0=None, *,
                       x_star=None, phi=None, history: bool = False, message_log: list | None = None,
                       workers: int = 1) -> TrajectoryRecord:
    """Run ExtraPush as ``n`` agents exchanging ``(z, w)`` once per synchronous round.

    Every round: all agents broadcast, messages are delivered (barrier), then each
    agent updates. With ``workers > 1`` the update phase runs on a thread pool;
    agents write only their own state, so the result does not depend on scheduling.
    """
    m = A if isinstance(A, MixingMatrix) else MixingMatrix.from_array(A)
    a = m.a
    _check_consistent(g, a)
    cfg = _ensure(cfg, "extrapush")
    if phi is None:
        phi = stationary_distribution(m)
    ph = np.asarray(getattr(phi, "phi", phi))
    z0 = np.zeros((obj.n, obj.p)) if z0 is None else np.asarray(z0, dtype=np.float64)
    agents = _agents(g, a, obj, cfg.alpha, z0)
    rec = _Recorder(cfg, a, ph, obj, x_star, history, None)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    y = np.zeros_like(z0)
    u = np.zeros_like(z0)
    prev_x = None
    try:
        t = 0
        while True:
            z = np.array([ag.z for ag in agents])
            x = np.array([ag.x for ag in agents])
            s = kernels.mix(a, z)       # observer-side only, for residual bookkeeping
            y = y + 0.5 * (z - s)
            u = u + z
            st = IterateState(t, z, x, np.array([ag.g for ag in agents]), s,
                              np.array([ag.w for ag in agents]), y, u, x_prev=prev_x)
            reason = rec.step(st, cfg.alpha)
            if reason:
                break
            t += 1
            inboxes = _deliver(agents, t, message_log)
            if pool is None:
                for ag in agents:
                    ag.update(t, inboxes[ag.id])
            else:
                list(pool.map(lambda ag: ag.update(t, inboxes[ag.id]), agents))
            prev_x = x
    finally:
        if pool is not None:
            pool.shutdown()
    rec.traj.stop_reason, rec.traj.final = reason, st
    rec.traj.agents = agents
    return rec.traj


def simulate_push_sum(g: DirectedGraph, A, w0=None, rounds: int = 100) -> np.ndarray:
    """Push-sum weights ``w^0..w^rounds`` computed by local exchanges; row ``t`` is ``w^t``."""
    a = np.asarray(getattr(A, "a", A), dtype=np.float64)
    _check_consistent(g, a)
    w = np.ones(g.n) if w0 is None else np.array(w0, dtype=np.float64)
    ins = [[(j, float(a[i, j])) for j in g.in_neighbors(i)] for i in range(g.n)]
    out = [w.copy()]
    for _ in range(rounds):
        nxt = np.empty_like(w)
        for i in range(g.n):
            acc = 0.0
            for j, a_ij in ins[i]:
                acc += a_ij * w[j]
            nxt[i] = acc
        w = nxt
        out.append(w.copy())
    return np.array(out)


def message_count(g: DirectedGraph, rounds: int) -> int:
    """Directed payloads sent in ``rounds`` rounds: one per non-self edge per round."""
    return rounds * g.num_edges


def write_message_log(entries, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("round", "sender", "receiver", "w", "z_hash"))
        for e in entries:
            wr.writerow((e.round, e.sender, e.receiver, f"{e.w:.17g}", e.z_hash))
