"""Optimality residuals, metric objects, the step-size certificate and rate fitting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .constants import EIG_ZERO_REL, ITER_TOL
from .objective import ObjectiveSuite, grad_stack


def _arr(m) -> np.ndarray:
    return np.asarray(getattr(m, "a", m), dtype=np.float64)


def _phi(phi) -> np.ndarray:
    return np.asarray(getattr(phi, "phi", phi), dtype=np.float64)


# -- optimality residuals ---------------------------------------------------

@dataclass(eq=False)
class OptimalityTriple:
    z: np.ndarray
    y: np.ndarray
    x: np.ndarray


class Residuals(NamedTuple):
    r_null: float    # ||(I - A) z||
    r_grad: float    # ||y + alpha grad f(x)||
    r_link: float    # ||x - D^-1 z||
    sum_y: float     # ||1^T y||

    def max(self) -> float:
        return max(self.r_null, self.r_grad, self.r_link)


def residual_opt(state, A, phi, alpha: float, obj: ObjectiveSuite, grad=None) -> Residuals:
    """First-order optimality residuals of ``(z, y, x)``.

    ``state`` is anything with ``z``, ``y`` and ``x`` attributes. A precomputed
    stacked gradient at ``x`` may be passed as ``grad``.
    """
    a = _arr(A)
    ph = _phi(phi)
    z, y, x = state.z, state.y, state.x
    g = grad_stack(obj, x) if grad is None else grad
    scale = len(ph) * ph
    return Residuals(
        float(np.linalg.norm(z - a @ z)),
        float(np.linalg.norm(y + alpha * g)),
        float(np.linalg.norm(x - z / scale[:, None])),
        float(np.linalg.norm(y.sum(axis=0))),
    )


def optimal_triple(A, phi, alpha: float, obj: ObjectiveSuite, x_star) -> OptimalityTriple:
    """Triple from a consensual optimum: ``z* = n diag(phi) x*``, ``y* = -alpha grad f(x*)``."""
    ph = _phi(phi)
    n = len(ph)
    x_star = np.asarray(x_star, dtype=np.float64)
    x = np.tile(x_star, (n, 1)) if x_star.ndim == 1 else x_star
    z = (n * ph)[:, None] * x
    return OptimalityTriple(z, -alpha * grad_stack(obj, x), x)


def accumulate_y(z_history, A) -> np.ndarray:
    """Running sums ``y^t = sum_{k<=t} (Abar - A) z^k`` for a full ``z`` history."""
    a = _arr(A)
    diff = (np.eye(a.shape[0]) - a) / 2
    zh = np.asarray(z_history, dtype=np.float64)
    return np.cumsum(np.einsum("ij,tjp->tip", diff, zh), axis=0)


def accumulate_u(z_history) -> np.ndarray:
    """Running sums ``u^t = sum_{k<=t} z^k``."""
    return np.cumsum(np.asarray(z_history, dtype=np.float64), axis=0)


# -- conservation -----------------------------------------------------------

class ConservationMonitor:
    """Tracks ``|1^T z^{t+1} - 1^T z^t + alpha 1^T grad f(x^t)| / (1 + ||z^t||)`` per round.

    Pass an instance as the ``monitor`` of a fixed-step solver run.
    """

    def __init__(self, alpha: float):
        self.alpha = alpha
        self.worst = 0.0
        self.rounds = 0
        self._prev = None

    def __call__(self, state) -> None:
        if self._prev is not None:
            sum_prev, g_prev, norm_prev = self._prev
            gap = state.z.sum(axis=0) - sum_prev + self.alpha * g_prev
            self.worst = max(self.worst, float(np.linalg.norm(gap)) / (1.0 + norm_prev))
            self.rounds += 1
        self._prev = (state.z.sum(axis=0), state.g.sum(axis=0), float(np.linalg.norm(state.z)))


# -- metric objects -----------------------------------------------------------

def _sym_eigs(m: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh((m + m.T) / 2)


def smallest_nonzero_eig(m: np.ndarray, rel: float = EIG_ZERO_REL) -> float:
    """Smallest eigenvalue above ``rel * lambda_max`` of a PSD matrix; 0 if none."""
    ev = _sym_eigs(m)
    top = ev[-1]
    if top <= 0:
        return 0.0
    nz = ev[ev > rel * top]
    return float(nz[0]) if nz.size else 0.0


@dataclass(frozen=True, eq=False)
class MetricObjects:
    N: np.ndarray          # D^-1 Abar
    M: np.ndarray          # D^-1 (Abar - A)
    G: np.ndarray          # blockdiag(N^T, M)
    S: np.ndarray          # [[0, M], [-M^T, 0]]
    Lambda: np.ndarray     # D^{1/2} (M + M^T) D^{1/2}
    lam_min_M_sym: float   # lambda_min(M + M^T)
    lam_min_G_sym: float   # lambda_min(G + G^T)

    @property
    def psd_ok(self) -> bool:
        return self.lam_min_M_sym >= -ITER_TOL and self.lam_min_G_sym >= -ITER_TOL


def build_metric_objects(A, phi) -> MetricObjects:
    a = _arr(A)
    ph = _phi(phi)
    n = a.shape[0]
    dvec = n * ph
    a_bar = (np.eye(n) + a) / 2
    N = a_bar / dvec[:, None]
    M = (a_bar - a) / dvec[:, None]
    Z = np.zeros((n, n))
    G = np.block([[N.T, Z], [Z, M]])
    S = np.block([[Z, M], [-M.T, Z]])
    root = np.sqrt(dvec)
    Lam = root[:, None] * (M + M.T) * root[None, :]
    return MetricObjects(N, M, G, S, Lam,
                         float(_sym_eigs(M + M.T)[0]), float(_sym_eigs(G + G.T)[0]))


def check_assumption4(A, phi) -> tuple[bool, float]:
    """Sign and value of ``lambda_min(D^-1 Abar + Abar^T D^-1)``."""
    a = _arr(A)
    ph = _phi(phi)
    n = a.shape[0]
    a_bar = (np.eye(n) + a) / 2
    da = a_bar / (n * ph)[:, None]
    margin = float(np.linalg.eigvalsh(da + da.T)[0])
    return margin > 0, margin


def g_norm(v, G) -> float:
    """``||v||_G^2 = <v, G v>`` (Frobenius) for a ``2n x p`` stacked ``v``.

    Raises ``ValueError`` if the value is below ``-1e-10``, which would mean
    ``G + G^T`` is not positive semidefinite.
    """
    v = np.asarray(v, dtype=np.float64)
    val = float(np.sum(v * (G @ v)))
    if val < -ITER_TOL:
        raise ValueError(f"negative G-norm {val:.3e}: G + G^T is not PSD")
    return max(val, 0.0)


def v_star(A, phi, alpha: float, obj: ObjectiveSuite, x_star) -> np.ndarray:
    """``(z*, u*)`` stacked, with ``u*`` the min-norm solution of ``(Abar - A) u* = y*``."""
    a = _arr(A)
    tri = optimal_triple(A, phi, alpha, obj, x_star)
    diff = (np.eye(a.shape[0]) - a) / 2
    u = np.linalg.lstsq(diff, tri.y, rcond=None)[0]
    return np.vstack([tri.z, u])


def g_norm_ratios(v_history, G, vstar) -> np.ndarray:
    """``||v^t - v*||_G^2 / ||v^{t+1} - v*||_G^2`` along a trajectory (``inf`` past zero)."""
    norms = np.array([g_norm(v - vstar, G) for v in v_history])
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(norms[1:] > 0, norms[:-1] / norms[1:], np.inf)


def g_norm_contraction_check(v_history, G, vstar, delta: float, start: int = 0) -> bool:
    """True iff ``||v^t - v*||_G^2 >= (1 + delta) ||v^{t+1} - v*||_G^2`` for all ``t >= start``."""
    norms = np.array([g_norm(v - vstar, G) for v in v_history])
    lhs, rhs = norms[start:-1], (1 + delta) * norms[start + 1:]
    return bool(np.all(lhs >= rhs))


# -- rate fitting -------------------------------------------------------------

def fit_linear_rate(errors, t=None) -> tuple[float, float]:
    """Least-squares fit of ``log(err)`` against ``t``; returns ``(exp(slope), r^2)``."""
    e = np.asarray(errors, dtype=np.float64)
    tt = np.arange(e.size, dtype=np.float64) if t is None else np.asarray(t, dtype=np.float64)
    if e.size < 2:
        raise ValueError("need at least two samples to fit a rate")
    if np.any(~(e > 0)):
        raise ValueError("errors must be positive to fit a log-linear rate")
    y = np.log(e)
    tc = tt - tt.mean()
    yc = y - y.mean()
    slope = float(tc @ yc / (tc @ tc))
    ss_tot = float(yc @ yc)
    ss_res = float(np.sum((yc - slope * tc) ** 2))
    r2 = 1.0 if np.ptp(y) == 0 or ss_tot == 0 else 1.0 - ss_res / ss_tot
    return math.exp(slope), r2


# -- step-size certificate -----------------------------------------------------

@dataclass
class ConvergenceCertificate:
    """Constants and windows of the linear-rate step-size certificate.

    ``feasible`` is True only if every link of the condition chain holds; otherwise
    ``failed`` names the first one that does not. Quantities that are undefined at
    the point where the chain broke are ``nan``.
    """

    applicable: bool
    feasible: bool
    failed: str | None
    L_bar: float
    mu_bar: float
    constants: dict = field(default_factory=dict)
    a: float = math.nan
    eta: float = math.nan
    sigma: float = math.nan
    a_window: tuple = (math.nan, math.nan)
    eta_window: tuple = (math.nan, math.nan)
    sigma_window: tuple = (math.nan, math.nan)
    alpha_interval: tuple = (math.nan, math.nan)
    alpha: float = math.nan
    delta: float = math.nan
    assumption4_margin: float = math.nan
    unit_scale: bool = False
    chain: list = field(default_factory=list)

    def certifies(self, alpha: float) -> bool:
        lo, hi = self.alpha_interval
        return self.feasible and lo < alpha < hi


def _sqrt(v: float) -> float:
    return math.sqrt(v) if v >= 0 else math.nan


def _min(*vals: float) -> float:
    # an undefined bound makes the whole window undefined
    return math.nan if any(math.isnan(v) for v in vals) else min(vals)


@dataclass(frozen=True)
class GraphConstants:
    lam_max_MMt: float
    lam_tilde_MtM: float
    lam_max_Msym: float
    lam_max_NNt: float
    lam_max_NtN: float
    lam_min_NtN_sum: float    # lambda_min(N^T + N)
    lam_max_Nsym: float       # lambda_max((N + N^T)/2)
    sig_min_D: float
    sig_max_D: float
    c1: float
    c2: float
    c3: float
    c7: float


def graph_constants(A, phi) -> GraphConstants | None:
    """Matrix-only part of the certificate; ``None`` when ``M = 0`` (no nonzero spectrum)."""
    mo = build_metric_objects(A, phi)
    M, N = mo.M, mo.N
    dvec = len(_phi(phi)) * _phi(phi)
    lt = smallest_nonzero_eig(M.T @ M)
    if lt == 0.0:
        return None
    lam_max_MMt = float(_sym_eigs(M @ M.T)[-1])
    lam_max_Msym = float(_sym_eigs((M + M.T) / 2)[-1])
    lam_max_NNt = float(_sym_eigs(N @ N.T)[-1])
    lam_max_NtN = float(_sym_eigs(N.T @ N)[-1])
    nu = float(_sym_eigs(N.T + N)[0])
    c1 = lam_max_MMt / lt
    c2 = lam_max_Msym / lt
    c3 = lam_max_NNt + 3 * c1 * lam_max_NtN
    return GraphConstants(
        lam_max_MMt, lt, lam_max_Msym, lam_max_NNt, lam_max_NtN, nu,
        float(_sym_eigs((N + N.T) / 2)[-1]), float(dvec.min()), float(dvec.max()),
        c1, c2, c3, nu * nu / (4 * c3))


def chain_constants(gc: GraphConstants, L_bar: float, mu_bar: float,
                    a: float, eta: float, sigma: float) -> dict:
    """Every scalar of the certificate for fixed ``(a, eta, sigma)``; undefined ones are nan."""
    c1, c2, c3, c7, nu = gc.c1, gc.c2, gc.c3, gc.c7, gc.lam_min_NtN_sum
    c8 = a * (c7 + 2) - (2 - c7)
    d1 = (mu_bar - eta / 2) ** 2 - 6 * c1 * L_bar ** 2
    c4 = (mu_bar - eta / 2) + _sqrt(d1)
    c5 = L_bar ** 2 / eta
    c6 = (2 * c4 * c5 + 12 * c1 * L_bar ** 2) / c4 ** 2 if c4 != 0 else math.nan
    d3 = nu ** 2 - 4 * c3 * c6
    d2 = L_bar ** 4 / (4 * eta ** 2) - 3 * c1 * L_bar ** 2 * sigma * (c3 * sigma - nu)
    root_a = math.sqrt(6 * c1 / (1 - a * a))
    mu_req = (root_a + (1 / c8) * math.sqrt((1 - a * a) / (6 * c1))) * L_bar if c8 != 0 else math.nan
    disc = 1 - 4 * L_bar ** 2 / (c8 * mu_bar ** 2) if c8 * mu_bar != 0 else math.nan
    eta_lo = mu_bar * (1 - _sqrt(disc))
    eta_hi = _min(mu_bar * (1 + _sqrt(disc)), 2 * (mu_bar - root_a * L_bar))
    sig_lo = (nu - _sqrt(d3)) / (2 * c3)
    sig_hi = (nu + _sqrt(d3)) / (2 * c3)
    den = 3 * c1 * L_bar ** 2 * sigma
    alpha_lo = (mu_bar - eta / 2 - _sqrt(d1)) / den
    alpha_hi = _min((mu_bar - eta / 2 + _sqrt(d1)) / den, (-L_bar ** 2 / (2 * eta) + _sqrt(d2)) / den)
    return dict(c1=c1, c2=c2, c3=c3, c4=c4, c5=c5, c6=c6, c7=c7, c8=c8,
                Delta1=d1, Delta2=d2, Delta3=d3, mu_required=mu_req,
                a_lo=(2 - c7) / (2 + c7), eta_lo=eta_lo, eta_hi=eta_hi,
                sigma_lo=sig_lo, sigma_hi=sig_hi, alpha_lo=alpha_lo, alpha_hi=alpha_hi)


def delta_bound(gc: GraphConstants, L_bar: float, mu_bar: float,
                eta: float, sigma: float, alpha: float) -> float:
    """Largest contraction ``delta`` guaranteed at step size ``alpha``."""
    c1, c2, c3 = gc.c1, gc.c2, gc.c3
    quad = 1.5 * c1 * L_bar ** 2 * sigma * alpha ** 2
    first = (-1 / sigma + (mu_bar - eta / 2) * alpha - quad) / (gc.lam_max_Nsym + 3 * c2 * alpha ** 2 * L_bar ** 2)
    second = (gc.lam_min_NtN_sum / 2 - c3 * sigma / 2 - L_bar ** 2 * alpha / (2 * eta) - quad) \
        / (3 * c2 * (gc.lam_max_NtN + alpha ** 2 * L_bar ** 2))
    return _min(first, second)


CERT_A_GRID = (0.5, 0.7, 0.9)


def certificate(A, phi, L_f: float, S_f: float | None, a: float | None = None,
                eta: float | None = None, sigma: float | None = None,
                grid: int = 25) -> ConvergenceCertificate:
    """Evaluate the step-size condition chain for linear convergence of Normalized ExtraPush.

    Unspecified ``a``, ``eta`` and ``sigma`` are chosen by grid search (``a`` over
    0.5, 0.7, 0.9; ``eta`` and ``sigma`` over interior points of their windows) to
    maximize the width of the admissible step-size interval.
    """
    ph = _phi(phi)
    n = len(ph)
    dvec = n * ph
    L_bar = L_f / dvec.min() ** 2
    mu_bar = (S_f or 0.0) / dvec.max() ** 2
    unit = bool(np.allclose(dvec, 1.0, rtol=0, atol=1e-12))
    ok4, margin = check_assumption4(A, phi)
    cert = ConvergenceCertificate(False, False, None, L_bar, mu_bar,
                                  assumption4_margin=margin, unit_scale=unit)
    chain = cert.chain

    gc = graph_constants(A, phi)
    if gc is None:
        cert.failed = "not applicable: M = 0"
        chain.append(("M has a nonzero spectrum", False))
        return cert
    cert.applicable = True
    cert.constants = dict(c1=gc.c1, c2=gc.c2, c3=gc.c3, c7=gc.c7,
                          lam_max_MMt=gc.lam_max_MMt, lam_tilde_min_MtM=gc.lam_tilde_MtM,
                          lam_max_Msym=gc.lam_max_Msym, lam_max_NNt=gc.lam_max_NNt,
                          lam_max_NtN=gc.lam_max_NtN, lam_min_NtN_sum=gc.lam_min_NtN_sum,
                          lam_max_Nsym=gc.lam_max_Nsym)

    def fail(name):
        chain.append((name, False))
        cert.failed = name
        return cert

    if not (S_f and S_f > 0):
        return fail("no strong convexity")
    chain.append(("strong convexity S_f > 0", True))
    if not ok4:
        return fail("assumption 4: D^-1 Abar + Abar^T D^-1 not positive definite")
    chain.append(("D^-1 Abar + Abar^T D^-1 positive definite", True))

    a_lo = (2 - gc.c7) / (2 + gc.c7)
    cert.a_window = (a_lo, 1.0)
    a_cands = [a] if a is not None else [v for v in CERT_A_GRID if a_lo < v < 1]
    a_cands = [v for v in a_cands if a_lo < v < 1]
    if not a_cands:
        cert.a = a if a is not None else math.nan
        return fail("a window: (2 - c7)/(2 + c7) < a < 1")
    chain.append(("a window", True))

    best = None
    first_fail = None
    for av in a_cands:
        res = _search(gc, L_bar, mu_bar, av, eta, sigma, grid)
        if res["failed"] is None:
            if best is None or res["width"] > best["width"]:
                best = res
        elif first_fail is None or res["depth"] > first_fail["depth"]:
            first_fail = res
    res = best or first_fail
    cert.a, cert.eta, cert.sigma = res["a"], res["eta"], res["sigma"]
    cert.eta_window = res.get("eta_window", cert.eta_window)
    cert.sigma_window = res.get("sigma_window", cert.sigma_window)
    cert.alpha_interval = res.get("alpha_interval", cert.alpha_interval)
    cert.constants.update(res.get("constants", {}))
    for name in res["passed"]:
        chain.append((name, True))
    if res["failed"] is not None:
        return fail(res["failed"])

    lo, hi = cert.alpha_interval
    cert.alpha = (lo + hi) / 2
    cert.delta = delta_bound(gc, L_bar, mu_bar, cert.eta, cert.sigma, cert.alpha)
    if not cert.delta > 0:
        return fail("delta > 0 at the interval midpoint")
    chain.append(("delta > 0", True))
    cert.feasible = True
    return cert


def _interior(lo, hi, k):
    return [lo + (hi - lo) * (i + 1) / (k + 1) for i in range(k)]


def _search(gc, L_bar, mu_bar, a, eta, sigma, grid):
    """Walk the chain for one ``a``; ``depth`` counts links passed."""
    out = dict(a=a, eta=math.nan if eta is None else eta,
               sigma=math.nan if sigma is None else sigma, passed=[], depth=0, failed=None)
    probe = chain_constants(gc, L_bar, mu_bar, a, eta or 1.0, sigma or 1.0)
    out["constants"] = {k: probe[k] for k in ("c8", "mu_required")}
    if not mu_bar > probe["mu_required"]:
        out["failed"] = "mu_bar lower bound: mu_bar > (sqrt(6 c1/(1-a^2)) + sqrt((1-a^2)/(6 c1))/c8) L_bar"
        if eta is not None and sigma is not None:
            out["constants"] = probe
        return out
    out["passed"].append("mu_bar lower bound")
    out["depth"] = 1

    e_lo, e_hi = probe["eta_lo"], probe["eta_hi"]
    out["eta_window"] = (e_lo, e_hi)
    etas = [eta] if eta is not None else (_interior(e_lo, e_hi, grid) if e_lo < e_hi else [])
    etas = [e for e in etas if e_lo < e < e_hi]
    if not etas:
        out["failed"] = "eta window empty or eta outside it"
        return out
    out["passed"].append("eta window")
    out["depth"] = 2

    best = None
    deepest = None
    for ev in etas:
        c = chain_constants(gc, L_bar, mu_bar, a, ev, 1.0)
        s_lo, s_hi = c["sigma_lo"], c["sigma_hi"]
        sigmas = [sigma] if sigma is not None else (_interior(s_lo, s_hi, grid) if s_lo < s_hi else [])
        sigmas = [s for s in sigmas if s > 0 and s_lo < s < s_hi]
        if not sigmas:
            deepest = deepest or dict(eta=ev, failed="sigma window empty (Delta3 <= 0) or sigma outside it",
                                      sigma_window=(s_lo, s_hi), constants=c, depth=2)
            continue
        for sv in sigmas:
            c = chain_constants(gc, L_bar, mu_bar, a, ev, sv)
            lo, hi = c["alpha_lo"], c["alpha_hi"]
            if lo < hi and hi > 0:
                width = hi - max(lo, 0.0)
                if best is None or width > best["width"]:
                    best = dict(eta=ev, sigma=sv, width=width, constants=c,
                                sigma_window=(s_lo, s_hi), alpha_interval=(max(lo, 0.0), hi))
            elif deepest is None or deepest["depth"] < 3:
                deepest = dict(eta=ev, sigma=sv, failed="alpha window empty (Delta1 < 0, Delta2 < 0 or lo >= hi)",
                               sigma_window=(s_lo, s_hi), constants=c, depth=3,
                               alpha_interval=(lo, hi))
    if best is None:
        out.update({k: v for k, v in deepest.items()})
        if deepest["depth"] >= 3:
            out["passed"].append("sigma window")
        return out
    out.update(best)
    out["passed"] += ["sigma window", "alpha window"]
    out["depth"] = 4
    return out


def format_certificate(cert: ConvergenceCertificate) -> str:
    """Structured text report of a :class:`ConvergenceCertificate`."""
    lines = ["step-size certificate (Normalized ExtraPush, linear rate)"]
    if not cert.applicable:
        lines.append(f"verdict: {cert.failed}")
        return "\n".join(lines) + "\n"
    lines.append(f"  L_bar  = {cert.L_bar:.10g}")
    lines.append(f"  mu_bar = {cert.mu_bar:.10g}")
    if cert.unit_scale:
        lines.append("  D = I (doubly stochastic mixing): L_bar = L_f, mu_bar = S_f")
    lines.append(f"  assumption-4 margin = {cert.assumption4_margin:.10g}")
    for k in sorted(cert.constants):
        lines.append(f"  {k} = {cert.constants[k]:.10g}")
    lines.append(f"  a = {cert.a:.6g}  window = ({cert.a_window[0]:.6g}, {cert.a_window[1]:.6g})")
    lines.append(f"  eta = {cert.eta:.6g}  window = ({cert.eta_window[0]:.6g}, {cert.eta_window[1]:.6g})")
    lines.append(f"  sigma = {cert.sigma:.6g}  window = ({cert.sigma_window[0]:.6g}, {cert.sigma_window[1]:.6g})")
    lines.append(f"  alpha interval = ({cert.alpha_interval[0]:.10g}, {cert.alpha_interval[1]:.10g})")
    lines.append(f"  delta bound at alpha = {cert.alpha:.6g}: {cert.delta:.6g}")
    lines.append("condition chain:")
    for name, ok in cert.chain:
        lines.append(f"  [{'ok' if ok else 'FAIL'}] {name}")
    if cert.feasible:
        lines.append(f"verdict: feasible; alpha in ({cert.alpha_interval[0]:.6g}, {cert.alpha_interval[1]:.6g}) is certified")
    else:
        lines.append(f"verdict: infeasible; first failing condition: {cert.failed}")
    return "\n".join(lines) + "\n"


def decaying_window(errors, floor_rel: float = 1e-10) -> slice:
    """Prefix of a run before the error first falls to ``floor_rel`` times its start.

    Past that point the history sits on a rounding floor and stops being geometric.
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0 or not e[0] > 0:
        return slice(0, 0)
    below = np.flatnonzero(~(e > floor_rel * e[0]))
    return slice(0, int(below[0]) + 1 if below.size else e.size)
