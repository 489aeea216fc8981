"""Per-agent objectives ``f(x) = sum_i f_i(x)`` and the experiment instance generator."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

INSTANCE_FORMAT_VERSION = 1


class DegenerateSystemWarning(RuntimeWarning):
    pass


class PlacementError(RuntimeError):
    pass


class ObjectiveSuite:
    """Base class: subclasses provide ``value(i, x)`` and ``grad(i, x)``.

    ``lipschitz`` is ``L_f = max_i L_i``; ``strong_convexity`` is ``S_f = min_i S_i``
    or ``None`` when no global constant is known.
    """

    n: int
    p: int
    lipschitz: float
    strong_convexity: float | None = None

    def value(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def total(self, x: np.ndarray) -> float:
        """``sum_i f_i(x_(i))`` for a stacked ``n x p`` argument."""
        return float(sum(self.value(i, x[i]) for i in range(self.n)))


def grad_stack(obj: ObjectiveSuite, x) -> np.ndarray:
    """Stacked gradient: row ``i`` is ``grad f_i(x_(i))``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (obj.n, obj.p):
        raise ValueError(f"expected shape {(obj.n, obj.p)}, got {x.shape}")
    out = np.empty_like(x)
    for i in range(obj.n):
        out[i] = obj.grad(i, x[i])
    return out


@dataclass(frozen=True, eq=False)
class LeastSquaresData:
    blocks: tuple   # B_(i), m_i x p each
    rhs: tuple      # b_(i), length m_i each

    def __post_init__(self):
        if len(self.blocks) != len(self.rhs) or not self.blocks:
            raise ValueError("need one (B_i, b_i) pair per agent")
        p = self.blocks[0].shape[1]
        for k, (B, b) in enumerate(zip(self.blocks, self.rhs)):
            if B.ndim != 2 or B.shape[1] != p:
                raise ValueError(f"agent {k}: B has shape {B.shape}, expected (m_i, {p})")
            if b.shape != (B.shape[0],):
                raise ValueError(f"agent {k}: b has shape {b.shape}, expected ({B.shape[0]},)")

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def p(self) -> int:
        return self.blocks[0].shape[1]

    def normal_equations(self):
        """``(sum B_i^T B_i, sum B_i^T b_i)``."""
        H = sum(B.T @ B for B in self.blocks)
        g = sum(B.T @ b for B, b in zip(self.blocks, self.rhs))
        return H, g


@dataclass(frozen=True, eq=False)
class HuberData(LeastSquaresData):
    xi: float = 2.0

    def __post_init__(self):
        super().__post_init__()
        if not self.xi > 0:
            raise ValueError(f"Huber threshold must be positive, got {self.xi}")


def ls_constants(d: LeastSquaresData) -> tuple[float, float]:
    """``(L_f, S_f)``: extreme eigenvalues of the per-agent ``B_i^T B_i``."""
    L, S = [], []
    for B in d.blocks:
        ev = np.linalg.eigvalsh(B.T @ B)
        L.append(ev[-1])
        S.append(max(ev[0], 0.0))
    return float(max(L)), float(min(S))


def ls_exact_solution(d: LeastSquaresData) -> np.ndarray:
    """Minimum-norm solution of ``B x = b`` with ``B = sum B_i^T B_i``.

    Warns with :class:`DegenerateSystemWarning` if ``B`` is rank deficient.
    """
    H, g = d.normal_equations()
    x, _, rank, _ = np.linalg.lstsq(H, g, rcond=None)
    if rank < d.p:
        warnings.warn(f"normal matrix has rank {rank} < {d.p}; returning min-norm solution",
                      DegenerateSystemWarning, stacklevel=2)
    return x


class LeastSquares(ObjectiveSuite):
    """``f_i(x) = 0.5 ||B_i x - b_i||^2``."""

    def __init__(self, data: LeastSquaresData):
        self.data = data
        self.n, self.p = data.n, data.p
        self.lipschitz, self.strong_convexity = ls_constants(data)

    def value(self, i, x):
        r = self.data.blocks[i] @ x - self.data.rhs[i]
        return 0.5 * float(r @ r)

    def grad(self, i, x):
        B = self.data.blocks[i]
        return B.T @ (B @ x - self.data.rhs[i])

    def solution(self) -> np.ndarray:
        return ls_exact_solution(self.data)


def huber_loss(a, xi: float):
    a = np.asarray(a, dtype=np.float64)
    mag = np.abs(a)
    return np.where(mag <= xi, 0.5 * a * a, xi * (mag - 0.5 * xi))


def huber_slope(a, xi: float):
    return np.clip(np.asarray(a, dtype=np.float64), -xi, xi)


def huber_value_grad(h: HuberData, i: int, x) -> tuple[float, np.ndarray]:
    """Value and gradient of ``f_i(x) = sum_j H_xi(B_ij x - b_ij)``."""
    B = h.blocks[i]
    a = B @ x - h.rhs[i]
    return float(huber_loss(a, h.xi).sum()), B.T @ huber_slope(a, h.xi)


class Huber(ObjectiveSuite):
    """Huber regression. ``S_f`` is unknown: the loss is only locally strongly convex."""

    def __init__(self, data: HuberData):
        self.data = data
        self.n, self.p = data.n, data.p
        self.lipschitz = ls_constants(data)[0]
        self.strong_convexity = None

    def value(self, i, x):
        return huber_value_grad(self.data, i, x)[0]

    def grad(self, i, x):
        B = self.data.blocks[i]
        return B.T @ huber_slope(B @ x - self.data.rhs[i], self.data.xi)

    def residuals(self, i, x) -> np.ndarray:
        return self.data.blocks[i] @ x - self.data.rhs[i]


class AverageConsensus(ObjectiveSuite):
    """``f_i(x) = 0.5 ||x - target_i||^2``; the minimizer is the mean target."""

    def __init__(self, targets):
        t = np.asarray(targets, dtype=np.float64)
        self.targets = t[:, None] if t.ndim == 1 else t
        self.n, self.p = self.targets.shape
        self.lipschitz = 1.0
        self.strong_convexity = 1.0

    def value(self, i, x):
        r = x - self.targets[i]
        return 0.5 * float(r @ r)

    def grad(self, i, x):
        return x - self.targets[i]

    def solution(self) -> np.ndarray:
        return self.targets.mean(axis=0)


class ZeroObjective(ObjectiveSuite):
    """``f_i = 0``: the solvers reduce to pure (push-sum) mixing."""

    def __init__(self, n, p):
        self.n, self.p = n, p
        self.lipschitz, self.strong_convexity = 0.0, 0.0

    def value(self, i, x):
        return 0.0

    def grad(self, i, x):
        return np.zeros(self.p)


# -- experiment instances -------------------------------------------------

@dataclass(frozen=True, eq=False)
class Experiment:
    kind: str
    objective: ObjectiveSuite
    x_star: np.ndarray         # length p
    x0: np.ndarray             # n x p starting point
    seed: int
    scale: float

    @property
    def x_star_stacked(self) -> np.ndarray:
        return np.tile(self.x_star, (self.objective.n, 1))


def generate_experiment(kind: str, n: int = 5, p: int = 256, m: int = 100, seed: int = 0,
                        xi: float = 2.0, scale: float | None = None,
                        x0_floor: float = 10.0, max_tries: int = 5) -> Experiment:
    """Seeded instance of the least-squares, Huber or average-consensus problem.

    Matrix entries are ``N(0, scale^2)`` with ``scale = 1/sqrt(m)`` by default.
    For ``huber`` the noise is orthogonal to the range of the stacked ``B`` and
    scaled so every residual at ``x*`` is at most ``0.8 xi``; the common starting
    point puts every residual at least ``x0_floor * xi`` deep in the linear zone.
    """
    if min(n, p, m) < 1:
        raise ValueError("n, p and m must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    scale = 1.0 / np.sqrt(m) if scale is None else float(scale)

    if kind == "consensus":
        targets = rng.standard_normal((n, p))
        obj = AverageConsensus(targets)
        return Experiment(kind, obj, obj.solution(), np.zeros((n, p)), seed, scale)

    if kind == "ls":
        blocks = tuple(rng.standard_normal((m, p)) * scale for _ in range(n))
        rhs = tuple(rng.standard_normal(m) for _ in range(n))
        obj = LeastSquares(LeastSquaresData(blocks, rhs))
        return Experiment(kind, obj, obj.solution(), np.zeros((n, p)), seed, scale)

    if kind == "huber":
        for _ in range(max_tries):
            out = _huber_instance(rng, n, p, m, xi, scale, x0_floor)
            if out is not None:
                data, x_star, x0 = out
                return Experiment(kind, Huber(data), x_star, x0, seed, scale)
        raise PlacementError(f"could not place x0 in the linear zone after {max_tries} tries; "
                             "is n*m large relative to p?")

    raise ValueError(f"unknown problem kind {kind!r}")


def _huber_instance(rng, n, p, m, xi, scale, x0_floor):
    from scipy.optimize import linprog

    x_star = rng.standard_normal(p)
    blocks = tuple(rng.standard_normal((m, p)) * scale for _ in range(n))
    stacked = np.vstack(blocks)
    q, _ = np.linalg.qr(stacked)
    noise = rng.standard_normal(n * m)
    noise -= q @ (q.T @ noise)      # gradient of the quadratic zone vanishes at x*
    noise *= 0.8 * xi / np.abs(noise).max()
    rhs = tuple(B @ x_star + noise[k * m:(k + 1) * m] for k, B in enumerate(blocks))

    # smallest offset (sup norm) with s_j (B_j d - e_j) >= floor for signs of a random direction
    signs = np.sign(stacked @ rng.standard_normal(p))
    N = n * m
    floor = x0_floor * xi
    a_ub = np.vstack([
        np.hstack([-(signs[:, None] * stacked), np.zeros((N, 1))]),
        np.hstack([np.eye(p), -np.ones((p, 1))]),
        np.hstack([-np.eye(p), -np.ones((p, 1))]),
    ])
    b_ub = np.concatenate([-floor - signs * noise, np.zeros(2 * p)])
    cost = np.zeros(p + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * (p + 1), method="highs")
    if res.status != 0:
        return None
    x0_row = x_star + res.x[:p]
    data = HuberData(blocks, rhs, xi)
    res_star = max(np.abs(B @ x_star - b).max() for B, b in zip(blocks, rhs))
    res_x0 = min(np.abs(B @ x0_row - b).min() for B, b in zip(blocks, rhs))
    if res_star > 0.8 * xi * (1 + 1e-9) or res_x0 < floor * (1 - 1e-9):
        return None
    return data, x_star, np.tile(x0_row, (n, 1))


def save_instance(exp: Experiment, path) -> None:
    """Write an ``.npz`` container; see the README for the key layout."""
    obj = exp.objective
    arrays = {
        "format_version": np.array(INSTANCE_FORMAT_VERSION),
        "kind": np.array(exp.kind),
        "n": np.array(obj.n),
        "p": np.array(obj.p),
        "seed": np.array(exp.seed),
        "scale": np.array(exp.scale),
        "x_star": exp.x_star,
        "x0": exp.x0,
    }
    if isinstance(obj, (LeastSquares, Huber)):
        arrays["xi"] = np.array(getattr(obj.data, "xi", np.nan))
        for i in range(obj.n):
            arrays[f"B_{i}"] = obj.data.blocks[i]
            arrays[f"b_{i}"] = obj.data.rhs[i]
    elif isinstance(obj, AverageConsensus):
        arrays["targets"] = obj.targets
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_instance(path) -> Experiment:
    with np.load(Path(path), allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != INSTANCE_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported instance format version {version}")
        kind = str(z["kind"])
        n = int(z["n"])
        if kind == "consensus":
            obj = AverageConsensus(z["targets"])
        else:
            blocks = tuple(z[f"B_{i}"] for i in range(n))
            rhs = tuple(z[f"b_{i}"] for i in range(n))
            if kind == "huber":
                obj = Huber(HuberData(blocks, rhs, float(z["xi"])))
            else:
                obj = LeastSquares(LeastSquaresData(blocks, rhs))
        return Experiment(kind, obj, z["x_star"].copy(), z["x0"].copy(), int(z["seed"]), float(z["scale"]))
