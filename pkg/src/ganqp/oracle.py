"""Exact computations on finite discrete distributions.

These are the ground truth the neural estimates are checked against.

Closed forms (p, q probability vectors over a shared support, d a distance
table, a_ij = p_i q_j - p_j q_i, w_ij = p_i q_j + p_j q_i):

* the quadratic-potential objective separates over unordered pairs {i, j}
  into  a_ij z - w_ij z^2 / (2 lam d_ij)  in the antisymmetric critic value
  z = T_ij - T_ji, maximized at  z* = lam d_ij a_ij / w_ij  with value
  lam d_ij a_ij^2 / (2 w_ij);
* the generator-side divergence is  sum_ij p_i q_j d_ij a_ij / w_ij
  = sum_{i<j} d_ij a_ij^2 / w_ij, i.e. exactly 2/lam times the above.

Pairs with w_ij = 0 contribute 0 (the 0/0 case).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "DiscreteDist",
    "Instance",
    "PairFunction",
    "SGAN_PAIR",
    "DIFFERENCE_PAIR",
    "SQUARED_GAP_PAIR",
    "TabularDivergenceError",
    "distance_table",
    "js_exact",
    "qp_div_exact",
    "optimal_critic",
    "tilde_L_exact",
    "wasserstein_exact",
    "triangular_exact",
    "maximize_tabular",
    "maximize_pair_objective",
    "random_instance",
    "instance_sampler",
    "total_variation",
    "Violation",
    "AxiomReport",
    "check_divergence_axioms",
    "ConjectureReport",
    "explore_conjecture",
]

LOG2 = math.log(2.0)


class TabularDivergenceError(ArithmeticError):
    """Raised when tabular ascent runs away (objective above 1e6)."""


@dataclass
class DiscreteDist:
    probs: np.ndarray
    support_points: np.ndarray | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if np.any(self.probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}, not 1")
        if self.support_points is not None:
            pts = np.asarray(self.support_points, dtype=np.float64)
            if pts.ndim == 1:
                pts = pts[:, None]
            if len(pts) != len(self.probs):
                raise ValueError("support size does not match probability vector")
            self.support_points = pts

    @classmethod
    def dirac(cls, n: int, index: int, support_points=None) -> "DiscreteDist":
        probs = np.zeros(n)
        probs[index] = 1.0
        return cls(probs, support_points)

    def __len__(self) -> int:
        return len(self.probs)


def _probs(x) -> np.ndarray:
    return x.probs if isinstance(x, DiscreteDist) else np.asarray(x, dtype=np.float64).reshape(-1)


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ValueError("p and q must share the support indexing")
    return p, q


def distance_table(points, kind: str = "L1") -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    diff = pts[:, None, :] - pts[None, :, :]
    if kind == "L1":
        return np.abs(diff).sum(-1)
    if kind == "L2":
        return np.sqrt((diff ** 2).sum(-1))
    raise ValueError(f"unknown distance {kind!r}")


def total_variation(p, q) -> float:
    p, q = _pair(p, q)
    return 0.5 * float(np.abs(p - q).sum())


def _xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    nz = x > 0
    out[nz] = x[nz] * np.log(y[nz])
    return out


def js_exact(p, q) -> float:
    """Jensen-Shannon divergence in nats, 0 log 0 = 0."""
    p, q = _pair(p, q)
    m = 0.5 * (p + q)
    safe_m = np.where(m > 0, m, 1.0)
    return float(0.5 * _xlogy(p, p / safe_m).sum() + 0.5 * _xlogy(q, q / safe_m).sum())


def _pair_terms(p: np.ndarray, q: np.ndarray):
    pq = np.outer(p, q)
    a = pq - pq.T
    w = pq + pq.T
    return pq, a, w


def optimal_critic(p, q, d, lam: float) -> np.ndarray:
    """Antisymmetric part z*_ij = lam d_ij (p_i q_j - p_j q_i) / (p_i q_j + p_j q_i)."""
    p, q = _pair(p, q)
    d = np.asarray(d, dtype=np.float64)
    _, a, w = _pair_terms(p, q)
    safe_w = np.where(w > 0, w, 1.0)
    return np.where(w > 0, lam * d * a / safe_w, 0.0)


def qp_div_exact(p, q, d, lam: float) -> float:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    p, q = _pair(p, q)
    d = np.asarray(d, dtype=np.float64)
    _, a, w = _pair_terms(p, q)
    safe_w = np.where(w > 0, w, 1.0)
    per_pair = np.where(w > 0, lam * d * a * a / (2.0 * safe_w), 0.0)
    return float(np.triu(per_pair, 1).sum())


def tilde_L_exact(p, q, d) -> float:
    """sum_ij p_i q_j d_ij (p_i q_j - p_j q_i) / (p_i q_j + p_j q_i)."""
    p, q = _pair(p, q)
    d = np.asarray(d, dtype=np.float64)
    pq, a, w = _pair_terms(p, q)
    safe_w = np.where(w > 0, w, 1.0)
    return float(np.where(w > 0, pq * d * a / safe_w, 0.0).sum())


def wasserstein_exact(p, q, d) -> float:
    """Min-cost transport between p and q (Kantorovich primal, HiGHS LP)."""
    p, q = _pair(p, q)
    d = np.asarray(d, dtype=np.float64)
    n = len(p)
    if n > 64:
        raise ValueError("wasserstein_exact is limited to supports of size <= 64")
    rows = np.kron(np.eye(n), np.ones((1, n)))   # sum_j plan_ij = p_i
    cols = np.kron(np.ones((1, n)), np.eye(n))   # sum_i plan_ij = q_j
    res = linprog(d.reshape(-1), A_eq=np.vstack([rows, cols]), b_eq=np.concatenate([p, q]),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise ValueError(f"transport LP failed: {res.message}")
    return float(max(res.fun, 0.0))


# -- tabular dual maximization -------------------------------------------

def triangular_exact(p, q) -> float:
    """sum (p - q)^2 / (p + q): the least-squares critic's divergence at its optimum."""
    p, q = _pair(p, q)
    s = p + q
    mask = s > 0
    return float(np.sum((p[mask] - q[mask]) ** 2 / s[mask]))


def _ascend(value, gradient, curvature, x0, steps: int, lr: float = 1.0,
            project: Callable | None = None):
    """Diagonally preconditioned gradient ascent with backtracking.

    The direction is grad / |diag curvature| (coordinates with no curvature
    use a unit scale).  Each step is accepted only if it does not lower the
    objective, so the value sequence is monotone.
    """
    x = project(x0) if project else x0.copy()
    v = value(x)
    for _ in range(steps):
        g = gradient(x)
        h = np.abs(curvature(x))
        scale = np.where(h > 0, h, 1.0)
        direction = g / scale
        slope = float((g * direction).sum())
        if slope <= 0:
            break
        t = lr
        accepted = False
        while t > 1e-12:
            cand = x + t * direction
            if project:
                cand = project(cand)
            vc = value(cand)
            if vc > v + 1e-4 * t * slope or (project and vc > v):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        if vc > 1e6:
            raise TabularDivergenceError(f"objective reached {vc:.3g}; check the objective definition")
        gain = vc - v
        x, v = cand, vc
        if gain <= 1e-16 * max(1.0, abs(v)):
            break
    return v, x


def _log_sigmoid(t):
    return -np.logaddexp(0.0, -t)


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def _maximize_qp_table(p, q, d, lam, steps, lr):
    pq = np.outer(p, q)
    w = pq + pq.T
    off = ~np.eye(len(p), dtype=bool)
    lam_d = np.where(off, lam * d, 1.0)

    def value(T):
        z = T - T.T
        return float(np.where(off, pq * (z - z * z / (2.0 * lam_d)), 0.0).sum())

    def gradient(T):
        z = T - T.T
        return np.where(off, (pq - pq.T) - w * z / lam_d, 0.0)

    def curvature(T):
        return np.where(off, w / lam_d, 0.0)

    return _ascend(value, gradient, curvature, np.zeros_like(pq), steps, lr)


def _maximize_js(p, q, steps, lr):
    def value(t):
        return float(0.5 * (p * _log_sigmoid(t)).sum() + 0.5 * (q * _log_sigmoid(-t)).sum() + LOG2)

    def gradient(t):
        s = _sigmoid(t)
        return 0.5 * p * (1.0 - s) - 0.5 * q * s

    def curvature(t):
        s = _sigmoid(t)
        return 0.5 * (p + q) * s * (1.0 - s)

    return _ascend(value, gradient, curvature, np.zeros_like(p), steps, lr)


def _lipschitz_projection(d: np.ndarray, sweeps: int = 200):
    n = len(d)

    def project(t):
        t = t.copy()
        if n == 2:
            c = 0.5 * (t[0] + t[1])
            z = np.clip(t[0] - t[1], -d[0, 1], d[0, 1])
            t[0], t[1] = c + 0.5 * z, c - 0.5 * z
            return t
        # cyclic pairwise clipping: feasible-ish, not an exact projection
        for _ in range(sweeps):
            moved = False
            for i in range(n):
                for j in range(i + 1, n):
                    gap = t[i] - t[j]
                    if abs(gap) > d[i, j]:
                        excess = 0.5 * (abs(gap) - d[i, j]) * np.sign(gap)
                        t[i] -= excess
                        t[j] += excess
                        moved = True
            if not moved:
                break
        return t

    return project


def _maximize_wasserstein(p, q, d, steps, lr):
    diff = p - q
    return _ascend(lambda t: float((diff * t).sum()), lambda t: diff, lambda t: np.zeros_like(t),
                   np.zeros_like(p), steps, lr, project=_lipschitz_projection(d))


@dataclass(frozen=True)
class PairFunction:
    """A per-pair critic term f(a, b) with a = T(x_r), b = T(x_f), plus the
    partial derivatives the tabular ascent needs (elementwise on arrays)."""
    name: str
    f: Callable
    fa: Callable
    fb: Callable
    faa: Callable
    fbb: Callable
    fab: Callable = lambda a, b: np.zeros(np.broadcast(a, b).shape)


SGAN_PAIR = PairFunction(
    "sgan",
    f=lambda a, b: 0.5 * _log_sigmoid(a) + 0.5 * _log_sigmoid(-b) + LOG2,
    fa=lambda a, b: 0.5 * (1.0 - _sigmoid(a)) + 0.0 * b,
    fb=lambda a, b: -0.5 * _sigmoid(b) + 0.0 * a,
    faa=lambda a, b: -0.5 * _sigmoid(a) * (1.0 - _sigmoid(a)) + 0.0 * b,
    fbb=lambda a, b: -0.5 * _sigmoid(b) * (1.0 - _sigmoid(b)) + 0.0 * a,
)

DIFFERENCE_PAIR = PairFunction(
    "difference",
    f=lambda a, b: a - b,
    fa=lambda a, b: np.ones(np.broadcast(a, b).shape),
    fb=lambda a, b: -np.ones(np.broadcast(a, b).shape),
    faa=lambda a, b: np.zeros(np.broadcast(a, b).shape),
    fbb=lambda a, b: np.zeros(np.broadcast(a, b).shape),
)

# not a divergence in dual form (its maximum is always 0); negative control
SQUARED_GAP_PAIR = PairFunction(
    "squared_gap",
    f=lambda a, b: -(a - b) ** 2,
    fa=lambda a, b: -2.0 * (a - b),
    fb=lambda a, b: 2.0 * (a - b),
    faa=lambda a, b: -2.0 * np.ones(np.broadcast(a, b).shape),
    fbb=lambda a, b: -2.0 * np.ones(np.broadcast(a, b).shape),
    fab=lambda a, b: 2.0 * np.ones(np.broadcast(a, b).shape),
)


def maximize_pair_objective(pair: PairFunction, p, q, d, lam: float | None = None,
                            steps: int = 5000, lr: float = 1.0):
    """Maximize E_{p x q}[g(f(T(x_r), T(x_f)))] over a single-input table T.

    With ``lam`` set, g(f) = f - f^2 / (2 lam d); coincident pairs (i = j,
    d = 0) are then left out, mirroring a continuous space where x_r = x_f
    has probability zero.  Without ``lam`` all pairs count and g(f) = f.
    """
    p, q = _pair(p, q)
    d = np.asarray(d, dtype=np.float64)
    n = len(p)
    P = np.outer(p, q)
    if lam is not None:
        if not lam > 0:
            raise ValueError("lambda must be positive")
        mask = ~np.eye(n, dtype=bool)
        lam_d = np.where(mask, lam * d, 1.0)
        P = np.where(mask, P, 0.0)
    else:
        mask = np.ones((n, n), dtype=bool)

    def grids(t):
        return t[:, None], t[None, :]

    def value(t):
        a, b = grids(t)
        f = pair.f(a, b)
        g = f - f * f / (2.0 * lam_d) if lam is not None else f
        return float((P * g).sum())

    def slopes(t):
        a, b = grids(t)
        f = pair.f(a, b)
        if lam is None:
            return f, np.ones_like(f), np.zeros_like(f)
        return f, 1.0 - f / lam_d, -1.0 / lam_d

    def gradient(t):
        a, b = grids(t)
        _, g1, _ = slopes(t)
        return (P * g1 * pair.fa(a, b)).sum(axis=1) + (P * g1 * pair.fb(a, b)).sum(axis=0)

    def curvature(t):
        a, b = grids(t)
        _, g1, g2 = slopes(t)
        fa, fb = pair.fa(a, b), pair.fb(a, b)
        rows = (P * (g2 * fa * fa + g1 * pair.faa(a, b))).sum(axis=1)
        cols = (P * (g2 * fb * fb + g1 * pair.fbb(a, b))).sum(axis=0)
        diag = np.diag(P * (g2 * 2.0 * fa * fb + g1 * 2.0 * pair.fab(a, b))) if lam is None else 0.0
        return rows + cols + diag

    return _ascend(value, gradient, curvature, np.zeros(n), steps, lr)


def maximize_tabular(kind: str, p, q, d=None, lam: float = 1.0, steps: int = 10000, lr: float = 1.0):
    """Brute-force dual maximization over a critic table.

    kind:
      ``"qp"``          pairwise table T[i, j], quadratic-potential objective
      ``"js"``          single-input T[i], JS dual with the + log 2 offset
      ``"wasserstein"`` single-input T[i] projected onto |T_i - T_j| <= d_ij
                        (exact projection only for n = 2)
      ``"sgan_qp"``     single-input T[i], SGAN pair term with the quadratic penalty

    Returns ``(value, table)``.
    """
    p, q = _pair(p, q)
    if kind == "js":
        return _maximize_js(p, q, steps, lr)
    if d is None:
        raise ValueError(f"objective {kind!r} needs a distance table")
    d = np.asarray(d, dtype=np.float64)
    if kind == "qp":
        if not lam > 0:
            raise ValueError("lambda must be positive")
        return _maximize_qp_table(p, q, d, lam, steps, lr)
    if kind == "wasserstein":
        return _maximize_wasserstein(p, q, d, steps, lr)
    if kind == "sgan_qp":
        return maximize_pair_objective(SGAN_PAIR, p, q, d, lam, steps, lr)
    raise ValueError(f"unknown tabular objective {kind!r}")


# -- random instances and axiom checking ---------------------------------

@dataclass
class Instance:
    p: np.ndarray
    q: np.ndarray
    d: np.ndarray
    points: np.ndarray


def random_instance(rng: np.random.Generator, n_max: int = 6, n_min: int = 2,
                    dims=(1, 2), distance: str = "L1") -> Instance:
    """Flat-Dirichlet p and q on n uniform points in [-1, 1]^k."""
    n = int(rng.integers(n_min, n_max + 1))
    k = int(rng.choice(dims))
    points = rng.uniform(-1.0, 1.0, size=(n, k))
    p = rng.dirichlet(np.ones(n))
    q = rng.dirichlet(np.ones(n))
    return Instance(p, q, distance_table(points, distance), points)


def instance_sampler(seed: int, **kwargs) -> Callable[[], Instance]:
    rng = np.random.default_rng(seed)
    return lambda: random_instance(rng, **kwargs)


@dataclass
class Violation:
    kind: str
    value: float
    p: list
    q: list
    points: list
    lam: float | None = None

    def as_row(self) -> dict:
        return {"kind": self.kind, "lambda": "" if self.lam is None else self.lam, "value": self.value,
                "p": " ".join(f"{x:.17g}" for x in self.p), "q": " ".join(f"{x:.17g}" for x in self.q),
                "points": "/".join(" ".join(f"{c:.17g}" for c in pt) for pt in self.points)}


@dataclass
class AxiomReport:
    name: str
    trials: int
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_text(self) -> str:
        lines = [f"{self.name}: {self.trials} instances, {len(self.violations)} violations"]
        for v in self.violations:
            lines.append(f"  {v.kind}: value={v.value:.6g} lambda={v.lam} p={np.round(v.p, 6).tolist()} "
                         f"q={np.round(v.q, 6).tolist()} support={np.round(v.points, 6).tolist()}")
        return "\n".join(lines)


def check_divergence_axioms(evaluator: Callable, sampler: Callable[[], Instance], trials: int,
                            name: str = "divergence", lam: float | None = None,
                            tv_threshold: float = 0.05) -> AxiomReport:
    """Fuzz nonnegativity, D[p, p] = 0 and D[p, q] > 0 for p != q.

    ``evaluator(p, q, d)`` returns the divergence value.  Violations are
    collected, never raised.
    """
    report = AxiomReport(name, trials)
    for _ in range(trials):
        inst = sampler()
        record = dict(p=inst.p.tolist(), q=inst.q.tolist(), points=inst.points.tolist(), lam=lam)
        value = float(evaluator(inst.p, inst.q, inst.d))
        if value < -1e-9:
            report.violations.append(Violation("negative", value, **record))
        same = float(evaluator(inst.p, inst.p, inst.d))
        if same > 1e-9:
            report.violations.append(Violation("nonzero_at_p_eq_q", same,
                                               **{**record, "q": inst.p.tolist()}))
        if value < 1e-9 and total_variation(inst.p, inst.q) > tv_threshold:
            report.violations.append(Violation("zero_for_p_ne_q", value, **record))
    return report


@dataclass
class ConjectureReport:
    base: str
    reports: dict = field(default_factory=dict)

    @property
    def counterexamples(self) -> list:
        return [v for r in self.reports.values() for v in r.violations]

    def to_text(self) -> str:
        lines = [f"penalized {self.base}: status is exploratory, not a proof"]
        for lam, r in self.reports.items():
            lines.append(f"lambda={lam:g}: {r.trials} instances, {len(r.violations)} violations")
        for v in self.counterexamples:
            lines.append(f"  counterexample {v.kind} lambda={v.lam:g} value={v.value:.6g} "
                         f"p={np.round(v.p, 6).tolist()} q={np.round(v.q, 6).tolist()} "
                         f"support={np.round(v.points, 6).tolist()}")
        return "\n".join(lines)


_BASES = {"sgan": SGAN_PAIR, "difference": DIFFERENCE_PAIR, "squared_gap": SQUARED_GAP_PAIR}


def explore_conjecture(base, lambdas, sampler: Callable[[], Instance], trials: int,
                       steps: int = 5000) -> ConjectureReport:
    """Fuzz the divergence axioms for f - f^2/(2 lam d) built on a base pair term.

    ``base`` is a :class:`PairFunction` or one of ``"sgan"``, ``"difference"``,
    ``"squared_gap"`` (the last is a deliberate non-divergence).
    """
    pair = _BASES[base] if isinstance(base, str) else base
    report = ConjectureReport(pair.name)
    for lam in lambdas:
        def evaluator(p, q, d, lam=lam):
            return maximize_pair_objective(pair, p, q, d, lam, steps=steps)[0]
        report.reports[float(lam)] = check_divergence_axioms(
            evaluator, sampler, trials, name=f"penalized {pair.name}", lam=float(lam))
    return report
