"""Verification suites: oracle identities, divergence axioms, gradient checks
and the exploratory penalized-SGAN conjecture."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import objectives as obj
from . import oracle
from .nets import MLP, MlpSpec

__all__ = ["Check", "SUITES", "run_suite", "format_table", "suite_axioms", "suite_lemmas",
           "suite_gradcheck", "suite_conjecture", "broken_evaluator"]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    mandatory: bool = True


def format_table(checks) -> str:
    width = max([len(c.name) for c in checks] + [5])
    lines = []
    for c in checks:
        status = "pass" if c.passed else ("FAIL" if c.mandatory else "note")
        lines.append(f"{c.name.ljust(width)}  {status}  {c.detail}".rstrip())
    return "\n".join(lines)


# -- axioms ---------------------------------------------------------------

def broken_evaluator(p, q, d):
    """Negative control: a signed first-moment gap, which goes negative."""
    idx = np.arange(len(p))
    return float(np.dot(idx, np.asarray(p) - np.asarray(q)))


def suite_axioms(trials: int = 1000, seed: int = 0, negative_control: bool = False,
                 neural: bool = True) -> list[Check]:
    evaluators = {
        "js_exact": lambda p, q, d: oracle.js_exact(p, q),
        "qp_div_exact": lambda p, q, d: oracle.qp_div_exact(p, q, d, 1.0),
        "tilde_L_exact": oracle.tilde_L_exact,
        "wasserstein_exact": oracle.wasserstein_exact,
    }
    if negative_control:
        evaluators = {"negative_control": broken_evaluator}
    checks = []
    for i, (name, fn) in enumerate(evaluators.items()):
        sampler = oracle.instance_sampler(seed + i, n_max=8)
        report = oracle.check_divergence_axioms(fn, sampler, trials, name=name)
        detail = f"{trials} instances, {len(report.violations)} violations"
        if report.violations:
            v = report.violations[0]
            detail += f" (first: {v.kind} value={v.value:.3g})"
        checks.append(Check(f"axioms {name}", report.passed, detail))
    if neural and not negative_control:
        from .harness import data as toy
        from .harness.estimation import EstimateConfig, evaluate_neural_divergence
        g = toy.gaussian([0.0, 0.0])
        est = evaluate_neural_divergence("qp", g, g, EstimateConfig(lam=5.0, hidden=(64, 64), max_steps=2000,
                                                                     seed=seed))
        checks.append(Check("neural qp_div at p=q", abs(est.value) < 0.02, f"|estimate| = {abs(est.value):.3g} < 0.02"))
    return checks


# -- lemmas ---------------------------------------------------------------

def suite_lemmas(trials: int = 100, seed: int = 0) -> list[Check]:
    checks = []
    rng = np.random.default_rng(seed)

    # point masses
    worst = 0.0
    for lam, dist in [(1.0, 3.0), (0.5, 2.0), (2.0, 0.25), (10.0, 1.0)]:
        p, q = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        d = np.array([[0.0, dist], [dist, 0.0]])
        worst = max(worst, abs(oracle.qp_div_exact(p, q, d, lam) - 0.5 * lam * dist))
    checks.append(Check("qp_div dirac: expected 0.5*lambda*d", worst < 1e-12, f"max abs error {worst:.2e}"))
    js = oracle.js_exact([1.0, 0.0], [0.0, 1.0])
    checks.append(Check("js dirac: expected log 2", abs(js - math.log(2)) < 1e-12, f"abs error {abs(js - math.log(2)):.2e}"))
    w = oracle.wasserstein_exact([1.0, 0.0], [0.0, 1.0], np.array([[0.0, 3.0], [3.0, 0.0]]))
    checks.append(Check("wasserstein dirac: expected d", abs(w - 3.0) < 1e-9, f"abs error {abs(w - 3.0):.2e}"))

    # tabular ascent against the closed form
    sampler = oracle.instance_sampler(seed, n_max=8)
    val_err = crit_err = 0.0
    for _ in range(trials):
        inst = sampler()
        lam = float(rng.uniform(0.1, 10.0))
        value, table = oracle.maximize_tabular("qp", inst.p, inst.q, inst.d, lam)
        val_err = max(val_err, abs(value - oracle.qp_div_exact(inst.p, inst.q, inst.d, lam)))
        z = table - table.T
        crit_err = max(crit_err, float(np.max(np.abs(z - oracle.optimal_critic(inst.p, inst.q, inst.d, lam)))))
    checks.append(Check("tabular qp ascent matches closed form", val_err < 1e-6, f"{trials} instances, max error {val_err:.2e}"))
    checks.append(Check("tabular critic matches optimal critic", crit_err < 1e-4, f"max entrywise error {crit_err:.2e}"))

    js_err = 0.0
    for _ in range(min(trials, 50)):
        inst = sampler()
        js_err = max(js_err, abs(oracle.maximize_tabular("js", inst.p, inst.q)[0] - oracle.js_exact(inst.p, inst.q)))
    checks.append(Check("tabular js ascent matches js_exact", js_err < 1e-6, f"max error {js_err:.2e}"))

    # adaptive Lipschitz bound and its equality case
    ratio_max, one_hot_gap = 0.0, 0.0
    for _ in range(1000):
        inst = sampler()
        z = oracle.optimal_critic(inst.p, inst.q, inst.d, 1.0)
        off = ~np.eye(len(inst.p), dtype=bool)
        ratio_max = max(ratio_max, float(np.max(np.abs(z[off]) / inst.d[off])))
        n = len(inst.p)
        i, j = rng.choice(n, size=2, replace=False)
        p1, q1 = np.eye(n)[i], np.eye(n)[j]
        zz = oracle.optimal_critic(p1, q1, inst.d, 1.0)
        one_hot_gap = max(one_hot_gap, abs(abs(zz[i, j]) / inst.d[i, j] - 1.0))
    checks.append(Check("optimal critic |z*|/(lambda d) <= 1", ratio_max <= 1.0 + 1e-12, f"max ratio {ratio_max:.12f}"))
    checks.append(Check("optimal critic ratio = 1 on one-hot pairs", one_hot_gap < 1e-12, f"max gap {one_hot_gap:.2e}"))

    # lambda scaling
    lin_err = free_err = ident_err = 0.0
    for _ in range(trials):
        inst = sampler()
        base = oracle.qp_div_exact(inst.p, inst.q, inst.d, 1.0)
        tl = oracle.tilde_L_exact(inst.p, inst.q, inst.d)
        for lam in (0.1, 0.5, 2.0, 10.0):
            lin_err = max(lin_err, abs(oracle.qp_div_exact(inst.p, inst.q, inst.d, lam) - lam * base))
            ident_err = max(ident_err, abs(oracle.qp_div_exact(inst.p, inst.q, inst.d, lam) - 0.5 * lam * tl))
        free_err = max(free_err, abs(tl - oracle.tilde_L_exact(inst.p, inst.q, inst.d)))
    checks.append(Check("qp_div_exact linear in lambda", lin_err < 1e-12, f"max error {lin_err:.2e}"))
    checks.append(Check("tilde_L_exact independent of lambda", free_err < 1e-12, f"max error {free_err:.2e}"))
    checks.append(Check("qp_div_exact = (lambda/2) tilde_L_exact", ident_err < 1e-12, f"max error {ident_err:.2e}"))

    # two-point Wasserstein: projected ascent against the LP
    w_err = 0.0
    for _ in range(20):
        inst = oracle.random_instance(rng, n_max=2, n_min=2)
        w_err = max(w_err, abs(oracle.maximize_tabular("wasserstein", inst.p, inst.q, inst.d)[0]
                               - oracle.wasserstein_exact(inst.p, inst.q, inst.d)))
    checks.append(Check("tabular wasserstein (n=2) matches LP", w_err < 1e-6, f"max error {w_err:.2e}"))
    return checks


# -- gradient checks ------------------------------------------------------

def _op_cases(rng):
    pos = lambda *s: rng.uniform(0.5, 2.0, size=s)
    any_ = lambda *s: rng.normal(size=s)
    away = lambda *s: np.sign(rng.normal(size=s)) * rng.uniform(0.2, 2.0, size=s)
    return {
        "add": (lambda a, b: ag.tsum(ag.add(a, b) * a), [any_(3, 4), any_(4)]),
        "sub": (lambda a, b: ag.tsum(ag.sub(a, b) * a), [any_(3, 4), any_(3, 1)]),
        "mul": (lambda a, b: ag.tsum(ag.mul(a, b)), [any_(3, 4), any_(1, 4)]),
        "div": (lambda a, b: ag.tsum(ag.div(a, b)), [any_(3, 4), pos(3, 4)]),
        "neg": (lambda a: ag.tsum(ag.neg(a) * a), [any_(5)]),
        "matmul": (lambda a, b: ag.tsum(ag.square(ag.matmul(a, b))), [any_(3, 4), any_(4, 2)]),
        "affine": (lambda a, b, c: ag.tsum(ag.square(ag.affine(a, b, c))), [any_(3, 4), any_(4, 2), any_(2)]),
        "transpose": (lambda a: ag.tsum(ag.transpose(a) * np.arange(6.0).reshape(3, 2)), [any_(2, 3)]),
        "reshape": (lambda a: ag.tsum(ag.reshape(a, (3, 2)) * np.arange(6.0).reshape(3, 2)), [any_(2, 3)]),
        "broadcast_to": (lambda a: ag.tsum(ag.broadcast_to(a, (3, 4)) * np.arange(12.0).reshape(3, 4)), [any_(1, 4)]),
        "sum": (lambda a: ag.tsum(ag.square(ag.tsum(a, axis=0))), [any_(3, 4)]),
        "mean": (lambda a: ag.tsum(ag.square(ag.mean(a, axis=1))), [any_(3, 4)]),
        "tanh": (lambda a: ag.tsum(ag.tanh(a)), [any_(6)]),
        "sigmoid": (lambda a: ag.tsum(ag.sigmoid(a)), [any_(6)]),
        "relu": (lambda a: ag.tsum(ag.relu(a) * a), [away(6)]),
        "log": (lambda a: ag.tsum(ag.log(a)), [pos(6)]),
        "exp": (lambda a: ag.tsum(ag.exp(a)), [any_(6)]),
        "square": (lambda a: ag.tsum(ag.square(a)), [any_(6)]),
        "sqrt": (lambda a: ag.tsum(ag.sqrt(a)), [pos(6)]),
        "abs": (lambda a: ag.tsum(ag.absolute(a) * a), [away(6)]),
        "clip": (lambda a: ag.tsum(ag.clip(a, -0.1, 0.1) * a), [away(6)]),
        "slice": (lambda a: ag.tsum(ag.square(ag.slice_axis(a, 1, 1, 3))), [any_(3, 4)]),
        "concatenate": (lambda a, b: ag.tsum(ag.concatenate([a, b], axis=0) * np.arange(10.0).reshape(5, 2)),
                        [any_(2, 2), any_(3, 2)]),
        "l2_norm": (lambda a: ag.tsum(ag.l2_norm(a, axis=1)), [any_(3, 4)]),
        "l1_norm": (lambda a: ag.tsum(ag.l1_norm(a, axis=1)), [away(3, 4)]),
    }


def _mlp_case(rng, activation: str, head=None):
    spec = MlpSpec((3, 5, 4, 1), hidden_activation=activation, init_scale=2.0)
    net = MLP(spec, int(rng.integers(1 << 31)))
    x = rng.normal(size=(4, 3))
    shapes = [p.shape for p in net.parameters]

    def fn(*net_params):
        h = ag.as_tensor(x)
        for i in range(len(shapes) // 2):
            h = ag.affine(h, net_params[2 * i], net_params[2 * i + 1])
            if i < len(shapes) // 2 - 1:
                h = ag.relu(h) if activation == "relu" else ag.tanh(h)
        if head is not None:
            h = head(h)
        return ag.mean(h)

    # random biases: with zero biases a sample whose units are all dead sits exactly on a relu kink
    return fn, [p.data.copy() if p.ndim == 2 else rng.normal(scale=0.5, size=p.shape) for p in net.parameters]


def _penalty_case(rng, activation: str = "tanh"):
    spec = MlpSpec((2, 6, 6, 1), hidden_activation=activation, init_scale=2.0)
    net = MLP(spec, int(rng.integers(1 << 31)))
    real, fake = rng.normal(size=(5, 2)), rng.normal(size=(5, 2)) + 1.0
    seed = int(rng.integers(1 << 31))

    def fn(*tensors):
        def critic(x):
            h = x
            for i in range(3):
                h = ag.affine(h, tensors[2 * i], tensors[2 * i + 1])
                if i < 2:
                    h = ag.tanh(h) if activation == "tanh" else ag.relu(h)
            return h
        return obj.gradient_penalty(critic, ag.Tensor(real), ag.Tensor(fake), np.random.default_rng(seed))

    return fn, [p.data.copy() if p.ndim == 2 else rng.normal(scale=0.5, size=p.shape) for p in net.parameters]


def suite_gradcheck(points: int = 10, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    worst_all = 0.0
    for name, _ in _op_cases(rng).items():
        worst = 0.0
        for _ in range(points):
            fn, args = _op_cases(rng)[name]
            worst = max(worst, ag.grad_check(fn, args))
        worst_all = max(worst_all, worst)
        checks.append(Check(f"gradcheck {name}", worst < 1e-4, f"max relative error {worst:.2e}"))
    for label, act, head in [("mlp relu", "relu", None), ("mlp tanh", "tanh", None),
                             ("mlp sigmoid head", "tanh", ag.sigmoid)]:
        worst = max(ag.grad_check(*_mlp_case(rng, act, head)) for _ in range(3))
        worst_all = max(worst_all, worst)
        checks.append(Check(f"gradcheck {label}", worst < 1e-4, f"max relative error {worst:.2e}"))
    gp = max(ag.grad_check(*_penalty_case(rng)) for _ in range(3))
    checks.append(Check("gradcheck gradient penalty (double backprop)", gp < 1e-3, f"max relative error {gp:.2e}"))
    gp = max(ag.grad_check(*_penalty_case(rng, "relu")) for _ in range(3))
    checks.append(Check("gradcheck gradient penalty relu (double backprop)", gp < 1e-3,
                        f"max relative error {gp:.2e}"))
    checks.append(Check("gradcheck max first-order error", worst_all < 1e-4, f"{worst_all:.2e}"))
    return checks


# -- conjecture (report only) ---------------------------------------------

def suite_conjecture(trials: int = 500, lambdas=(0.1, 1.0, 10.0), seed: int = 0, out_dir=None,
                     base="sgan") -> list[Check]:
    sampler = oracle.instance_sampler(seed, n_max=6)
    report = oracle.explore_conjecture(base, lambdas, sampler, trials)
    checks = [Check(f"conjecture {report.base} lambda={lam:g}", r.passed,
                    f"{r.trials} instances, {len(r.violations)} violations", mandatory=False)
              for lam, r in report.reports.items()]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "conjecture_findings.txt").write_text(report.to_text() + "\n", encoding="utf-8")
        with open(out / "conjecture_counterexamples.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["kind", "lambda", "value", "p", "q", "points"], lineterminator="\n")
            w.writeheader()
            for v in report.counterexamples:
                w.writerow(v.as_row())
    return checks


SUITES = {
    "axioms": suite_axioms,
    "lemmas": suite_lemmas,
    "gradcheck": suite_gradcheck,
    "conjecture": suite_conjecture,
}


def run_suite(name: str, **kwargs) -> list[Check]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](**kwargs)
