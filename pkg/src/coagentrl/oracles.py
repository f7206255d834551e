"""Self-checks run by ``coagentrl verify``.

Every check returns a :class:`CheckResult` carrying the observed statistic
and the tolerance it was held to, so failures read as "observed vs expected".
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import neurons as nm
from .analysis import bandit_2_4_2, expected_coagent_update_mc, expected_update_analytic
from .autodiff import Tape, tape_backward
from .learning import Critic, coagent_update, critic_update, hebbian_update, td_error
from .mathcore import gumbel_sample, rng_stream, softmax
from .network import CoagentNetwork, Topology

FD_STEP = 1e-6
FD_TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    passed: bool
    observed: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<28} observed={self.observed:.3g}  tolerance={self.tolerance:.3g}"
                f"  ({self.seconds:.1f}s) {self.detail}").rstrip()


def rel_error(a, b) -> float:
    """``|a - b| / max(|a|, |b|)`` in the max norm, with a tiny floor."""
    a, b = np.ravel(np.asarray(a, dtype=float)), np.ravel(np.asarray(b, dtype=float))
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), 1e-8)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


def central_difference(f, theta, h: float = FD_STEP) -> np.ndarray:
    theta = np.array(theta, dtype=float)
    grad = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        orig = theta[idx]
        theta[idx] = orig + h
        up = f(theta)
        theta[idx] = orig - h
        down = f(theta)
        theta[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad


# --- log-policy gradients ------------------------------------------------------


def fd_ising(rng, n_cases=100) -> float:
    worst = 0.0
    for _ in range(n_cases):
        d = int(rng.integers(1, 6))
        x, theta = rng.normal(size=d), rng.normal(size=d + 1)
        a = int(rng.choice([-1, 1]))
        f = lambda t: nm.ising_log_policy(nm.IsingParams(t[0], t[1:]), x, a)
        db, dW = nm.ising_logpolicy_grad(nm.IsingParams(theta[0], theta[1:]), x, a)
        worst = max(worst, rel_error(np.append(db, dW), central_difference(f, theta)))
    return worst


def fd_graded(rng, n_cases=100) -> float:
    worst = 0.0
    for _ in range(n_cases):
        d = int(rng.integers(1, 6))
        x, theta = rng.normal(size=d), rng.normal(scale=0.5, size=d + 1)
        k = int(rng.integers(0, 5))
        f = lambda t: float(np.log(nm.ising_graded_policy(nm.IsingParams(t[0], t[1:]), x)[k]))
        db, dW = nm.ising_graded_logpolicy_grad(nm.IsingParams(theta[0], theta[1:]), x, k)
        worst = max(worst, rel_error(np.append(db, dW), central_difference(f, theta)))
    return worst


def fd_lif(rng, n_cases=100) -> float:
    worst = 0.0
    for _ in range(n_cases):
        d = int(rng.integers(1, 5))
        times = [sorted(rng.uniform(0, 5, size=int(rng.integers(0, 4)))) for _ in range(d)]
        t = float(rng.uniform(2, 6))
        tau = float(rng.uniform(0.5, 3))
        b, W = float(rng.normal()), rng.normal(size=d)
        a = int(rng.integers(0, 2))

        def f(w):
            p = nm.LifParams(b, w, tau_m=tau)
            s = nm.lif_fire_prob(p, nm.lif_membrane(p, times, t))
            return np.log(s) if a == 1 else np.log1p(-s)

        p = nm.LifParams(b, W, tau_m=tau)
        g = nm.lif_fire_grad(p, nm.lif_membrane(p, times, t), a, nm.psp_sums(p, times, t))
        worst = max(worst, rel_error(g, central_difference(f, W)))
    return worst


def fd_glm(rng, n_cases=100) -> float:
    worst = 0.0
    for _ in range(n_cases):
        n_in, n_lat, L, Lh, Ll, K_in, K = 2, 2, 3, 2, 2, 5, 4
        shapes = [(n_in, L), (Lh,), (n_lat, Ll), ()]
        sizes = [int(np.prod(s)) for s in shapes]
        theta = rng.normal(scale=0.5, size=sum(sizes))
        state = nm.CoagentState(x=rng.choice([-1.0, 1.0], size=(n_in, K_in)),
                                xi=rng.choice([-1.0, 1.0], size=(n_lat, K)))
        y = rng.choice([-1.0, 1.0], size=K)

        def unpack(t):
            parts = np.split(t, np.cumsum(sizes)[:-1])
            return nm.GLMParams(k=parts[0].reshape(shapes[0]), h=parts[1], l=parts[2].reshape(shapes[2]),
                                eta=float(parts[3][0]))

        g = nm.glm_logprob_grad(unpack(theta), state, y)
        flat = np.concatenate([g.k.ravel(), g.h, g.l.ravel(), [g.eta]])
        fd = central_difference(lambda t: nm.glm_spiketrain_logprob(unpack(t), state, y), theta)
        worst = max(worst, rel_error(flat, fd))
    return worst


def fd_lnp(rng, n_cases=100) -> float:
    worst = 0.0
    for _ in range(n_cases):
        d = int(rng.integers(1, 6))
        x, k = rng.normal(size=d), rng.normal(size=d)
        sigma, yg = float(rng.uniform(0.5, 2)), float(rng.normal())
        g = nm.lnp_gaussian_logpolicy_grad(k, sigma, x, yg)
        fd = central_difference(lambda kk: nm.lnp_gaussian_log_policy(kk, sigma, x, yg), k)
        worst = max(worst, rel_error(g, fd))
        yb = int(rng.choice([-1, 1]))
        gb = nm.lnp_bernoulli_update(k, x, yb, 1.0, 1.0)
        fdb = central_difference(lambda kk: nm.lnp_bernoulli_log_policy(kk, x, yb), k)
        worst = max(worst, rel_error(gb, fdb))
    return worst


# --- tape ----------------------------------------------------------------------


def _unary_cases():
    return {
        "sigmoid": (lambda t, a: t.sigmoid(a), lambda v: 1 / (1 + np.exp(-v)), False),
        "tanh": (lambda t, a: t.tanh(a), np.tanh, False),
        "exp": (lambda t, a: t.exp(a), np.exp, False),
        "log": (lambda t, a: t.log(a), np.log, True),
        "softmax": (lambda t, a: t.softmax(a), lambda v: softmax(v), False),
        "log_softmax": (lambda t, a: t.log_softmax(a),
                        lambda v: v - v.max(-1, keepdims=True)
                        - np.log(np.exp(v - v.max(-1, keepdims=True)).sum(-1, keepdims=True)), False),
        "sum": (lambda t, a: t.sum(a, axis=-1), lambda v: v.sum(-1), False),
        "neg": (lambda t, a: t.neg(a), lambda v: -v, False),
    }


def fd_tape_primitives(rng, n_cases=100) -> float:
    """Every primitive's vector-Jacobian product against finite differences."""
    worst = 0.0
    for i in range(n_cases):
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, 5)))
        for name, (op, ref, positive) in _unary_cases().items():
            x = rng.uniform(0.5, 2.0, size=shape) if positive else rng.normal(size=shape)
            r = rng.normal(size=ref(x).shape)
            tape = Tape()
            p = tape.param(x, "x")
            out = tape.sum(tape.mul(op(tape, p), r))
            g = tape_backward(tape, out)["x"]
            worst = max(worst, rel_error(g, central_difference(lambda v: float(np.sum(ref(v) * r)), x)))
        # binary primitives with broadcasting
        a, b = rng.normal(size=shape), rng.normal(size=(1, shape[1]))
        for name, op, ref in (("add", Tape.add, np.add), ("mul", Tape.mul, np.multiply)):
            r = rng.normal(size=shape)
            tape = Tape()
            pa, pb = tape.param(a, "a"), tape.param(b, "b")
            g = tape_backward(tape, tape.sum(tape.mul(op(tape, pa, pb), r)))
            worst = max(worst, rel_error(g["a"], central_difference(lambda v: float(np.sum(ref(v, b) * r)), a)))
            worst = max(worst, rel_error(g["b"], central_difference(lambda v: float(np.sum(ref(a, v) * r)), b)))
        M, v = rng.normal(size=(shape[1], 3)), rng.normal(size=shape)
        r = rng.normal(size=(shape[0], 3))
        tape = Tape()
        pv, pM = tape.param(v, "v"), tape.param(M, "M")
        g = tape_backward(tape, tape.sum(tape.mul(tape.matmul(pv, pM), r)))
        worst = max(worst, rel_error(g["v"], central_difference(lambda q: float(np.sum((q @ M) * r)), v)))
        worst = max(worst, rel_error(g["M"], central_difference(lambda q: float(np.sum((v @ q) * r)), M)))
        idx = rng.integers(0, shape[1], size=shape[0])
        r = rng.normal(size=shape[0])
        tape = Tape()
        px = tape.param(v, "x")
        g = tape_backward(tape, tape.sum(tape.mul(tape.gather(px, idx), r)))
        ref = lambda q: float(np.sum(q[np.arange(shape[0]), idx] * r))
        worst = max(worst, rel_error(g["x"], central_difference(ref, v)))
    return worst


def fd_tape_network(rng, n_cases=100) -> float:
    """Scalar loss of a random two-layer sigmoid/softmax network."""
    worst = 0.0
    for _ in range(n_cases):
        x = rng.normal(size=4)
        W1, W2 = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
        target = int(rng.integers(0, 3))

        def loss_np(w1, w2):
            h = 1 / (1 + np.exp(-(x @ w1)))
            z = h @ w2
            return -(z[target] - z.max() - np.log(np.exp(z - z.max()).sum()))

        tape = Tape()
        p1, p2 = tape.param(W1, "W1"), tape.param(W2, "W2")
        h = tape.sigmoid(tape.matmul(tape.const(x), p1))
        loss = tape.neg(tape.gather(tape.log_softmax(tape.matmul(h, p2)), target))
        g = tape_backward(tape, loss)
        worst = max(worst, rel_error(g["W1"], central_difference(lambda w: loss_np(w, W2), W1)))
        worst = max(worst, rel_error(g["W2"], central_difference(lambda w: loss_np(W1, w), W2)))
    return worst


# --- estimators and learning rules -----------------------------------------------


def mc_vs_analytic(n_samples=100_000, alpha=1.0, seed=0) -> float:
    """Largest ``|MC - exact| / SE`` over all parameters of the reference bandit."""
    net, oracle = bandit_2_4_2(seed)
    mean, se = expected_coagent_update_mc(net, oracle, n_samples, alpha=alpha, seed=seed)
    exact = expected_update_analytic(net, oracle, alpha=alpha)
    worst = []
    for m_layer, s_layer, e_layer in zip(mean, se, exact):
        for k in m_layer:
            if not (np.all(np.isfinite(m_layer[k])) and np.all(np.isfinite(s_layer[k]))):
                return float("nan")
            diff = np.abs(m_layer[k] - e_layer[k])
            z = np.where(s_layer[k] > 0, diff / np.where(s_layer[k] > 0, s_layer[k], 1.0),
                         np.where(diff > 1e-12, np.inf, 0.0))
            worst.append(float(np.max(z)))
    return float(np.max(worst))


def update_direction(alpha=1e-3, n_cases=50, seed=0) -> float:
    """Smallest increase of ln pi(sampled spikes) after a positive-delta update (should be > 0)."""
    worst = []
    for case in range(n_cases):
        net = CoagentNetwork(Topology((3, 1), (4,), 2), 1, seed + case)
        x = rng_stream(seed, 9, case).normal(size=(3, 1))
        _, trace = net.forward_sample(x)
        spikes = [s.copy() for s in trace.spikes]
        before = _spike_logprob(net, x, spikes)
        coagent_update(net, 1.0, alpha)
        after = _spike_logprob(net, x, spikes)
        worst.append(np.min(after - before))
    return float(np.min(worst))


def _spike_logprob(net, x, spikes) -> np.ndarray:
    """ln pi of the given spikes for every coagent, concatenated over layers."""
    out, inp = [], np.broadcast_to(np.asarray(x, dtype=float), (net.n_members, *np.shape(x)))
    for layer, y in zip(net.layers, spikes):
        u = layer.drive(inp)
        with np.errstate(invalid="ignore"):
            out.append((-np.logaddexp(0.0, -2.0 * u[:, :, None] * y)).sum(axis=2).ravel())
        inp = y
    return np.concatenate(out)


def sign_law() -> float:
    """Count of (x_k, a, sign delta) cases whose weight change has the wrong sign."""
    bad = 0
    for xk in (-1.0, 1.0):
        for a in (-1, 1):
            for d in (-1.0, 1.0):
                params = nm.IsingParams(0.3, np.array([0.7 * xk]))
                _, dW = nm.ising_logpolicy_grad(params, np.array([xk]), a)
                bad += int(np.sign(d * dW[0]) != np.sign(d * xk * a))
                bad += int(np.sign(hebbian_update(xk, a, 1.0)) != np.sign(xk * a))
    return float(bad)


RANDOM_WALK_TRUE = np.arange(1, 6) / 6.0


def random_walk_td(episodes: int, lam: float, alpha, seed: int = 0, init: float = 0.5) -> np.ndarray:
    """TD(lambda) on the 5-state walk (reward 1 on the right exit); returns V per step.

    ``alpha`` is a constant or a function of the episode number.
    """
    rng = rng_stream(seed, 2)
    critic = Critic("tabular", 5, 0.1, 1.0, lam, init_value=init)
    history = []
    for ep in range(episodes):
        critic.alpha = alpha(ep) if callable(alpha) else alpha
        critic.reset_trace()
        s = 2
        while True:
            s_next = s + (1 if rng.random() < 0.5 else -1)
            terminal = s_next in (-1, 5)
            r = 1.0 if s_next == 5 else 0.0
            delta = td_error(critic, s, r, None if terminal else s_next, terminal)
            critic_update(critic, delta, s)
            history.append(critic.theta.copy())
            if terminal:
                break
            s = s_next
    return np.array(history)


def td_random_walk(episodes=10_000) -> float:
    """Max error of the final values against the true ``k/6`` (decaying step size)."""
    hist = random_walk_td(episodes, 0.8, lambda ep: 0.1 / (1.0 + ep / 50.0))
    return float(np.max(np.abs(hist[-1] - RANDOM_WALK_TRUE)))


def td_lambda_zero(episodes=200) -> float:
    """Max difference between TD(lambda=0) and a hand-written TD(0) trajectory."""
    a = random_walk_td(episodes, 0.0, 0.1, seed=3)
    rng = rng_stream(3, 2)
    V = np.full(5, 0.5)
    b = []
    for _ in range(episodes):
        s = 2
        while True:
            s_next = s + (1 if rng.random() < 0.5 else -1)
            terminal = s_next in (-1, 5)
            r = 1.0 if s_next == 5 else 0.0
            V[s] += 0.1 * (r + (0.0 if terminal else V[s_next]) - V[s])
            b.append(V.copy())
            if terminal:
                break
            s = s_next
    return float(np.max(np.abs(a - np.array(b))))


GUMBEL_POLICIES = (np.array([0.2, 0.3, 0.5]), np.array([0.7, 0.2, 0.1]), np.array([1 / 3, 1 / 3, 1 / 3]))


def gumbel_max_tv(n=100_000, seed=0) -> float:
    worst = 0.0
    for i, pi in enumerate(GUMBEL_POLICIES):
        g = gumbel_sample(rng_stream(seed, 6, i), size=(n, pi.size))
        counts = np.bincount(np.argmax(np.log(pi) + g, axis=1), minlength=pi.size)
        worst = max(worst, 0.5 * float(np.abs(counts / n - pi).sum()))
    return worst


def score_identity() -> float:
    """``sum_a pi(a) grad ln pi(a)`` for binary and graded Ising coagents."""
    rng = rng_stream(0, 8)
    worst = 0.0
    for _ in range(100):
        p = nm.IsingParams(float(rng.normal()), rng.normal(size=3))
        x = rng.normal(size=3)
        pf = nm.ising_fire_prob(p, x)
        s = sum(pr * np.append(*nm.ising_logpolicy_grad(p, x, a)) for a, pr in ((1, pf), (-1, 1 - pf)))
        worst = max(worst, float(np.max(np.abs(s))))
        pi = nm.ising_graded_policy(p, x)
        s = sum(pi[k] * np.append(*nm.ising_graded_logpolicy_grad(p, x, k)) for k in range(5))
        worst = max(worst, float(np.max(np.abs(s))))
    return worst


def run_checks(alpha: float = 1.0, seed: int = 0) -> list[CheckResult]:
    """The full oracle suite.  ``alpha`` scales the coagent updates under test."""
    rng = lambda i: rng_stream(seed, 7, i)
    specs = [
        ("grad.ising", lambda: fd_ising(rng(0)), FD_TOL, "le"),
        ("grad.graded", lambda: fd_graded(rng(1)), FD_TOL, "le"),
        ("grad.lif", lambda: fd_lif(rng(2)), FD_TOL, "le"),
        ("grad.glm", lambda: fd_glm(rng(3)), FD_TOL, "le"),
        ("grad.lnp", lambda: fd_lnp(rng(4)), FD_TOL, "le"),
        ("tape.primitives", lambda: fd_tape_primitives(rng(5)), FD_TOL, "le"),
        ("tape.network", lambda: fd_tape_network(rng(6)), FD_TOL, "le"),
        ("update.direction", lambda: update_direction(1e-3 * alpha), 0.0, "gt"),
        ("update.mc_vs_analytic", lambda: mc_vs_analytic(alpha=alpha), 3.0, "le"),
        ("rule.sign_law", sign_law, 0.0, "le"),
        ("score.identity", score_identity, 1e-10, "le"),
        ("td.random_walk", td_random_walk, 1e-2, "le"),
        ("td.lambda_zero", td_lambda_zero, 0.0, "le"),
        ("gumbel.max_tv", gumbel_max_tv, 1e-2, "le"),
    ]
    results = []
    for name, fn, tol, kind in specs:
        t0 = time.perf_counter()
        try:
            value = float(fn())
            ok = value <= tol if kind == "le" else value > tol
            detail = "" if ok else f"expected {'<=' if kind == 'le' else '>'} {tol:g}"
        except Exception as exc:  # a crashing check is a failing check
            value, ok, detail = float("nan"), False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), value, tol, detail, time.perf_counter() - t0))
    return results
