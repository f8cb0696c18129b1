"""Executable checks of the extension's guaranteed properties.

Every check returns a :class:`CheckReport` and is a pure function of the
model and a seed, so reruns reproduce the same worst violation bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .envelope import (ExtensionModel, envelope_1d_oracle, envelope_eval, envelope_eval_batch,
                       finite_difference_gradient, g_function, gradient_eval, minimal_extension,
                       oracle_grid)
from .jet import JetDataset, load_dataset
from .modulus import envelope_exact, omega0_closed, omega_hat, phi_hat

KINDS = ("quadratic-form", "log-sum-exp", "softplus-max-affine")


def make_rng(seed: int) -> np.random.Generator:
    # counter-based stream: identical seeds replay identically on any platform
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class CheckReport:
    name: str
    samples: int
    worst_violation: float
    threshold: float
    passed: bool
    witnesses: tuple = ()
    gated: bool = True

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "worst": self.worst_violation,
            "threshold": self.threshold,
            "passed": self.passed,
            "gated": self.gated,
            "witnesses": [list(map(float, np.ravel(w))) for w in self.witnesses],
        }


def _report(name, viol, threshold, points, gated=True) -> CheckReport:
    viol = np.asarray(viol, dtype=float).reshape(-1)
    if viol.size == 0:
        return CheckReport(name, 0, -math.inf, threshold, True, (), gated)
    worst = float(np.max(viol))
    order = np.argsort(-viol, kind="stable")[:10]
    wit = tuple(np.asarray(points[k]) for k in order) if points is not None else ()
    return CheckReport(name, int(viol.size), worst, float(threshold), bool(worst <= threshold), wit, gated)


# ----------------------------------------------------------------------------
# reference convex functions


@dataclass(frozen=True, eq=False)
class ReferenceConvexFunction:
    """Smooth convex test functions with closed-form gradients.

    * ``quadratic-form``: ``0.5 x'Ax + b'x + c`` with ``A`` PSD
    * ``log-sum-exp``: ``tau * log sum_k exp((a_k'x + c_k) / tau)``
    * ``softplus-max-affine``: ``l_0(x) + sum_k tau * softplus((l_k - l_0)(x) / tau)``
    """

    kind: str
    A: np.ndarray = field(default=None)
    b: np.ndarray = field(default=None)
    c: np.ndarray | float = 0.0
    tau: float = 1.0

    def value(self, X):
        X = np.atleast_2d(X)
        if self.kind == "quadratic-form":
            return 0.5 * np.einsum("ni,ij,nj->n", X, self.A, X) + X @ self.b + self.c
        Z = (X @ self.A.T + self.c) / self.tau
        if self.kind == "log-sum-exp":
            return self.tau * logsumexp(Z, axis=1)
        if self.kind == "softplus-max-affine":
            D = Z[:, 1:] - Z[:, :1]
            return self.tau * (Z[:, 0] + np.sum(np.logaddexp(0.0, D), axis=1))
        raise ValueError("unknown kind %r" % self.kind)

    def gradient(self, X):
        X = np.atleast_2d(X)
        if self.kind == "quadratic-form":
            return X @ self.A.T + self.b
        Z = (X @ self.A.T + self.c) / self.tau
        if self.kind == "log-sum-exp":
            W = np.exp(Z - logsumexp(Z, axis=1, keepdims=True))
            return W @ self.A
        if self.kind == "softplus-max-affine":
            D = Z[:, 1:] - Z[:, :1]
            S = 0.5 * (1.0 + np.tanh(0.5 * D))  # logistic
            return self.A[0][None, :] + S @ (self.A[1:] - self.A[0][None, :])
        raise ValueError("unknown kind %r" % self.kind)


def random_reference(kind: str, dim: int, rng: np.random.Generator) -> ReferenceConvexFunction:
    if kind == "quadratic-form":
        M = rng.standard_normal((dim, dim))
        A = M.T @ M / dim + 0.1 * np.eye(dim)
        return ReferenceConvexFunction(kind, A, rng.standard_normal(dim), float(rng.standard_normal()))
    k = int(rng.integers(2, 5))
    A = rng.standard_normal((k, dim))
    c = rng.standard_normal(k)
    tau = float(rng.uniform(0.5, 1.0))
    if kind in ("log-sum-exp", "softplus-max-affine"):
        return ReferenceConvexFunction(kind, A, None, c, tau)
    raise ValueError("unknown kind %r" % kind)


def sample_jet(ref: ReferenceConvexFunction, points) -> JetDataset:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    f, G = ref.value(pts), ref.gradient(pts)
    return load_dataset([(pts[i], f[i], G[i]) for i in range(len(pts))], pts.shape[1])


def parabola_jet() -> JetDataset:
    """``x^2`` sampled at -1, 0, 1."""
    return load_dataset([(-1.0, 1.0, -2.0), (0.0, 0.0, 0.0), (1.0, 1.0, 2.0)], 1)


def reference_suite(count: int = 20, seed: int = 2024, max_points: int = 20) -> list[tuple[str, JetDataset]]:
    """Random jets from the reference families, cycling kinds and d in {1, 2, 3}."""
    rng = make_rng(seed)
    out = []
    for k in range(count):
        kind = KINDS[k % len(KINDS)]
        dim = 1 + (k // len(KINDS)) % 3
        ref = random_reference(kind, dim, rng)
        n = int(rng.integers(2, max_points + 1))
        pts = rng.uniform(-1.0, 1.0, (n, dim))
        out.append(("%s-d%d-n%d" % (kind, dim, n), sample_jet(ref, pts)))
    return out


# ----------------------------------------------------------------------------
# samplers


def box_points(model: ExtensionModel, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = model.box[:, 0], model.box[:, 1]
    return lo + rng.random((n, len(lo))) * (hi - lo)


def log_uniform_steps(model: ExtensionModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random vectors with norm log-uniform in ``[1e-4, box radius / 2]``."""
    d = model.dataset.dim
    radius = 0.5 * float(np.linalg.norm(model.box[:, 1] - model.box[:, 0]))
    lo, hi = math.log(1e-4), math.log(max(radius / 2, 2e-4))
    r = np.exp(rng.uniform(lo, hi, n))
    u = rng.standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return r[:, None] * u


def _fit_in_box(model, X, H):
    """Shrink steps so that ``X +- H`` stays in the box."""
    lo, hi = model.box[:, 0], model.box[:, 1]
    room = np.minimum(X - lo, hi - X)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.abs(H) > 0, room / np.abs(H), np.inf)
    s = np.minimum(1.0, ratio.min(axis=1))
    return H * s[:, None]


# ----------------------------------------------------------------------------
# checks


def check_interpolation(model: ExtensionModel, tol: float = 1e-9) -> CheckReport:
    ds = model.dataset
    viol = [abs(envelope_eval(model, ds.y[i], "shared").upper - ds.f[i]) / ds.data_scale
            for i in range(ds.n)]
    return _report("interpolation", viol, tol, ds.y)


def check_gradients(model: ExtensionModel, grad_tol: float = 1e-4) -> CheckReport:
    ds = model.dataset
    viol = [np.linalg.norm(gradient_eval(model, ds.y[i], "shared") - ds.G[i]) / ds.data_scale
            for i in range(ds.n)]
    return _report("gradients", viol, grad_tol, ds.y)


def check_gradients_fd(model: ExtensionModel, tol: float = 1e-3, step: float = 1e-5) -> CheckReport:
    """Dual gradient against central differences of ``upper`` at the data points."""
    ds = model.dataset
    h = step * ds.data_scale
    viol = []
    for i in range(ds.n):
        fd = finite_difference_gradient(model, ds.y[i], h, "shared")
        viol.append(np.linalg.norm(fd - gradient_eval(model, ds.y[i], "shared")) / ds.data_scale)
    return _report("gradients-fd", viol, tol, ds.y)


def check_sandwich(model: ExtensionModel, samples: int = 10_000, seed: int = 0,
                   tol: float = 1e-9) -> list[CheckReport]:
    """``m <= conv(g) <= g`` on random box points.

    The gated report covers ``m <= g``, ``m <= upper_shared`` and the
    query-column refinement ``m <= min(upper_shared, g) <= g``. How far the
    fixed-candidate envelope rises above ``g`` between candidates is
    reported separately and does not gate.
    """
    rng = make_rng(seed)
    X = box_points(model, samples, rng)
    scale = model.data_scale
    m, _ = minimal_extension(model.dataset, X)
    g, _, _ = g_function(model.dataset, model.modulus, X)
    shared = envelope_eval_batch(model, X, "shared")
    query = envelope_eval_batch(model, X, "query")
    viol = np.max(np.vstack([
        m - g,
        m - shared["upper"],
        m - query["upper"],
        query["upper"] - g,
        shared["lower"] - shared["upper"],
    ]), axis=0) / scale
    gated = _report("sandwich", viol, tol, X)
    excess = _report("sandwich-shared-upper", (shared["upper"] - g) / scale, tol, X, gated=False)
    return [gated, excess]


def check_convexity(model: ExtensionModel, samples: int = 10_000, seed: int = 0,
                    tol: float = 1e-9) -> CheckReport:
    rng = make_rng(seed + 1)
    X = box_points(model, samples, rng)
    Y = box_points(model, samples, rng)
    M = 0.5 * (X + Y)
    u = envelope_eval_batch(model, np.vstack([X, Y, M]), "shared")["upper"]
    ux, uy, um = u[:samples], u[samples:2 * samples], u[2 * samples:]
    viol = (um - 0.5 * (ux + uy)) / model.data_scale
    return _report("convexity", viol, tol, M)


def check_lipschitz(model: ExtensionModel, samples: int = 10_000, seed: int = 0,
                    rel_tol: float = 1e-6) -> list[CheckReport]:
    """Difference quotients of ``g`` and of the shared upper against ``5 sup|G|``."""
    rng = make_rng(seed + 2)
    ds = model.dataset
    half = samples // 2
    X = box_points(model, samples, rng)
    Y = np.vstack([box_points(model, samples - half, rng),
                   X[:half] + log_uniform_steps(model, half, rng)])
    lo, hi = model.box[:, 0], model.box[:, 1]
    Y = np.clip(Y, lo, hi)
    dist = np.linalg.norm(X - Y, axis=1)
    keep = dist > 1e-9 * ds.data_scale
    X, Y, dist = X[keep], Y[keep], dist[keep]
    bound = 5.0 * ds.grad_sup_norm
    # quotients are compared in units of the bound; a zero bound is checked absolutely
    denom = bound if bound > 0 else 1.0
    gx, _, _ = g_function(ds, model.modulus, X)
    gy, _, _ = g_function(ds, model.modulus, Y)
    qg = np.abs(gx - gy) / dist
    u = envelope_eval_batch(model, np.vstack([X, Y]), "shared")["upper"]
    qu = np.abs(u[:len(X)] - u[len(X):]) / dist
    mids = 0.5 * (X + Y)
    return [_report("lipschitz-g", (qg - bound) / denom, rel_tol, mids),
            _report("lipschitz-upper", (qu - bound) / denom, rel_tol, mids)]


def check_second_difference(model: ExtensionModel, samples: int = 10_000, seed: int = 0,
                            tol: float = 1e-9) -> list[CheckReport]:
    """``u(x+h) + u(x-h) - 2u(x) <= 2 phi_hat(2|h|)`` for ``u = g`` (gated) and shared upper."""
    rng = make_rng(seed + 3)
    ds, mod = model.dataset, model.modulus
    X = box_points(model, samples, rng)
    H = log_uniform_steps(model, samples, rng)
    scale = model.data_scale

    def second(fun, X, H):
        v = fun(np.vstack([X + H, X - H, X]))
        n = len(X)
        return v[:n] + v[n:2 * n] - 2 * v[2 * n:]

    gfun = lambda Z: g_function(ds, mod, Z)[0]
    rhs = 2.0 * phi_hat(mod, 2.0 * np.linalg.norm(H, axis=1))
    rep_g = _report("second-difference-g", (second(gfun, X, H) - rhs) / scale, tol, X)

    Hb = _fit_in_box(model, X, H)
    rhs_b = 2.0 * phi_hat(mod, 2.0 * np.linalg.norm(Hb, axis=1))
    ufun = lambda Z: envelope_eval_batch(model, Z, "shared")["upper"]
    rep_u = _report("second-difference-upper", (second(ufun, X, Hb) - rhs_b) / scale, tol, X,
                    gated=False)
    return [rep_g, rep_u]


def check_second_difference_oracle(model: ExtensionModel, grid_step: float = 1e-3,
                                   samples: int = 10_000, seed: int = 0) -> CheckReport:
    """Second differences of the 1D hull oracle on grid-aligned ``(x, h)``."""
    rng = make_rng(seed + 4)
    grid = oracle_grid(model, grid_step)
    F = envelope_1d_oracle(model, grid)[:, 1]
    n = len(grid)
    step = grid[1] - grid[0]
    k = rng.integers(1, max(2, n // 2), samples)
    i = rng.integers(0, n, samples)
    ok = (i - k >= 0) & (i + k < n)
    i, k = i[ok], k[ok]
    lhs = F[i + k] + F[i - k] - 2 * F[i]
    rhs = 2.0 * phi_hat(model.modulus, 2.0 * k * step)
    return _report("second-difference-oracle", lhs - rhs, 10 * grid_step, grid[i])


def check_modulus_chain(model: ExtensionModel, samples: int = 10_000, seed: int = 0,
                        tol: float = 1e-9) -> list[CheckReport]:
    """Majorization chain, integral chain, concavity and the radial gradient bound."""
    rng = make_rng(seed + 5)
    mod, slack = model.modulus, model.slack
    B = max(mod.b_star, 1e-300)
    t_hi = max(mod.t_max, 1.0) * 4
    ts = np.exp(rng.uniform(math.log(1e-4 * t_hi), math.log(t_hi), min(samples, 400)))
    w0 = np.array([omega0_closed(slack, t) for t in ts])
    E = np.array([envelope_exact(slack, t)[0] for t in ts])
    wh = omega_hat(mod, ts)
    cap = np.minimum(mod.S0 * ts, mod.b_star)
    chain = np.max(np.vstack([w0 - E, E - wh, wh - cap]), axis=0) / B
    reports = [_report("modulus-majorization", chain, tol, ts)]

    t_all = np.sort(np.exp(rng.uniform(math.log(1e-4 * t_hi), math.log(t_hi), samples)))
    wa = omega_hat(mod, t_all)
    integral = t_all * wa - 2.0 * phi_hat(mod, t_all)
    reports.append(_report("integral-chain", integral / np.maximum(1.0, 2.0 * phi_hat(mod, t_all)),
                           1e-12, t_all))

    # concavity and monotonicity on sampled triples, zero tolerance beyond rounding
    tri = np.sort(rng.uniform(0.0, t_hi, (samples, 3)), axis=1)
    w = omega_hat(mod, tri)
    lam = np.where(tri[:, 2] > tri[:, 0], (tri[:, 1] - tri[:, 0]) / (tri[:, 2] - tri[:, 0]), 0.0)
    interp = (1 - lam) * w[:, 0] + lam * w[:, 2]
    shape = np.maximum(interp - w[:, 1], np.maximum(w[:, 0] - w[:, 1], w[:, 1] - w[:, 2]))
    reports.append(_report("modulus-shape", shape / B, 1e-12, tri))

    # radial bump phi(x) = phi_hat(|x|) has a 5 * omega_hat modulus for its gradient
    d = model.dataset.dim
    scale_r = mod.t_max
    Xr = rng.standard_normal((samples, d)) * scale_r * np.exp(rng.uniform(-6, 1, (samples, 1)))
    Zr = rng.standard_normal((samples, d)) * scale_r * np.exp(rng.uniform(-6, 1, (samples, 1)))

    def grad(V):
        r = np.linalg.norm(V, axis=1)
        w = np.where(r > 0, omega_hat(mod, r) / np.where(r > 0, r, 1.0), 0.0)
        return w[:, None] * V

    lhs = np.linalg.norm(grad(Xr) - grad(Zr), axis=1)
    rhs = 5.0 * omega_hat(mod, np.linalg.norm(Xr - Zr, axis=1))
    reports.append(_report("radial-gradient-modulus", (lhs - rhs) / B, tol, Xr))
    return reports


SUITES = {
    "interpolation": lambda m, n, s: [check_interpolation(m)],
    "gradients": lambda m, n, s: [check_gradients(m), check_gradients_fd(m)],
    "sandwich": lambda m, n, s: check_sandwich(m, n, s),
    "convexity": lambda m, n, s: [check_convexity(m, n, s)],
    "lipschitz": lambda m, n, s: check_lipschitz(m, n, s),
    "second-difference": lambda m, n, s: check_second_difference(m, n, s),
    "modulus": lambda m, n, s: check_modulus_chain(m, n, s),
}


def run_suite(model: ExtensionModel, suite: str = "all", samples: int = 10_000,
              seed: int = 0) -> list[CheckReport]:
    names = list(SUITES) if suite == "all" else [suite]
    for name in names:
        if name not in SUITES:
            raise KeyError(name)
    out = []
    for name in names:
        out.extend(SUITES[name](model, samples, seed))
    if (suite in ("all", "second-difference")) and model.dataset.dim == 1 and not model.degenerate:
        rep = check_second_difference_oracle(model, samples=samples, seed=seed)
        out.append(rep)
    return out
