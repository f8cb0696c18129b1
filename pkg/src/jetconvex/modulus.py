"""Gradient modulus of a finite jet and its concave, integrable majorant.

For a finite jet the growth modulus reduces to pairs: with slack ``P`` and
gradient gap ``b`` of an ordered pair, the pair contributes
``(b - P / t)_+``. The concave envelope of the pairwise maximum is computed
pointwise through its concave conjugate, and a tangent-line hull of that
envelope gives the piecewise-linear majorant ``omega_hat`` whose integral
``phi_hat`` is piecewise quadratic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .jet import ROUNDING_GUARD, SlackMatrix, Tolerances

# pairs whose slack falls below this (relative to data scale) are treated as zero
P_FLOOR = 1e-12
BISECTION_STEPS = 60


@dataclass(frozen=True)
class PairPiece:
    """One ordered pair's contribution ``h(t) = (b - P/t)_+``."""

    P: float
    b: float

    @property
    def knee(self) -> float:
        return 2.0 * self.P / self.b if self.b > 0 else math.inf

    @property
    def init_slope(self) -> float:
        return self.b * self.b / (4.0 * self.P) if self.b > 0 else 0.0

    def h(self, t):
        return np.maximum(self.b - self.P / np.asarray(t, dtype=float), 0.0)

    def env(self, t):
        """Concave envelope: the tangent from the origin up to the knee, ``h`` after."""
        t = np.asarray(t, dtype=float)
        if self.b <= 0:
            return np.zeros_like(t)
        with np.errstate(divide="ignore"):
            tail = self.b - self.P / t
        return np.where(t <= self.knee, self.init_slope * t, tail)


@dataclass(frozen=True)
class PairSet:
    """The surviving pairs after dropping rounding-level ones."""

    P: np.ndarray
    b: np.ndarray
    S0: float
    B_star: float

    @property
    def degenerate(self) -> bool:
        return self.P.size == 0

    @property
    def knees(self) -> np.ndarray:
        return 2.0 * self.P / self.b

    def dual_objective(self, s: float, t: float) -> float:
        return s * t + self.conjugate(s)

    def conjugate(self, s: float) -> float:
        """``max_k (b_k - 2 sqrt(P_k s))_+``, the conjugate of the pairwise max."""
        if self.P.size == 0:
            return 0.0
        return max(0.0, float(np.max(self.b - 2.0 * np.sqrt(self.P * s))))


def pair_set(slack: SlackMatrix, tol: Tolerances | None = None) -> PairSet:
    tol = tol or Tolerances()
    scale = slack.data_scale
    P, b = slack.P, slack.b
    off = ~np.eye(P.shape[0], dtype=bool)
    b_star = float(b.max()) if b.size else 0.0
    if b_star <= tol.eps_g * scale:
        return PairSet(np.empty(0), np.empty(0), 0.0, b_star)
    p_floor = P_FLOOR * scale
    tiny = P <= p_floor
    keep = off & (b > 0) & ~(tiny & (b <= tol.eps_g * scale))
    # a surviving pair with P at the floor only arises for forced (invalid) jets
    Pk = np.maximum(P[keep], p_floor)
    bk = b[keep]
    S0 = float(np.max(bk * bk / (4.0 * Pk)))
    return PairSet(Pk, bk, S0, b_star)


def omega0_closed(slack: SlackMatrix, t: float, tol: Tolerances | None = None) -> float:
    """Growth modulus ``omega_0(t)`` of the jet, exact for finite data."""
    if not t > 0:
        raise ValueError("t must be positive")
    ps = pair_set(slack, tol)
    if ps.degenerate:
        return 0.0
    return max(0.0, float(np.max(ps.b - ps.P / t)))


def omega0_oracle(dataset, t: float, grid_step: float, n_random: int = 8, seed: int = 0) -> float:
    """Brute-force ``sup psi_i(x) / |x - y_i|`` over sampled ``x`` near each ``y_i``.

    Directions are the normalized gradient differences plus ``n_random``
    random unit vectors; radii run over a grid of the given step up to ``t``.
    The result is a lower bound of the true supremum.
    """
    from .envelope import minimal_extension

    if not (t > 0 and grid_step > 0):
        raise ValueError("t and grid_step must be positive")
    y, G = dataset.y, dataset.G
    d = dataset.dim
    rng = np.random.Generator(np.random.Philox(seed))
    radii = np.arange(grid_step, t, grid_step)
    radii = np.append(radii, t)
    best = 0.0
    for i in range(dataset.n):
        dirs = []
        for j in range(dataset.n):
            diff = G[j] - G[i]
            nrm = np.linalg.norm(diff)
            if nrm > 0:
                dirs.append(diff / nrm)
        if n_random:
            rnd = rng.standard_normal((n_random, d))
            dirs.extend(rnd / np.linalg.norm(rnd, axis=1, keepdims=True))
        if not dirs:
            continue
        dirs = np.array(dirs)
        X = y[i] + (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)
        r = np.repeat(radii, len(dirs))
        m, _ = minimal_extension(dataset, X)
        psi = m - dataset.f[i] - (X - y[i]) @ G[i]
        # cancellation noise in m minus the own tangent is not growth
        psi = np.where(psi <= ROUNDING_GUARD * dataset.data_scale, 0.0, psi)
        best = max(best, float(np.max(psi / r)))
    return best


def envelope_exact(slack: SlackMatrix, t: float, tol: Tolerances | None = None,
                   pairs: PairSet | None = None) -> tuple[float, float]:
    """Concave envelope ``E(t)`` of ``omega_0`` and a supergradient at ``t``.

    Uses ``E(t) = inf_{s >= 0} [s t + c(s)]`` where ``c`` is the conjugate of
    the pairwise maximum, minimized by bisection on its subgradient over
    ``[0, S0]``. The returned value is the objective at the final slope, so it
    never falls below the true envelope.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    ps = pairs if pairs is not None else pair_set(slack, tol)
    if ps.degenerate:
        return 0.0, 0.0
    if t == 0:
        return 0.0, ps.S0
    lo, hi = 0.0, ps.S0
    for _ in range(BISECTION_STEPS):
        s = 0.5 * (lo + hi)
        vals = ps.b - 2.0 * np.sqrt(ps.P * s)
        k = int(np.argmax(vals))
        if vals[k] > 0:
            grad = t - math.sqrt(ps.P[k] / s)
        else:
            grad = t
        if grad > 0:
            hi = s
        else:
            lo = s
    # pick the best of the bracket ends; any s yields a certified upper value
    s_best = min((lo, hi), key=lambda s: (ps.dual_objective(s, t), s))
    return ps.dual_objective(s_best, t), s_best


@dataclass(frozen=True, eq=False)
class ModulusModel:
    """``omega_hat = min_k (slope_k t + intercept_k)`` and its integral.

    ``breakpoints[k]`` is where segment ``k`` starts (``breakpoints[0] = 0``);
    on segment ``k`` the active line is ``(slopes[k], intercepts[k])`` and
    ``phi_hat(t) = a2 t^2 + a1 t + a0`` with ``phi_coeffs[k] = (a2, a1, a0)``.
    """

    lines: np.ndarray          # (L, 2) all collected (slope, intercept)
    breakpoints: np.ndarray    # (K,)
    slopes: np.ndarray         # (K,)
    intercepts: np.ndarray     # (K,)
    phi_coeffs: np.ndarray     # (K, 3)
    phi_at_break: np.ndarray   # (K,)
    b_star: float
    S0: float
    degenerate: bool
    t_max: float = field(default=1.0)

    def omega(self, t):
        return omega_hat(self, t)

    def phi(self, t):
        return phi_hat(self, t)

    def to_dict(self) -> dict:
        return {
            "lines": self.lines.tolist(),
            "breakpoints": self.breakpoints.tolist(),
            "slopes": self.slopes.tolist(),
            "intercepts": self.intercepts.tolist(),
            "phi_coeffs": self.phi_coeffs.tolist(),
            "phi_at_break": self.phi_at_break.tolist(),
            "b_star": self.b_star,
            "S0": self.S0,
            "degenerate": self.degenerate,
            "t_max": self.t_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModulusModel":
        arr = lambda k, shape=None: np.array(d[k], dtype=float).reshape(shape if shape else (-1,))
        return cls(
            lines=arr("lines", (-1, 2)),
            breakpoints=arr("breakpoints"),
            slopes=arr("slopes"),
            intercepts=arr("intercepts"),
            phi_coeffs=arr("phi_coeffs", (-1, 3)),
            phi_at_break=arr("phi_at_break"),
            b_star=float(d["b_star"]),
            S0=float(d["S0"]),
            degenerate=bool(d["degenerate"]),
            t_max=float(d["t_max"]),
        )


def _lower_envelope_of_lines(lines: np.ndarray):
    """Pieces of ``min_k (s_k t + c_k)`` on ``[0, inf)``.

    Returns breakpoints and the active (slope, intercept) per piece, slopes
    strictly decreasing from left to right.
    """
    # at t = 0 the smallest intercept wins, ties broken by the smallest slope
    order = np.lexsort((lines[:, 0], lines[:, 1]))
    cur = lines[order[0]]
    breaks, pieces = [0.0], [tuple(cur)]
    t0 = 0.0
    while True:
        s, c = cur
        nxt, t_next = None, math.inf
        for s2, c2 in lines:
            if s2 < s:
                t_cross = (c2 - c) / (s - s2)
                if t_cross < t_next or (t_cross == t_next and nxt is not None and s2 < nxt[0]):
                    t_next, nxt = t_cross, (s2, c2)
        if nxt is None:
            break
        t_next = max(t_next, t0)
        if t_next > t0:
            breaks.append(t_next)
            pieces.append(nxt)
        else:
            pieces[-1] = nxt
        cur, t0 = nxt, t_next
    return np.array(breaks), np.array(pieces, dtype=float)


def _assemble(lines, b_star, S0, degenerate, t_max) -> ModulusModel:
    breaks, pieces = _lower_envelope_of_lines(lines)
    slopes, intercepts = pieces[:, 0].copy(), pieces[:, 1].copy()
    K = len(breaks)
    phi_at = np.zeros(K)
    coeffs = np.zeros((K, 3))
    for k in range(K):
        tk, s, c = breaks[k], slopes[k], intercepts[k]
        if k > 0:
            tp, sp, cp = breaks[k - 1], slopes[k - 1], intercepts[k - 1]
            phi_at[k] = phi_at[k - 1] + cp * (tk - tp) + 0.5 * sp * (tk - tp) * (tk + tp)
        coeffs[k] = (0.5 * s, c, phi_at[k] - c * tk - 0.5 * s * tk * tk)
    return ModulusModel(lines, breaks, slopes, intercepts, coeffs, phi_at,
                        float(b_star), float(S0), bool(degenerate), float(t_max))


def degenerate_modulus() -> ModulusModel:
    return _assemble(np.array([[0.0, 0.0]]), 0.0, 0.0, True, 1.0)


def default_t_max(slack: SlackMatrix, tol: Tolerances | None = None) -> float:
    ps = pair_set(slack, tol)
    if ps.degenerate:
        return 1.0
    return 8.0 * float(np.max(ps.knees))


def build_modulus(slack: SlackMatrix, nodes: int = 64, t_max: float | None = None,
                  tol: Tolerances | None = None) -> ModulusModel:
    """Tangent-line hull of the exact envelope at log-spaced nodes."""
    if nodes < 0:
        raise ValueError("nodes must be >= 0")
    ps = pair_set(slack, tol)
    if ps.degenerate:
        return degenerate_modulus()
    if t_max is None:
        t_max = 8.0 * float(np.max(ps.knees))
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    lines = [(ps.S0, 0.0), (0.0, ps.B_star)]
    if nodes:
        t_lo = min(float(np.min(ps.knees)) / 8.0, t_max)
        ts = np.geomspace(t_lo, t_max, nodes) if nodes > 1 else np.array([t_max])
        for t in ts:
            _, s = envelope_exact(slack, float(t), pairs=ps)
            lines.append((s, ps.conjugate(s)))
    lines = np.array(sorted(set(lines)), dtype=float)
    return _assemble(lines, ps.B_star, ps.S0, False, t_max)


def _segment(model: ModulusModel, t: np.ndarray) -> np.ndarray:
    return np.searchsorted(model.breakpoints, t, side="right") - 1


def omega_hat(model: ModulusModel, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    k = _segment(model, t_arr)
    out = model.slopes[k] * t_arr + model.intercepts[k]
    return float(out) if np.ndim(out) == 0 else out


def phi_hat(model: ModulusModel, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    k = _segment(model, t_arr)
    tk = model.breakpoints[k]
    dt = t_arr - tk
    # evaluate from the segment start to keep the integral accurate for large t
    out = model.phi_at_break[k] + model.intercepts[k] * dt + 0.5 * model.slopes[k] * dt * (t_arr + tk)
    return float(out) if np.ndim(out) == 0 else out
