"""Minimal extension, smoothed upper function ``g`` and its convex envelope.

The delivered extension is the convex envelope of ``g`` restricted to a
finite candidate set ``S``::

    upper(x) = min { sum_j lam_j g(s_j) : sum_j lam_j s_j = x, lam in simplex }

solved as a small LP. Every query returns a bracket ``lower <= conv(g)(x) <=
upper``; the lower end is ``m(x)`` possibly improved by the LP's dual affine
minorant once that minorant has been shifted to lie below ``g`` everywhere
(which can be decided exactly because ``g`` is a minimum of radial bumps).
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.stats import qmc

from .jet import JetDataset, SlackMatrix
from .lp import OPTIMAL, INFEASIBLE, LpProblem, solve_lp
from .modulus import ModulusModel, phi_hat, omega_hat

OK = "ok"
OUTSIDE = "outside-domain"
DEGENERATE = "degenerate-affine"
LP_FAILURE = "lp-failure"
# box for d > 10 is only sampled, so conv(S) may not cover it
SAMPLED_BOX = "ok-sampled-box"

MAX_CORNER_DIM = 10


@dataclass(frozen=True)
class ExtensionConfig:
    mode: str = "shared"          # shared | refined
    lp_tol: float = 1e-9          # pricing and dual-validity tolerance
    solver_tol: float = 1e-12     # simplex feasibility/optimality tolerance
    enrichment: int = 16
    seed: int = 0
    max_columns: int = 32
    descent_iters: int = 50
    stencil: float = 1e-5         # radius (relative to data scale) of the per-point stencil
    forced: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "ExtensionConfig":
        return cls(**d)


@dataclass(frozen=True)
class EnvelopeResult:
    upper: float
    lower: float
    support: tuple[tuple[int, float], ...]
    dual: tuple[np.ndarray, float] | None
    gradient: np.ndarray | None
    status: str
    candidates: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in (OK, SAMPLED_BOX, DEGENERATE)


# ----------------------------------------------------------------------------
# pointwise functions


def minimal_extension(dataset: JetDataset, x):
    """``m(x) = max_j f_j + <G_j, x - y_j>``.

    For a single point returns ``(value, indices)`` with every index within
    ``1e-12 * scale`` of the max; for an ``(n, d)`` batch returns
    ``(values, argmax)``.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] != dataset.dim:
        raise ValueError("query has dimension %d, expected %d" % (X2.shape[1], dataset.dim))
    tang = dataset.f[None, :] + X2 @ dataset.G.T - np.einsum("jk,jk->j", dataset.G, dataset.y)[None, :]
    vals = tang.max(axis=1)
    if single:
        idx = np.flatnonzero(tang[0] >= vals[0] - 1e-12 * dataset.data_scale)
        return float(vals[0]), tuple(int(i) for i in idx)
    return vals, tang.argmax(axis=1)


def psi(dataset: JetDataset, i: int, x) -> float:
    """Gap between ``m`` and the tangent plane at ``y_i``."""
    if not 0 <= i < dataset.n:
        raise IndexError("point index %d out of range" % i)
    x = np.asarray(x, dtype=float)
    m, _ = minimal_extension(dataset, x)
    return m - dataset.f[i] - float(dataset.G[i] @ (x - dataset.y[i]))


def _g_pieces(dataset, modulus, X2):
    diff = X2[:, None, :] - dataset.y[None, :, :]
    r = np.linalg.norm(diff, axis=2)
    vals = dataset.f[None, :] + np.einsum("nik,ik->ni", diff, dataset.G) + 2.0 * phi_hat(modulus, r)
    return diff, r, vals


def g_function(dataset: JetDataset, modulus: ModulusModel, x):
    """``g(x) = min_i f_i + <G_i, x - y_i> + 2 phi_hat(|x - y_i|)``.

    Returns ``(value, active index, subgradient)``; batches give arrays. A
    degenerate modulus collapses ``g`` to the affine function through the
    first data point.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if modulus.degenerate:
        y0, f0, g0 = dataset.y[0], dataset.f[0], dataset.G[0]
        vals = f0 + (X2 - y0) @ g0
        act = np.zeros(len(X2), dtype=int)
        sub = np.broadcast_to(g0, X2.shape).copy()
    else:
        diff, r, pieces = _g_pieces(dataset, modulus, X2)
        act = pieces.argmin(axis=1)
        rows = np.arange(len(X2))
        vals = pieces[rows, act]
        ra = r[rows, act]
        da = diff[rows, act]
        w = np.where(ra > 0, 2.0 * omega_hat(modulus, ra) / np.where(ra > 0, ra, 1.0), 0.0)
        sub = dataset.G[act] + w[:, None] * da
    if single:
        return float(vals[0]), int(act[0]), sub[0]
    return vals, act, sub


# ----------------------------------------------------------------------------
# the model


@dataclass(frozen=True, eq=False)
class ExtensionModel:
    dataset: JetDataset
    slack: SlackMatrix
    modulus: ModulusModel
    candidates: np.ndarray
    g_values: np.ndarray
    box: np.ndarray               # (d, 2)
    config: ExtensionConfig
    box_covered: bool = True
    _facets: list = field(default_factory=list, repr=False, compare=False)

    @property
    def degenerate(self) -> bool:
        return self.modulus.degenerate

    @property
    def data_scale(self) -> float:
        return self.dataset.data_scale

    def g(self, x):
        return g_function(self.dataset, self.modulus, x)

    def m(self, x):
        return minimal_extension(self.dataset, x)

    def in_box(self, X) -> np.ndarray:
        X2 = np.atleast_2d(np.asarray(X, dtype=float))
        slop = 1e-12 * self.data_scale
        return np.all((X2 >= self.box[:, 0] - slop) & (X2 <= self.box[:, 1] + slop), axis=1)

    def facets(self) -> "FacetTable":
        if not self._facets:
            self._facets.append(FacetTable.build(self))
        return self._facets[0]


def default_box(dataset: JetDataset) -> np.ndarray:
    lo, hi = dataset.y.min(axis=0), dataset.y.max(axis=0)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    half = np.maximum(1.5 * half, 1.0)
    return np.column_stack([mid - half, mid + half])


def _stencil_radii(dataset: JetDataset, modulus: ModulusModel, rel: float) -> list[float]:
    if rel <= 0 or modulus.degenerate:
        return []
    r1 = rel * dataset.data_scale
    radii = [r1]
    spread = math.sqrt(dataset.dim) * modulus.S0
    if spread > 0:
        # tighter ring pins the dual slope at the data point to ~ 0.1 * r1
        r2 = 0.1 * r1 / spread
        if r2 < r1:
            radii.append(r2)
    return radii


def build_candidates(dataset: JetDataset, modulus: ModulusModel, box: np.ndarray,
                     config: ExtensionConfig) -> tuple[np.ndarray, bool]:
    d = dataset.dim
    lo, hi = box[:, 0], box[:, 1]
    parts = [dataset.y]
    covered = d <= MAX_CORNER_DIM
    if covered:
        corners = np.array(list(itertools.product(*[(lo[k], hi[k]) for k in range(d)])))
    else:
        rng = np.random.Generator(np.random.Philox(config.seed))
        corners = lo + rng.random((2 * d + 2, d)) * (hi - lo)
    parts.append(corners)
    if config.enrichment > 0:
        sampler = qmc.Halton(d, scramble=True, seed=config.seed)
        parts.append(qmc.scale(sampler.random(config.enrichment), lo, hi))
    for r in _stencil_radii(dataset, modulus, config.stencil):
        eye = np.eye(d) * r
        for sgn in (1.0, -1.0):
            parts.append((dataset.y[:, None, :] + sgn * eye[None, :, :]).reshape(-1, d))
    return np.vstack(parts), covered


def build_extension(dataset: JetDataset, slack: SlackMatrix, modulus: ModulusModel,
                    box=None, config: ExtensionConfig | None = None) -> ExtensionModel:
    config = config or ExtensionConfig()
    box = default_box(dataset) if box is None else np.asarray(box, dtype=float).reshape(dataset.dim, 2)
    if np.any(box[:, 0] > box[:, 1]):
        raise ValueError("box has lo > hi")
    inside = np.all((dataset.y >= box[:, 0]) & (dataset.y <= box[:, 1]), axis=1)
    if not inside.all():
        bad = np.flatnonzero(~inside)
        raise ValueError("domain box excludes data point(s) %s" % bad.tolist())
    cands, covered = build_candidates(dataset, modulus, box, config)
    gv, _, _ = g_function(dataset, modulus, cands)
    cands.setflags(write=False)
    gv.setflags(write=False)
    return ExtensionModel(dataset, slack, modulus, cands, gv, box, config, covered)


# ----------------------------------------------------------------------------
# certified lower bounds


def minorant_shift(model: ExtensionModel, p: np.ndarray, q: np.ndarray | float) -> np.ndarray:
    """Smallest ``delta >= 0`` with ``<p, z> + q - delta <= g(z)`` for all ``z``.

    ``g - l`` is the minimum over ``i`` of radial functions
    ``c_i - |G_i - p| r + 2 phi_hat(r)``, each minimized where
    ``2 omega_hat(r) = |G_i - p|``. Returns ``inf`` when some bump cannot
    absorb the slope difference. Accepts a batch of ``(p, q)`` pairs.
    """
    ds, mod = model.dataset, model.modulus
    P = np.atleast_2d(np.asarray(p, dtype=float))
    Q = np.atleast_1d(np.asarray(q, dtype=float))
    c = ds.f[None, :] - P @ ds.y.T - Q[:, None]               # (K, N)
    a = np.linalg.norm(ds.G[None, :, :] - P[:, None, :], axis=2)
    if mod.degenerate:
        worst = np.where(a > 1e-15 * max(1.0, ds.grad_sup_norm), -np.inf, c).min(axis=1)
    else:
        r = inverse_omega(mod, 0.5 * a)
        finite = np.isfinite(r)
        rr = np.where(finite, r, 0.0)
        vals = np.where(finite, c - a * rr + 2.0 * phi_hat(mod, rr), -np.inf)
        worst = vals.min(axis=1)
    shift = np.maximum(0.0, -worst)
    return shift if np.ndim(p) > 1 else shift[0]


def inverse_omega(mod: ModulusModel, level):
    """Smallest ``t`` with ``omega_hat(t) >= level`` (``inf`` if never)."""
    L = np.asarray(level, dtype=float)
    vb = mod.slopes * mod.breakpoints + mod.intercepts
    k = np.searchsorted(vb, L, side="left")
    seg = np.clip(k - 1, 0, len(vb) - 1)
    s, c = mod.slopes[seg], mod.intercepts[seg]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(s > 0, (L - c) / s, np.inf)
    t = np.where(k == 0, 0.0, t)
    t = np.where((k < len(vb)) & (k > 0), np.minimum(t, mod.breakpoints[np.minimum(k, len(vb) - 1)]), t)
    t = np.where(L <= 0, 0.0, t)
    return t


# ----------------------------------------------------------------------------
# single-query evaluation


def _affine_result(model: ExtensionModel, x) -> EnvelopeResult:
    ds = model.dataset
    val = float(ds.f[0] + ds.G[0] @ (x - ds.y[0]))
    return EnvelopeResult(val, val, (), (ds.G[0].copy(), float(ds.f[0] - ds.G[0] @ ds.y[0])),
                          ds.G[0].copy(), DEGENERATE)


def _outside(x, status=OUTSIDE) -> EnvelopeResult:
    return EnvelopeResult(math.nan, math.nan, (), None, None, status)


def _solve(points, values, x, tol):
    return solve_lp(LpProblem.hull(points, values, x, tol))


def envelope_eval(model: ExtensionModel, x, mode: str | None = None) -> EnvelopeResult:
    """Evaluate the restricted envelope of ``g`` at ``x`` with a certified bracket."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.dataset.dim:
        raise ValueError("query has dimension %d, expected %d" % (x.shape[0], model.dataset.dim))
    mode = mode or model.config.mode
    if mode not in ("shared", "refined"):
        raise ValueError("unknown mode %r" % mode)
    if not model.in_box(x)[0]:
        return _outside(x)
    if model.degenerate:
        return _affine_result(model, x)

    cfg = model.config
    pts, vals = model.candidates, model.g_values
    sol = _solve(pts, vals, x, cfg.solver_tol)
    if sol.status == INFEASIBLE:
        return _outside(x)
    if sol.status != OPTIMAL:
        return _outside(x, LP_FAILURE)
    if mode == "refined":
        pts, vals, sol = _column_generation(model, x, sol)

    p, q = sol.dual[:-1], float(sol.dual[-1])
    m_val, _ = minimal_extension(model.dataset, x)
    lower = m_val
    shift = minorant_shift(model, p, q)
    if math.isfinite(shift):
        lower = max(lower, float(p @ x + q - shift))
    supp = tuple((int(j), float(sol.lam[j])) for j in sol.support)
    upper = float(sum(w * vals[j] for j, w in supp))
    status = OK if model.box_covered else SAMPLED_BOX
    return EnvelopeResult(upper, lower, supp, (p, q), p.copy(), status,
                          pts if mode == "refined" else None)


def _query_rng(model: ExtensionModel, x) -> np.random.Generator:
    # per-query stream keyed by the query bytes, so results don't depend on call order
    digest = hashlib.blake2b(np.ascontiguousarray(x, dtype=float).tobytes(), digest_size=8).digest()
    key = int.from_bytes(digest, "little")
    return np.random.Generator(np.random.Philox(key=[model.config.seed, key]))


def _column_generation(model: ExtensionModel, x, sol):
    ds, cfg = model.dataset, model.config
    scale = ds.data_scale
    pts, vals = model.candidates, model.g_values
    rng = _query_rng(model, x)
    lo, hi = model.box[:, 0], model.box[:, 1]
    d = ds.dim
    # seed with the query point itself: its column alone caps upper at g(x)
    gx, _, _ = g_function(ds, model.modulus, x)
    if gx < sol.objective:
        trial = _solve(np.vstack([pts, x]), np.append(vals, gx), x, cfg.solver_tol)
        if trial.status == OPTIMAL:
            pts, vals, sol = np.vstack([pts, x]), np.append(vals, gx), trial
    added = 0
    while added < cfg.max_columns:
        p, q = sol.dual[:-1], sol.dual[-1]
        supp = pts[sol.support]
        n_rand = max(1, 2 * d + 4 - len(supp))
        starts = np.vstack([x[None, :], ds.y, supp, radial_minimizers(model, p),
                            lo + rng.random((n_rand, d)) * (hi - lo)])
        Z, red = _descend(model, p, q, starts, cfg.descent_iters)
        order = np.argsort(red, kind="stable")
        new_cols = []
        for k in order:
            if red[k] >= -cfg.lp_tol * scale or len(new_cols) >= cfg.max_columns - added:
                break
            if all(np.max(np.abs(Z[k] - c)) > 1e-12 * scale for c in new_cols):
                new_cols.append(Z[k])
        if not new_cols:
            break
        new_cols = np.array(new_cols)
        gz, _, _ = g_function(ds, model.modulus, new_cols)
        trial_pts = np.vstack([pts, new_cols])
        trial_vals = np.append(vals, gz)
        new = _solve(trial_pts, trial_vals, x, cfg.solver_tol)
        if new.status != OPTIMAL or new.objective > sol.objective:
            break
        pts, vals, sol = trial_pts, trial_vals, new
        added += len(new_cols)
    return pts, vals, sol


def radial_minimizers(model: ExtensionModel, p) -> np.ndarray:
    """Global minimizers over R^d of each bump of ``g`` minus ``<p, .>``.

    Bumps that cannot absorb the slope difference are sent towards the box
    boundary along the steepest direction; the caller clips to the box.
    """
    ds, mod = model.dataset, model.modulus
    diff = ds.G - p[None, :]
    a = np.linalg.norm(diff, axis=1)
    r = inverse_omega(mod, 0.5 * a)
    reach = float(np.max(model.box[:, 1] - model.box[:, 0]))
    r = np.where(np.isfinite(r), r, reach)
    u = np.where(a[:, None] > 0, diff / np.where(a > 0, a, 1.0)[:, None], 0.0)
    return np.clip(ds.y - r[:, None] * u, model.box[:, 0], model.box[:, 1])


def _descend(model: ExtensionModel, p, q, starts, iters):
    """Projected subgradient descent with backtracking on ``g - l`` inside the box."""
    lo, hi = model.box[:, 0], model.box[:, 1]
    Z = np.clip(starts, lo, hi)
    gv, _, sub = g_function(model.dataset, model.modulus, Z)
    F = gv - Z @ p - q
    step = np.full(len(Z), 0.25 * float(np.max(hi - lo)))
    floor = 1e-12 * model.data_scale
    live = np.ones(len(Z), dtype=bool)
    for _ in range(iters):
        trial = step.copy()
        pending = live.copy()
        for _ in range(12):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            Zt = np.clip(Z[idx] - trial[idx, None] * (sub[idx] - p), lo, hi)
            gt, _, subt = g_function(model.dataset, model.modulus, Zt)
            Ft = gt - Zt @ p - q
            better = Ft < F[idx]
            won = idx[better]
            Z[won], F[won], sub[won] = Zt[better], Ft[better], subt[better]
            step[won] = 2.0 * trial[won]
            pending[won] = False
            trial[idx[~better]] *= 0.25
        # a start that fails a whole backtracking sweep has converged
        live &= ~pending & (step > floor)
        if not live.any():
            break
    return Z, F


def gradient_eval(model: ExtensionModel, x, mode: str | None = None) -> np.ndarray:
    """Gradient estimate at ``x``: the LP dual slope, FD fallback if unusable."""
    res = envelope_eval(model, x, mode)
    if not res.ok:
        raise ValueError("cannot evaluate gradient: %s" % res.status)
    if res.status == DEGENERATE:
        return res.gradient
    p, q = res.dual
    pts = res.candidates if res.candidates is not None else model.candidates
    gv, _, _ = g_function(model.dataset, model.modulus, pts)
    slack = gv - (pts @ p + q)
    if np.all(np.isfinite(p)) and slack.min() >= -model.config.lp_tol * model.data_scale:
        return p
    return finite_difference_gradient(model, x, 1e-5 * model.data_scale, mode)


def finite_difference_gradient(model: ExtensionModel, x, h: float, mode: str | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        up = envelope_eval(model, x + e, mode).upper
        dn = envelope_eval(model, x - e, mode).upper
        out[k] = (up - dn) / (2 * h)
    return out


# ----------------------------------------------------------------------------
# batch evaluation in shared mode


@dataclass(frozen=True, eq=False)
class FacetTable:
    """Lower facets of the lifted candidate cloud as affine functions.

    ``upper(x) = max_k <p_k, x> + q_k`` on ``conv(S)``; each facet has
    been shifted so it lies below ``g`` on every candidate.
    """

    p: np.ndarray
    q: np.ndarray
    shift: np.ndarray

    @classmethod
    def build(cls, model: ExtensionModel) -> "FacetTable | None":
        S, gv = model.candidates, model.g_values
        d = S.shape[1]
        lifted = np.column_stack([S, gv])
        try:
            hull = ConvexHull(lifted)
        except (QhullError, ValueError):
            return None
        eq = hull.equations
        lower = eq[:, d] < -1e-12
        eq = eq[lower]
        p = -eq[:, :d] / eq[:, d:d + 1]
        q = -eq[:, d + 1] / eq[:, d]
        viol = (S @ p.T + q[None, :]) - gv[:, None]
        q = q - np.maximum(viol.max(axis=0), 0.0)
        shift = minorant_shift(model, p, q)
        return cls(p, q, shift)

    def evaluate(self, X):
        vals = X @ self.p.T + self.q[None, :]
        k = vals.argmax(axis=1)
        rows = np.arange(len(X))
        return vals[rows, k], k


def envelope_eval_batch(model: ExtensionModel, X, mode: str = "shared", chunk: int = 2048) -> dict:
    """Vectorized evaluation for many queries.

    ``mode="shared"`` gives the restricted envelope over ``S`` (via the
    lower facets, falling back to per-query LPs if the hull cannot be
    built). ``mode="query"`` additionally allows each query point itself as
    a column, i.e. returns ``min(upper_S(x), g(x))``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = len(X)
    upper = np.full(n, np.nan)
    lower = np.full(n, np.nan)
    grad = np.full(X.shape, np.nan)
    status = np.array([OUTSIDE] * n, dtype=object)
    inside = model.in_box(X)
    idx = np.flatnonzero(inside)
    ds = model.dataset
    if model.degenerate:
        vals = ds.f[0] + (X[idx] - ds.y[0]) @ ds.G[0]
        upper[idx] = lower[idx] = vals
        grad[idx] = ds.G[0]
        status[idx] = DEGENERATE
        return dict(upper=upper, lower=lower, gradient=grad, status=status)
    table = model.facets()
    if table is None:
        for i in idx:
            r = envelope_eval(model, X[i], "shared")
            upper[i], lower[i], status[i] = r.upper, r.lower, r.status
            if r.gradient is not None:
                grad[i] = r.gradient
    else:
        ok_status = OK if model.box_covered else SAMPLED_BOX
        for start in range(0, len(idx), chunk):
            sel = idx[start:start + chunk]
            Xs = X[sel]
            u, k = table.evaluate(Xs)
            m_val, _ = minimal_extension(ds, Xs)
            lb = np.where(np.isfinite(table.shift[k]), u - table.shift[k], -np.inf)
            upper[sel] = u
            lower[sel] = np.maximum(m_val, lb)
            grad[sel] = table.p[k]
            status[sel] = ok_status
    if mode == "query":
        gv, _, _ = g_function(ds, model.modulus, X[idx])
        upper[idx] = np.minimum(upper[idx], gv)
    elif mode != "shared":
        raise ValueError("unknown batch mode %r" % mode)
    return dict(upper=upper, lower=lower, gradient=grad, status=status)


# ----------------------------------------------------------------------------
# 1D oracle


def lower_hull(xs, ys):
    """Monotone-chain lower convex hull of planar points sorted by ``xs``.

    Collinear points are dropped from the hull; they still lie on it.
    """
    hull: list[int] = []
    for k in range(len(xs)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            cross = (xs[j] - xs[i]) * (ys[k] - ys[i]) - (ys[j] - ys[i]) * (xs[k] - xs[i])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(k)
    return np.asarray(hull, dtype=int)


def envelope_1d_oracle(model: ExtensionModel, grid) -> np.ndarray:
    """Convex envelope of sampled ``g`` on a 1D grid; returns rows ``(x, F(x))``."""
    if model.dataset.dim != 1:
        raise ValueError("the 1D oracle needs a one-dimensional jet")
    xs = np.sort(np.asarray(grid, dtype=float).reshape(-1))
    gv, _, _ = g_function(model.dataset, model.modulus, xs[:, None])
    h = lower_hull(xs, gv)
    return np.column_stack([xs, np.interp(xs, xs[h], gv[h])])


def oracle_grid(model: ExtensionModel, step: float) -> np.ndarray:
    lo, hi = model.box[0]
    n = int(math.ceil((hi - lo) / step))
    return np.linspace(lo, hi, n + 1)
