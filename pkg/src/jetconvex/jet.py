"""Finite 1-jets, pairwise slacks and extendability validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# rounding guard applied on top of epsC when testing condition (C)
ROUNDING_GUARD = 1e-12


class JetError(ValueError):
    """Raised for malformed jet input."""


@dataclass(frozen=True)
class JetPoint:
    x: tuple[float, ...]
    f: float
    g: tuple[float, ...]


@dataclass(frozen=True)
class Tolerances:
    eps_c: float = 0.0
    eps_p: float = 1e-9
    eps_g: float = 1e-6

    def __post_init__(self):
        if not (self.eps_c >= 0.0):
            raise ValueError("eps_c must be >= 0")
        if not (self.eps_p > 0.0 and self.eps_g > 0.0):
            raise ValueError("eps_p and eps_g must be > 0")


@dataclass(frozen=True, eq=False)
class JetDataset:
    """An immutable finite 1-jet in R^d.

    ``points`` is kept for readability; the arrays ``y`` (N x d), ``f`` (N,)
    and ``G`` (N x d) are what the numerics use.
    """

    dim: int
    points: tuple[JetPoint, ...]
    y: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    grad_sup_norm: float
    grad_diameter: float
    data_scale: float

    @property
    def n(self) -> int:
        return len(self.points)

    @classmethod
    def from_arrays(cls, y, f, G) -> "JetDataset":
        y = np.atleast_2d(np.asarray(y, dtype=float))
        G = np.atleast_2d(np.asarray(G, dtype=float))
        f = np.atleast_1d(np.asarray(f, dtype=float))
        if y.shape[0] != f.shape[0] or G.shape != y.shape:
            raise JetError("inconsistent array shapes: y %s, f %s, G %s" % (y.shape, f.shape, G.shape))
        records = [(y[i], f[i], G[i]) for i in range(len(f))]
        return load_dataset(records, y.shape[1])


def _as_vector(value, dim: int, what: str, index: int) -> tuple[float, ...]:
    if isinstance(value, (int, float)) and dim == 1:
        value = [value]
    vec = tuple(float(v) for v in value)
    if len(vec) != dim:
        raise JetError("record %d: %s has %d coordinates, expected %d" % (index, what, len(vec), dim))
    if not all(math.isfinite(v) for v in vec):
        raise JetError("record %d: non-finite entry in %s" % (index, what))
    return vec


def load_dataset(records: Iterable, dim: int) -> JetDataset:
    """Build a dataset from ``(x, f, g)`` records.

    Records may be tuples or mappings with keys ``x``, ``f``, ``g``. Exact
    duplicates are merged; the same ``x`` with a different jet is an error.
    """
    dim = int(dim)
    if dim < 1:
        raise JetError("dimension must be >= 1")
    points: list[JetPoint] = []
    first_index: dict[tuple[float, ...], int] = {}
    for k, rec in enumerate(records):
        if isinstance(rec, dict):
            try:
                x, fv, g = rec["x"], rec["f"], rec["g"]
            except KeyError as exc:
                raise JetError("record %d: missing field %s" % (k, exc)) from None
        else:
            x, fv, g = rec
        x = _as_vector(x, dim, "x", k)
        g = _as_vector(g, dim, "g", k)
        fv = float(fv)
        if not math.isfinite(fv):
            raise JetError("record %d: non-finite value f" % k)
        p = JetPoint(x, fv, g)
        if x in first_index:
            j = first_index[x]
            if points[j] != p:
                raise JetError("records %d and %d share x=%s with conflicting jets" % (j, k, list(x)))
            continue
        first_index[x] = len(points)
        points.append(p)
    if not points:
        raise JetError("dataset must contain at least one point")

    y = np.array([p.x for p in points], dtype=float)
    f = np.array([p.f for p in points], dtype=float)
    G = np.array([p.g for p in points], dtype=float)
    sup = float(np.max(np.linalg.norm(G, axis=1)))
    gdiff = G[:, None, :] - G[None, :, :]
    diam = float(np.max(np.linalg.norm(gdiff, axis=2)))
    ydist = float(np.max(np.linalg.norm(y[:, None, :] - y[None, :, :], axis=2)))
    scale = max(1.0, float(np.max(np.abs(f))), ydist, sup)
    for a in (y, f, G):
        a.setflags(write=False)
    return JetDataset(dim, tuple(points), y, f, G, sup, diam, scale)


@dataclass(frozen=True, eq=False)
class SlackMatrix:
    """``P[i, j] = f_i - f_j - <G_j, y_i - y_j>`` and ``b[i, j] = |G_i - G_j|``."""

    P: np.ndarray
    b: np.ndarray
    data_scale: float


def compute_slack(dataset: JetDataset) -> SlackMatrix:
    y, f, G = dataset.y, dataset.f, dataset.G
    dy = y[:, None, :] - y[None, :, :]
    P = f[:, None] - f[None, :] - np.einsum("jk,ijk->ij", G, dy)
    b = np.linalg.norm(G[:, None, :] - G[None, :, :], axis=2)
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(b, 0.0)
    b = 0.5 * (b + b.T)
    P.setflags(write=False)
    b.setflags(write=False)
    return SlackMatrix(P, b, dataset.data_scale)


@dataclass(frozen=True)
class Violation:
    kind: str  # "C" or "CW1"
    pair: tuple[int, int]
    magnitude: float


@dataclass(frozen=True)
class ValidationReport:
    status: str  # valid | violates-C | violates-CW1
    violations: tuple[Violation, ...]
    worst_c_slack: float
    cw1_margin: float
    tolerances: Tolerances = Tolerances()

    @property
    def valid(self) -> bool:
        return self.status == "valid"

    def to_dict(self) -> dict:
        def num(v):
            return v if math.isfinite(v) else None

        return {
            "status": self.status,
            "violations": [
                {"kind": v.kind, "pair": list(v.pair), "magnitude": v.magnitude}
                for v in self.violations
            ],
            "worst_c_slack": num(self.worst_c_slack),
            "cw1_margin": num(self.cw1_margin),
            "tolerances": {
                "eps_c": self.tolerances.eps_c,
                "eps_p": self.tolerances.eps_p,
                "eps_g": self.tolerances.eps_g,
            },
            # the (eps_p, eps_g) pair rule is a finite-data surrogate for CW1/SCW1
            "cw1_rule": "surrogate",
        }


def validate(slack: SlackMatrix, tol: Tolerances | None = None) -> ValidationReport:
    """Check conditions (C) and (CW1) on every ordered pair ``i != j``.

    A pair violates (C) when ``P[i, j] < -(eps_c + guard) * scale``; a pair
    satisfying (C) violates (CW1) when ``P[i, j] <= eps_p * scale`` while
    ``b[i, j] >= eps_g * scale``.
    """
    tol = tol or Tolerances()
    P, b, scale = slack.P, slack.b, slack.data_scale
    n = P.shape[0]
    off = ~np.eye(n, dtype=bool)

    c_bad = off & (P < -(tol.eps_c + ROUNDING_GUARD) * scale)
    # pairs already failing (C) are not reported again under (CW1)
    flagged = off & ~c_bad & (P <= tol.eps_p * scale)
    cw_bad = flagged & (b >= tol.eps_g * scale)

    violations = [Violation("C", (int(i), int(j)), float(P[i, j])) for i, j in np.argwhere(c_bad)]
    violations += [Violation("CW1", (int(i), int(j)), float(b[i, j])) for i, j in np.argwhere(cw_bad)]

    worst = float(np.min(P[off])) if n > 1 else math.inf
    if flagged.any():
        margin = float(np.min(P[flagged] / np.maximum(b[flagged], tol.eps_g)))
    else:
        margin = math.inf

    if c_bad.any():
        status = "violates-C"
    elif cw_bad.any():
        status = "violates-CW1"
    else:
        status = "valid"
    return ValidationReport(status, tuple(violations), worst, margin, tol)
