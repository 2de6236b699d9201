"""Canonical vine copulas built from bivariate pair-copulas.

Tree ``t`` pairs its root with every variable not yet used as a root, all
conditioned on the roots of trees ``0..t-1``. Fitting is sequential tree by
tree; each tree's root is the variable with the largest summed absolute
Kendall's tau on the current conditioned data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import special, stats

from .copulas import (
    CopulaFit,
    GaussianCopulaParams,
    PseudoObservations,
    TCopulaParams,
    _clip_unit,
    fit_gaussian_copula,
    fit_t_copula,
    gaussian_log_density,
    kendall_tau,
    t_log_density,
)
from .errors import BoundaryInput, InputError, TooFewRows

INDEPENDENCE = "independence"
GAUSSIAN = "gaussian"
STUDENT_T = "t"
FAMILIES = (INDEPENDENCE, GAUSSIAN, STUDENT_T)


@dataclass(frozen=True)
class PairCopula:
    family: str
    rho: float = 0.0
    nu: float = math.inf
    loglik: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown pair-copula family {self.family!r}")
        if self.family != INDEPENDENCE and not abs(self.rho) < 1:
            raise InputError("pair-copula rho must satisfy |rho| < 1")
        if self.family == STUDENT_T and not self.nu > 2:
            raise InputError("pair-copula nu must exceed 2")

    @property
    def n_params(self) -> int:
        return {INDEPENDENCE: 0, GAUSSIAN: 1, STUDENT_T: 2}[self.family]

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.n_params

    def log_pdf(self, u, v) -> np.ndarray:
        u, v = _interior(u, v)
        if self.family == INDEPENDENCE:
            return np.zeros(np.broadcast(u, v).shape)
        if self.family == GAUSSIAN:
            return gaussian_log_density(self.rho, u, v)
        return t_log_density(self.rho, self.nu, u, v)

    def h(self, u, v) -> np.ndarray:
        """Conditional CDF of the first argument given the second, dC(u, v)/dv."""
        u, v = _interior(u, v)
        if self.family == INDEPENDENCE:
            return np.broadcast_to(u, np.broadcast(u, v).shape).copy()
        r = self.rho
        if self.family == GAUSSIAN:
            x, y = special.ndtri(u), special.ndtri(v)
            out = special.ndtr((x - r * y) / math.sqrt(1.0 - r * r))
        else:
            nu = self.nu
            x, y = stats.t.ppf(u, nu), stats.t.ppf(v, nu)
            s = np.sqrt((nu + y * y) * (1.0 - r * r) / (nu + 1.0))
            out = stats.t.cdf((x - r * y) / s, nu + 1.0)
        return _clip_unit(out)

    def h_inverse(self, w, v) -> np.ndarray:
        """Solve ``h(u, v) = w`` for ``u``."""
        w, v = _interior(w, v)
        if self.family == INDEPENDENCE:
            return np.broadcast_to(w, np.broadcast(w, v).shape).copy()
        r = self.rho
        if self.family == GAUSSIAN:
            y = special.ndtri(v)
            out = special.ndtr(special.ndtri(w) * math.sqrt(1.0 - r * r) + r * y)
        else:
            nu = self.nu
            y = stats.t.ppf(v, nu)
            s = np.sqrt((nu + y * y) * (1.0 - r * r) / (nu + 1.0))
            out = stats.t.cdf(stats.t.ppf(w, nu + 1.0) * s + r * y, nu)
        return _clip_unit(out)

    def to_dict(self) -> dict:
        d = {"family": self.family, "loglik": self.loglik, "aic": self.aic, "tau": self.tau}
        if self.family != INDEPENDENCE:
            d["rho"] = self.rho
        if self.family == STUDENT_T:
            d["nu"] = self.nu
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "PairCopula":
        return cls(
            doc["family"],
            float(doc.get("rho", 0.0)),
            float(doc.get("nu", math.inf)),
            float(doc.get("loglik", 0.0)),
            float(doc.get("tau", 0.0)),
        )


def _interior(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.all((u > 0) & (u < 1)) and np.all((v > 0) & (v < 1))):
        raise BoundaryInput("h-function arguments must lie strictly inside (0, 1)")
    return u, v


def h_function(pc: PairCopula, u, v):
    out = pc.h(u, v)
    return float(out) if np.ndim(out) == 0 else out


def independence_statistic(tau: float, n: int) -> float:
    return abs(tau) * math.sqrt(9.0 * n * (n - 1) / (2.0 * (2.0 * n + 5.0)))


def fit_pair(u: np.ndarray, v: np.ndarray, families: Iterable[str] = FAMILIES) -> PairCopula:
    """Independence pre-test, then the allowed family with the lowest AIC."""
    families = tuple(families)
    unknown = set(families) - set(FAMILIES)
    if unknown:
        raise InputError(f"unknown families: {sorted(unknown)}")
    n = u.shape[0]
    tau = kendall_tau(u, v)
    if INDEPENDENCE in families and independence_statistic(tau, n) < 1.96:
        return PairCopula(INDEPENDENCE, tau=tau)
    U = PseudoObservations(np.column_stack([u, v]))
    cands = []
    if INDEPENDENCE in families:
        cands.append(PairCopula(INDEPENDENCE, tau=tau))
    if GAUSSIAN in families:
        f: CopulaFit = fit_gaussian_copula(U)
        cands.append(PairCopula(GAUSSIAN, f.params.rho, loglik=f.loglik, tau=tau))
    if STUDENT_T in families:
        f = fit_t_copula(U)
        cands.append(PairCopula(STUDENT_T, f.params.rho, f.params.nu, f.loglik, tau))
    if not cands:
        raise InputError("no pair-copula family allowed")
    return min(cands, key=lambda c: c.aic)


@dataclass(frozen=True)
class VineEdge:
    tree: int
    root: int
    var: int
    conditioning: tuple[int, ...]
    pair: PairCopula

    def label(self, names: Sequence[str] | None = None) -> str:
        nm = (lambda i: names[i]) if names else str
        s = f"{nm(self.root)},{nm(self.var)}"
        if self.conditioning:
            s += "|" + ",".join(nm(c) for c in self.conditioning)
        return s


@dataclass(frozen=True)
class CVineSpec:
    order: tuple[int, ...]
    edges: tuple[tuple[VineEdge, ...], ...]
    tree1_taus: dict[int, float] = field(default_factory=dict)
    names: tuple[str, ...] | None = None
    jittered: tuple[int, ...] = ()

    def __post_init__(self):
        d = len(self.order)
        if sorted(self.order) != list(range(d)):
            raise InputError("order must be a permutation of variable indices")
        if len(self.edges) != d - 1:
            raise InputError("a C-vine on d variables has d - 1 trees")
        for t, tree in enumerate(self.edges):
            if len(tree) != d - 1 - t:
                raise InputError(f"tree {t + 1} must have {d - 1 - t} edges")

    @property
    def d(self) -> int:
        return len(self.order)

    def edge(self, tree: int, var: int) -> VineEdge:
        for e in self.edges[tree]:
            if e.var == var:
                return e
        raise KeyError((tree, var))

    def to_dict(self) -> dict:
        return {
            "type": "cvine",
            "order": list(self.order),
            "names": list(self.names) if self.names else None,
            "jittered": list(self.jittered),
            "tree1_taus": {str(k): v for k, v in sorted(self.tree1_taus.items())},
            "trees": [
                [
                    {
                        "tree": e.tree + 1,
                        "root": e.root,
                        "var": e.var,
                        "conditioning": list(e.conditioning),
                        "label": e.label(self.names),
                        **e.pair.to_dict(),
                    }
                    for e in tree
                ]
                for tree in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CVineSpec":
        edges = tuple(
            tuple(
                VineEdge(e["tree"] - 1, e["root"], e["var"], tuple(e["conditioning"]), PairCopula.from_dict(e))
                for e in tree
            )
            for tree in doc["trees"]
        )
        return cls(
            tuple(doc["order"]),
            edges,
            {int(k): float(v) for k, v in doc["tree1_taus"].items()},
            tuple(doc["names"]) if doc.get("names") else None,
            tuple(doc.get("jittered", ())),
        )


def _tau_matrix(U: np.ndarray, cols: Sequence[int]) -> dict[tuple[int, int], float]:
    taus = {}
    for a_i, a in enumerate(cols):
        for b in cols[a_i + 1:]:
            taus[(a, b)] = taus[(b, a)] = kendall_tau(U[:, a], U[:, b])
    return taus


def _pick_root(U: np.ndarray, cols: Sequence[int]) -> int:
    taus = _tau_matrix(U, cols)
    best, best_score = None, -1.0
    for i in sorted(cols):
        score = sum(abs(taus[(i, j)]) for j in cols if j != i)
        if score > best_score:
            best, best_score = i, score
    return best


def select_cvine_root(U: PseudoObservations) -> int:
    """Variable with the largest summed |tau| against all others; lowest index wins ties."""
    if U.d < 3:
        raise InputError("root selection needs at least 3 variables")
    return _pick_root(U.U, list(range(U.d)))


def fit_cvine(
    U: PseudoObservations,
    allowed_families: Iterable[str] = FAMILIES,
    names: Sequence[str] | None = None,
    jittered: Iterable[int] = (),
) -> CVineSpec:
    d = U.d
    if d < 2:
        raise InputError("a vine needs at least 2 variables")
    if U.n < 50 and d >= 3:
        raise TooFewRows(f"C-vine fitting needs at least 50 rows, got {U.n}")
    families = tuple(allowed_families)
    V = U.U.copy()
    remaining = list(range(d))
    order: list[int] = []
    trees = []
    tree1_taus = {}
    for t in range(d - 1):
        root = _pick_root(V, remaining) if len(remaining) > 2 else min(remaining)
        remaining.remove(root)
        tree = []
        for i in remaining:
            pc = fit_pair(V[:, i], V[:, root], families)
            tree.append(VineEdge(t, root, i, tuple(order), pc))
            if t == 0:
                tree1_taus[i] = pc.tau
        for e in tree:
            V[:, e.var] = e.pair.h(V[:, e.var], V[:, root])
        order.append(root)
        trees.append(tuple(tree))
    order.append(remaining[0])
    return CVineSpec(tuple(order), tuple(trees), tree1_taus, tuple(names) if names else None, tuple(jittered))


def sample_cvine(spec: CVineSpec, n: int, seed) -> PseudoObservations:
    """Invert h-functions along the vine starting from independent uniforms.

    For position ``i`` in the vine order, the uniform ``w_i`` is the CDF of
    that variable given all earlier roots; peeling back one tree at a time
    recovers the unconditional uniform.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = spec.d
    W = _clip_unit(rng.random((n, d)))
    out = np.empty((n, d))
    for i, var in enumerate(spec.order):
        a = W[:, i]
        for j in range(i - 1, -1, -1):
            a = spec.edge(j, var).pair.h_inverse(a, W[:, j])
        out[:, var] = a
    return PseudoObservations(out)


def jittered_pseudo_observations(X, discrete: Iterable[int] = (), seed=0) -> PseudoObservations:
    """Pseudo-observations where ties in ``discrete`` columns are broken at random.

    Continuous columns keep average ranks.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise TooFewRows("pseudo-observations need at least 2 rows")
    rng = np.random.default_rng(seed)
    R = stats.rankdata(X, method="average", axis=0)
    for j in sorted(set(discrete)):
        order = np.lexsort((rng.random(n), X[:, j]))
        r = np.empty(n)
        r[order] = np.arange(1, n + 1)
        R[:, j] = r
    return PseudoObservations(R / (n + 1.0))
