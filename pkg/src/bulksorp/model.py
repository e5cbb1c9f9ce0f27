"""Species, sorption laws, mass-action networks and sample-based structure checks.

All concentration arguments follow the same layout: axis 0 indexes species,
any trailing axes index points (cells, faces or samples).  A 1-d vector of
length ``N`` is a single point.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DomainError, UsageError

SORPTION_VARIANTS = ("henry", "langmuir", "volmer", "frumkin", "vanderwaals")

# finite-difference monotonicity check
FD_REL_STEP = 1e-6
FD_TOL = 1e-8
DEFAULT_SAMPLES = 4096
SOBOL_SEED = 20240229


def _as_float_array(values, n: int | None = None, name: str = "value") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise UsageError(f"{name} must be one-dimensional")
    if n is not None:
        if arr.size == 1 and n > 1:
            arr = np.full(n, arr[0])
        elif arr.size != n:
            raise UsageError(f"{name} has length {arr.size}, expected {n}")
    arr.setflags(write=False)
    return arr


def _check_nonneg(x: np.ndarray, what: str) -> None:
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise DomainError(f"{what} must be componentwise nonnegative")


@dataclass(frozen=True)
class SpeciesSystem:
    names: tuple[str, ...]
    d_bulk: np.ndarray
    d_surf: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        if len(names) < 1:
            raise UsageError("at least one species is required")
        if len(set(names)) != len(names):
            raise UsageError(f"species names must be unique: {names}")
        object.__setattr__(self, "names", names)
        n = len(names)
        d_bulk = _as_float_array(self.d_bulk, n, "d_bulk")
        d_surf = _as_float_array(self.d_surf, n, "d_surf")
        if np.any(d_bulk <= 0) or np.any(d_surf <= 0):
            raise DomainError("diffusivities must be strictly positive")
        object.__setattr__(self, "d_bulk", d_bulk)
        object.__setattr__(self, "d_surf", d_surf)

    @property
    def n_species(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class SorptionModel:
    """Net sorption rate ``s_i = k_ad[i] * c_i * g_i(theta) - k_de[i] * c_surf_i``.

    ``g_i`` is the adsorption factor of the chosen variant and ``theta`` the
    weighted surface occupancy.  Rate coefficients may be zero, which turns the
    corresponding process off.
    """

    variant: str
    k_ad: np.ndarray
    k_de: np.ndarray
    sigma: np.ndarray | None = None
    c_s_sigma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        variant = str(self.variant).lower().replace("-", "").replace("_", "")
        if variant not in SORPTION_VARIANTS:
            raise UsageError(f"unknown sorption variant {self.variant!r}; choose from {SORPTION_VARIANTS}")
        object.__setattr__(self, "variant", variant)
        k_ad = _as_float_array(self.k_ad, name="k_ad")
        n = k_ad.size
        k_de = _as_float_array(self.k_de, n, "k_de")
        sigma = _as_float_array(1.0 if self.sigma is None else self.sigma, n, "sigma")
        if np.any(k_ad < 0):
            raise DomainError("k_ad must be nonnegative")
        if np.any(k_de < 0):
            raise DomainError("k_de must be nonnegative")
        if np.any(sigma <= 0):
            raise DomainError("sigma must be strictly positive")
        if variant == "frumkin" and np.any(sigma < 1):
            raise DomainError("the Frumkin model requires sigma >= 1")
        if not self.c_s_sigma > 0:
            raise DomainError("c_s_sigma must be strictly positive")
        if variant in ("volmer", "frumkin", "vanderwaals") and not self.beta > 0:
            raise DomainError("beta must be strictly positive")
        object.__setattr__(self, "k_ad", k_ad)
        object.__setattr__(self, "k_de", k_de)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "c_s_sigma", float(self.c_s_sigma))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_species(self) -> int:
        return self.k_ad.size

    def _col(self, v: np.ndarray, like: np.ndarray) -> np.ndarray:
        return v.reshape((-1,) + (1,) * (like.ndim - 1))

    def occupancy(self, c_surf) -> np.ndarray:
        c_surf = np.asarray(c_surf, dtype=float)
        return np.tensordot(self.sigma, c_surf, axes=(0, 0)) / self.c_s_sigma

    def adsorption_factor(self, theta) -> np.ndarray:
        """Per-species factor multiplying ``k_ad * c_i``; shape ``(N,) + theta.shape``."""
        theta = np.asarray(theta, dtype=float)
        sig = self.sigma.reshape((-1,) + (1,) * theta.ndim)
        th = theta[None, ...]
        free = np.maximum(1.0 - th, 0.0)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            ratio = np.where(th < 1.0, th / np.where(th < 1.0, 1.0 - th, 1.0), 0.0)
        if self.variant == "henry":
            g = np.ones_like(sig * th)
        elif self.variant == "langmuir":
            g = np.broadcast_to(free, (sig * th).shape)
        elif self.variant == "volmer":
            g = np.where(th < 1.0, free * np.exp(-self.beta * ratio), 0.0)
            g = np.broadcast_to(g, (sig * th).shape)
        elif self.variant == "frumkin":
            g = th**sig * np.exp(-sig * self.beta * th)
        else:  # vanderwaals
            g = np.where(th < 1.0, np.exp(-self.beta * th) * np.exp(-sig * ratio), 0.0)
        return np.array(g, dtype=float)

    def rates(self, c_trace, c_surf) -> np.ndarray:
        """Unchecked evaluation of the net sorption rates."""
        c_trace = np.asarray(c_trace, dtype=float)
        c_surf = np.asarray(c_surf, dtype=float)
        g = self.adsorption_factor(self.occupancy(c_surf))
        return self._col(self.k_ad, c_trace) * c_trace * g - self._col(self.k_de, c_surf) * c_surf


def eval_occupancy(model: SorptionModel, c_surf) -> np.ndarray | float:
    c_surf = np.asarray(c_surf, dtype=float)
    _check_nonneg(c_surf, "surface concentration")
    theta = model.occupancy(c_surf)
    return float(theta) if theta.ndim == 0 else theta


def eval_sorption(model: SorptionModel, c_trace, c_surf) -> np.ndarray:
    c_trace = np.asarray(c_trace, dtype=float)
    c_surf = np.asarray(c_surf, dtype=float)
    _check_nonneg(c_trace, "bulk trace concentration")
    _check_nonneg(c_surf, "surface concentration")
    if c_trace.shape != c_surf.shape or c_trace.shape[0] != model.n_species:
        raise UsageError("bulk trace and surface concentrations must both have shape (N, ...)")
    return model.rates(c_trace, c_surf)


# --------------------------------------------------------------------------
# mass-action networks

_TERM = re.compile(r"^\s*(?:(\d+)\s*\*?\s*)?([A-Za-z_][A-Za-z0-9_]*)\s*$")


@dataclass(frozen=True)
class ReactionNetwork:
    """Mass-action network ``r_i = sum_r stoich[i, r] * k_r * prod_j c_j ** orders[j, r]``."""

    stoich: np.ndarray
    orders: np.ndarray
    rates: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        stoich = np.array(self.stoich, dtype=np.int64, ndmin=2)
        orders = np.array(self.orders, dtype=np.int64, ndmin=2)
        rates = np.array(self.rates, dtype=float, ndmin=1)
        if stoich.shape != orders.shape:
            raise UsageError("stoich and orders must have the same shape")
        if rates.shape != (stoich.shape[1],):
            raise UsageError("one rate constant per reaction is required")
        if np.any(orders < 0):
            raise DomainError("reaction orders must be nonnegative")
        if np.any((stoich < 0) & (orders < 1)):
            raise DomainError("a consumed species must appear among the reactants (order >= 1)")
        if np.any(rates <= 0):
            raise DomainError("rate constants must be strictly positive")
        for a in (stoich, orders, rates):
            a.setflags(write=False)
        object.__setattr__(self, "stoich", stoich)
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def empty(cls, n_species: int) -> "ReactionNetwork":
        z = np.zeros((n_species, 0), dtype=np.int64)
        return cls(z, z, np.zeros(0))

    @classmethod
    def from_strings(cls, species: Sequence[str], reactions: Sequence[str]) -> "ReactionNetwork":
        species = list(species)
        cols = [parse_reaction(s, species) for s in reactions]
        n = len(species)
        if not cols:
            return cls.empty(n)
        stoich = np.array([c[0] for c in cols]).T.reshape(n, len(cols))
        orders = np.array([c[1] for c in cols]).T.reshape(n, len(cols))
        rates = np.array([c[2] for c in cols])
        return cls(stoich, orders, rates, labels=tuple(s.strip() for s in reactions))

    @property
    def n_species(self) -> int:
        return self.stoich.shape[0]

    @property
    def n_reactions(self) -> int:
        return self.stoich.shape[1]

    def reaction_velocities(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        out = np.empty((self.n_reactions,) + c.shape[1:])
        for r in range(self.n_reactions):
            out[r] = self.reaction_velocities_single(c, r)
        return out

    def __call__(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if self.n_reactions == 0:
            return np.zeros_like(c)
        return np.tensordot(self.stoich.astype(float), self.reaction_velocities(c), axes=(1, 0))

    def production_destruction(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split ``r = P - D`` with ``P, D >= 0``; returns ``(P, D / c)``.

        Every destruction term of species ``i`` carries a factor ``c_i``; the
        quotient is formed analytically so it stays finite at ``c_i = 0``.
        """
        c = np.asarray(c, dtype=float)
        prod = np.zeros_like(c)
        dest_rel = np.zeros_like(c)
        for r in range(self.n_reactions):
            v = None
            for i in range(self.n_species):
                nu = self.stoich[i, r]
                if nu > 0:
                    if v is None:
                        v = self.reaction_velocities_single(c, r)
                    prod[i] += nu * v
                elif nu < 0:
                    w = np.full(c.shape[1:], self.rates[r] * -nu)
                    for j in np.nonzero(self.orders[:, r])[0]:
                        e = self.orders[j, r] - (1 if j == i else 0)
                        if e:
                            w = w * c[j] ** e
                    dest_rel[i] += w
        return prod, dest_rel

    def reaction_velocities_single(self, c: np.ndarray, r: int) -> np.ndarray:
        v = np.full(c.shape[1:], self.rates[r])
        for j in np.nonzero(self.orders[:, r])[0]:
            v = v * c[j] ** self.orders[j, r]
        return v

    def jacobian(self, c) -> np.ndarray:
        """Exact Jacobian at a single point ``c`` of shape ``(N,)``."""
        c = np.asarray(c, dtype=float)
        n = self.n_species
        jac = np.zeros((n, n))
        for r in range(self.n_reactions):
            for j in np.nonzero(self.orders[:, r])[0]:
                d = self.rates[r] * self.orders[j, r]
                for l in np.nonzero(self.orders[:, r])[0]:
                    e = self.orders[l, r] - (1 if l == j else 0)
                    if e:
                        d = d * c[l] ** e
                jac[:, j] += self.stoich[:, r] * d
        return jac

    def permuted(self, perm: Sequence[int]) -> "ReactionNetwork":
        perm = list(perm)
        return ReactionNetwork(self.stoich[perm], self.orders[perm], self.rates, self.labels)


def parse_reaction(text: str, species: Sequence[str]) -> tuple[list[int], list[int], float]:
    """Parse ``"A + 2 B -> C @ k"`` into ``(stoich column, order column, k)``.

    An empty side, or the literal ``0``, denotes no species.
    """
    if "@" not in text:
        raise UsageError(f"reaction {text!r}: missing '@ rate'")
    body, rate_txt = text.rsplit("@", 1)
    try:
        k = float(rate_txt)
    except ValueError:
        raise UsageError(f"reaction {text!r}: rate {rate_txt.strip()!r} is not a number") from None
    if "->" not in body:
        raise UsageError(f"reaction {text!r}: missing '->'")
    lhs, rhs = body.split("->", 1)
    index = {name: i for i, name in enumerate(species)}

    def side(expr: str) -> list[int]:
        counts = [0] * len(species)
        expr = expr.strip()
        if expr in ("", "0"):
            return counts
        for term in expr.split("+"):
            m = _TERM.match(term)
            if not m:
                raise UsageError(f"reaction {text!r}: cannot parse term {term.strip()!r}")
            mult = int(m.group(1)) if m.group(1) else 1
            name = m.group(2)
            if name not in index:
                raise UsageError(f"reaction {text!r}: unknown species {name!r}")
            counts[index[name]] += mult
        return counts

    reac, prod = side(lhs), side(rhs)
    if not k > 0:
        raise DomainError(f"reaction {text!r}: rate constant must be strictly positive")
    return [p - r for p, r in zip(prod, reac)], reac, k


@dataclass(frozen=True)
class TriangularStructure:
    q: np.ndarray
    c_tr: float
    mu: float

    def __post_init__(self):
        q = np.array(self.q, dtype=float, ndmin=2)
        if q.shape[0] != q.shape[1]:
            raise UsageError("Q must be square")
        if np.any(np.triu(q, 1) != 0):
            raise DomainError("Q must be lower triangular")
        if np.any(q < 0) or np.any(np.diag(q) <= 0):
            raise DomainError("Q must be nonnegative with a strictly positive diagonal")
        if not self.c_tr > 0:
            raise DomainError("C_tr must be strictly positive")
        if not self.mu >= 0:
            raise DomainError("mu must be nonnegative")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "c_tr", float(self.c_tr))
        object.__setattr__(self, "mu", float(self.mu))

    @classmethod
    def lower_ones(cls, n: int, c_tr: float = 1.0, mu: float = 0.0) -> "TriangularStructure":
        return cls(np.tril(np.ones((n, n))), c_tr, mu)


# --------------------------------------------------------------------------
# sample-based checkers


@dataclass
class CheckReport:
    property: str
    verdict: str  # "pass" | "fail" | "inconclusive"
    worst: float
    witness: tuple | None
    samples: int
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def format(self) -> str:
        line = f"CHECK {self.property} {self.verdict} worst={self.worst:.6g} samples={self.samples}"
        if self.detail:
            line += f" ({self.detail})"
        if self.verdict == "fail" and self.witness is not None:
            w = " ".join("[" + ",".join(f"{x:.6g}" for x in np.ravel(v)) + "]" for v in self.witness)
            line += f" witness={w}"
        return line


def sobol_points(dim: int, n: int = DEFAULT_SAMPLES, radius: float = 1.0, seed: int = SOBOL_SEED) -> np.ndarray:
    """Deterministic scrambled Sobol points in ``[0, radius]^dim``, shape ``(dim, n)``."""
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    m = int(np.ceil(np.log2(max(n, 2))))
    pts = sampler.random_base2(m)[:n]
    return radius * pts.T


def _evaluate(f: Callable, pts: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` column-wise on ``pts`` of shape ``(n, m)``."""
    n, m = pts.shape
    if isinstance(f, ReactionNetwork):
        return f(pts)
    out = np.empty((n, m))
    for k in range(m):
        out[:, k] = np.broadcast_to(np.asarray(f(pts[:, k]), dtype=float), (n,))
    return out


def _verdict(worst: float, tol: float, finite: bool) -> str:
    if not finite:
        return "inconclusive"
    return "fail" if worst > tol else "pass"


def check_quasi_positivity(f: Callable, n: int, n_samples: int = DEFAULT_SAMPLES,
                           radius: float = 10.0, tol: float = 1e-12) -> CheckReport:
    """Check ``f_i(z) >= 0`` on every face ``{z_i = 0}`` of the orthant."""
    base = sobol_points(n, n_samples, radius)
    worst, witness, finite = -np.inf, None, True
    for i in range(n):
        pts = base.copy()
        pts[i] = 0.0
        vals = _evaluate(f, pts)[i]
        finite &= bool(np.all(np.isfinite(vals)))
        k = int(np.nanargmin(vals))
        if -vals[k] > worst:
            worst, witness = float(-vals[k]), (pts[:, k].copy(),)
    return CheckReport("quasi_positivity", _verdict(worst, tol, finite), max(worst, 0.0) + 0.0, witness,
                       n * base.shape[1])


def _sorption_violations(model, c: np.ndarray, cs: np.ndarray, h: float) -> dict[str, np.ndarray]:
    """Per-point violation magnitudes (positive = violated) of each structural condition."""
    n = c.shape[0]
    s = model.rates(c, cs)
    k_ad = np.asarray(model.k_ad, dtype=float)[:, None]
    k_de = np.asarray(model.k_de, dtype=float)[:, None]
    nc = np.linalg.norm(c, axis=0)[None, :]
    ncs = np.linalg.norm(cs, axis=0)[None, :]
    out = {
        "lower_bound": np.max(-k_de * (1 + ncs) - s, axis=0),
        "upper_bound": np.max(s - k_ad * (1 + nc), axis=0),
    }
    inc_bulk = np.full(c.shape[1], -np.inf)
    dec_surf = np.full(c.shape[1], -np.inf)
    sign_ad = np.full(c.shape[1], -np.inf)
    sign_de = np.full(c.shape[1], -np.inf)
    for i in range(n):
        # one-sided step where the central stencil would leave the orthant
        for arr, other, store, sgn in ((c, cs, "bulk", 1.0), (cs, c, "surf", -1.0)):
            lo = np.maximum(arr[i] - h, 0.0)
            hi = arr[i] + h
            a_hi = arr.copy()
            a_hi[i] = hi
            a_lo = arr.copy()
            a_lo[i] = lo
            if store == "bulk":
                d = (model.rates(a_hi, other)[i] - model.rates(a_lo, other)[i]) / (hi - lo)
                inc_bulk = np.maximum(inc_bulk, -d)
            else:
                d = (model.rates(other, a_hi)[i] - model.rates(other, a_lo)[i]) / (hi - lo)
                dec_surf = np.maximum(dec_surf, d)
        c0 = c.copy()
        c0[i] = 0.0
        sign_ad = np.maximum(sign_ad, model.rates(c0, cs)[i])
        cs0 = cs.copy()
        cs0[i] = 0.0
        sign_de = np.maximum(sign_de, -model.rates(c, cs0)[i])
    out["increasing_in_bulk"] = inc_bulk
    out["decreasing_in_surface"] = dec_surf
    out["sign_without_bulk"] = sign_ad
    out["sign_without_surface"] = sign_de
    return out


def check_sorption_structure(model, radius: float = 2.0, n_samples: int = DEFAULT_SAMPLES,
                             tol: float = FD_TOL) -> CheckReport:
    """Sample the box ``[0, radius]^{2N}`` for violations of the sorption structure conditions.

    ``model`` needs ``n_species``, ``k_ad``, ``k_de`` and a vectorised
    ``rates(c_trace, c_surf)``.
    """
    if not radius > 0:
        raise UsageError("radius must be positive")
    n = model.n_species
    pts = sobol_points(2 * n, n_samples, radius)
    # include the origin and the far corner explicitly
    pts = np.concatenate([pts, np.zeros((2 * n, 1)), np.full((2 * n, 1), radius)], axis=1)
    c, cs = pts[:n], pts[n:]
    h = FD_REL_STEP * max(1.0, radius)
    viol = _sorption_violations(model, c, cs, h)
    worst, name, k = -np.inf, "", 0
    finite = True
    for key, v in viol.items():
        finite &= bool(np.all(np.isfinite(v)))
        j = int(np.nanargmax(v))
        if v[j] > worst:
            worst, name, k = float(v[j]), key, j
    verdict = _verdict(worst, tol, finite)
    witness = (c[:, k].copy(), cs[:, k].copy())
    return CheckReport("sorption_structure", verdict, max(worst, 0.0) + 0.0, witness, pts.shape[1],
                       detail=f"worst condition: {name}")


def sorption_violation_at(model, c, cs, radius: float = 2.0) -> dict[str, float]:
    """Re-evaluate every structural condition at a single witness point."""
    c = np.asarray(c, dtype=float)[:, None]
    cs = np.asarray(cs, dtype=float)[:, None]
    h = FD_REL_STEP * max(1.0, radius)
    return {k: float(v[0]) for k, v in _sorption_violations(model, c, cs, h).items()}


def growth_exponent(net: ReactionNetwork) -> tuple[int, float]:
    """Certified ``(gamma, M)`` with ``|r'(y)| <= M (1 + |y|^(gamma-1))`` on the orthant.

    Each Jacobian entry is a sum of monomials of degree at most ``gamma - 1``;
    every such monomial is bounded by ``1 + |y|^(gamma-1)``, so summing the
    absolute coefficients bounds the Frobenius (hence operator) norm.
    """
    if net.n_reactions == 0:
        return 1, 0.0
    total = net.orders.sum(axis=0)
    gamma = int(max(1, total.max()))
    m = float(np.sum(net.rates * np.abs(net.stoich).sum(axis=0) * total))
    return gamma, m


def check_triangular(rates, structure: TriangularStructure, radius: float = 10.0,
                     n_samples: int = DEFAULT_SAMPLES, tol: float = 1e-10) -> CheckReport:
    """Check ``Q r(y) <= C_tr (1 + sum_j y_j)^mu`` componentwise on sampled ``y``."""
    n = structure.q.shape[0]
    if isinstance(rates, ReactionNetwork) and rates.n_species != n:
        raise UsageError(f"network has {rates.n_species} species but Q is {n}x{n}")
    if not radius > 0:
        raise UsageError("radius must be positive")
    pts = [sobol_points(n, n_samples, radius)]
    ray = np.linspace(0.0, radius, 65)
    for j in range(n):
        p = np.zeros((n, ray.size))
        p[j] = ray
        pts.append(p)
    pts.append(np.outer(np.ones(n), ray))
    pts = np.concatenate(pts, axis=1)
    vals = _evaluate(rates, pts)
    if vals.shape[0] != n:
        raise UsageError("rate function dimension does not match Q")
    lhs = structure.q @ vals
    bound = structure.c_tr * (1.0 + pts.sum(axis=0)) ** structure.mu
    excess = (lhs - bound[None, :]) / np.maximum(1.0, bound)[None, :]
    finite = bool(np.all(np.isfinite(excess)))
    flat = np.nanmax(excess, axis=0)
    k = int(np.nanargmax(flat))
    worst = float(flat[k])
    return CheckReport("triangular_structure", _verdict(worst, tol, finite), max(worst, 0.0) + 0.0,
                       (pts[:, k].copy(),), pts.shape[1])
