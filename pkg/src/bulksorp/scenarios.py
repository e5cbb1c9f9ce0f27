"""Built-in scenarios, stored as configuration text so every run is reproducible from its fingerprint."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import UsageError
from .model import SORPTION_VARIANTS

NETWORK_SEED = 7
MATRIX_SPECIES = ("A", "B", "C")
# In one dimension a divergence-free field with no-flux walls vanishes, so the
# 1-d stream-function runs coincide with the zero-velocity ones.
MATRIX_LAYOUTS = (("1d", "zero"), ("1d", "stream"), ("2d", "zero"), ("2d", "stream"))


def random_network(seed: int, species=MATRIX_SPECIES, n_reactions: int = 4) -> list[str]:
    """Mass-action reactions (hence quasi-positive) that cannot create mass faster than linearly.

    Reactions of total order two never have more product molecules than
    reactant molecules, so solutions stay bounded.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_reactions:
        order = int(rng.integers(1, 3))
        reac = rng.choice(len(species), size=order)
        n_prod = int(rng.integers(0, order + 1)) if order > 1 else int(rng.integers(1, 3))
        prod = rng.choice(len(species), size=n_prod)
        if n_prod == order and sorted(reac) == sorted(prod):
            continue
        rate = round(float(rng.uniform(0.2, 1.5)), 3)
        lhs = " + ".join(species[i] for i in reac)
        rhs = " + ".join(species[i] for i in prod) or "0"
        out.append(f"{lhs} -> {rhs} @ {rate!r}")
    return out


def _section(name: str, entries: dict) -> str:
    body = "".join(f"{k} = {v}\n" for k, v in entries.items())
    return f"[{name}]\n{body}"


def _reactions(name: str, reactions) -> str:
    return _section(name, {f"r{i + 1}": r for i, r in enumerate(reactions)}) if reactions else ""


def _grid(layout: str) -> dict:
    if layout == "1d":
        return {"dim": 1, "nx": 32}
    return {"dim": 2, "nx": 16, "ny": 16}


def _matrix_text(variant: str, layout: str, velocity: str, reactions: bool, t_end: float) -> str:
    parts = [
        _section("grid", _grid(layout)),
        _section("species", {"names": "A, B, C", "d_bulk": "1.0, 0.5, 0.2", "d_surf": "0.3, 0.2, 0.1"}),
        _section("sorption", {"variant": variant, "k_ad": "1.0", "k_de": "0.5", "sigma": "1, 1.5, 2",
                              "c_s_sigma": 2.0, "beta": 1.0}),
    ]
    if reactions:
        parts.append(_reactions("reactions_bulk", random_network(NETWORK_SEED)))
        parts.append(_reactions("reactions_surface", random_network(NETWORK_SEED + 1, n_reactions=3)))
    parts.append(_section("velocity", {"variant": velocity, "amplitude": 1.0 if velocity == "stream" else 0.0}))
    parts.append(_section("stepper", {"t_end": t_end, "output_every": 0.1}))
    parts.append(_section("initial", {"A": "random 1 0 1", "B": "random 2 0 1", "C": "random 3 0 1",
                                      "A.surf": "random 4 0 0.4", "B.surf": "random 5 0 0.4",
                                      "C.surf": "random 6 0 0.4"}))
    return "\n".join(parts)


HENRY_BLOWUP = """\
# N = 1, s = c - c_surf, r = c^2 in bulk and on the surface, unit data.
# The exact solution is spatially constant, c = c_surf = 1/(1 - t).
[grid]
dim = 1
nx = 8

[species]
names = A
d_bulk = 1.0
d_surf = 1.0

[sorption]
variant = henry
k_ad = 1.0
k_de = 1.0

[reactions_bulk]
r1 = 2 A -> 3 A @ 1

[reactions_surface]
r1 = 2 A -> 3 A @ 1

[stepper]
t_end = 2.0
output_every = 0.05

[initial]
A = 1.0
A.surf = 1.0
"""


def _langmuir_cap(k_ad: float, k_de: float, c0: float, theta0: float) -> str:
    return "\n".join([
        _section("grid", {"dim": 1, "nx": 32}),
        _section("species", {"names": "A", "d_bulk": 1.0, "d_surf": 1.0}),
        _section("sorption", {"variant": "langmuir", "k_ad": k_ad, "k_de": k_de, "c_s_sigma": 1.0}),
        _section("stepper", {"t_end": 5.0, "output_every": 0.1}),
        _section("initial", {"A": c0, "A.surf": theta0}),
    ])


COMPARISON_HENRY = "\n".join([
    _section("grid", {"dim": 1, "nx": 32}),
    _section("species", {"names": "A, B", "d_bulk": "1.0, 0.5", "d_surf": "0.5, 0.2"}),
    _section("sorption", {"variant": "henry", "k_ad": "1.0, 0.5", "k_de": "0.5, 1.0"}),
    _reactions("reactions_bulk", ["A -> B @ 1.0"]),
    _reactions("reactions_surface", ["A -> B @ 0.5"]),
    _section("stepper", {"t_end": 1.0, "output_every": 0.1}),
    _section("initial", {"A": "cosine 1.0 0.5", "B": 0.2, "A.surf": 0.5, "B.surf": 0.1}),
])

COMPARISON_LANGMUIR = "\n".join([
    _section("grid", {"dim": 1, "nx": 32}),
    _section("species", {"names": "A, B, C", "d_bulk": "1.0, 0.5, 0.2", "d_surf": "0.3, 0.2, 0.1"}),
    _section("sorption", {"variant": "langmuir", "k_ad": "1.0, 0.8, 0.5", "k_de": "0.5", "sigma": "1, 1, 1",
                          "c_s_sigma": 2.0}),
    _reactions("reactions_bulk", ["A + B -> C @ 1.0", "2 A -> B @ 0.5"]),
    _section("stepper", {"t_end": 1.0, "output_every": 0.1}),
    _section("initial", {"A": "cosine 1.5 1.0", "B": "cosine 1.0 -0.5", "C": 0.1,
                         "A.surf": 0.2, "B.surf": 0.1, "C.surf": 0.0}),
    _section("triangular_bulk", {"q": "1 0 0; 1 1 0; 1 1 1", "c_tr": 1.0, "mu": 0.0}),
    _section("triangular_surface", {"q": "1 0 0; 1 1 0; 1 1 1", "c_tr": 1.0, "mu": 0.0}),
])

ENVELOPE_LINEAR = "\n".join([
    _section("grid", {"dim": 1, "nx": 32}),
    _section("species", {"names": "A, B", "d_bulk": "1.0, 0.5", "d_surf": "0.5, 0.5"}),
    _section("sorption", {"variant": "henry", "k_ad": "1.0, 1.0", "k_de": "0.5, 0.5"}),
    _reactions("reactions_bulk", ["A -> 2 A @ 0.8", "A -> B @ 0.3", "B -> A @ 0.2"]),
    _reactions("reactions_surface", ["A -> B @ 0.2"]),
    _section("stepper", {"t_end": 2.0, "output_every": 0.05}),
    _section("initial", {"A": "cosine 1.0 0.5", "B": 0.5, "A.surf": 0.5, "B.surf": 0.5}),
    _section("triangular_bulk", {"q": "1 0; 1 1", "c_tr": 1.0, "mu": 1.0}),
    _section("triangular_surface", {"q": "1 0; 1 1", "c_tr": 1.0, "mu": 1.0}),
])

HEAT_RESOLUTIONS = (16, 32, 64)
HEAT_T_END = 0.05
HEAT_DT_FACTOR = 0.05


def heat_text(n: int) -> str:
    """Neumann heat equation ``u = 1 + exp(-pi^2 t) cos(pi x)`` with ``dt = 0.05 h^2``; sorption off."""
    dt = HEAT_DT_FACTOR / n**2
    return "\n".join([
        _section("grid", {"dim": 1, "nx": n}),
        _section("species", {"names": "u", "d_bulk": 1.0, "d_surf": 1.0}),
        _section("sorption", {"variant": "henry", "k_ad": 0.0, "k_de": 0.0}),
        _section("stepper", {"t_end": HEAT_T_END, "output_every": HEAT_T_END, "dt_init": repr(dt),
                             "dt_min": repr(dt), "dt_max": repr(dt)}),
        _section("initial", {"u": "cosine 1.0 1.0"}),
    ])


@lru_cache(maxsize=None)
def _registry() -> dict[str, str]:
    reg = {"henry_blowup": HENRY_BLOWUP}
    for variant in SORPTION_VARIANTS:
        for layout, vel in MATRIX_LAYOUTS:
            reg[f"positivity_{variant}_{layout}_{vel}"] = _matrix_text(variant, layout, vel, True, 1.0)
            reg[f"mass_{variant}_{layout}_{vel}"] = _matrix_text(variant, layout, vel, False, 2.0)
    reg["langmuir_cap_theta0"] = _langmuir_cap(50.0, 0.0, 5.0, 0.0)
    reg["langmuir_cap_theta1.5"] = _langmuir_cap(1.0, 0.5, 1.0, 1.5)
    reg["comparison_henry"] = COMPARISON_HENRY
    reg["comparison_langmuir"] = COMPARISON_LANGMUIR
    reg["envelope_linear"] = ENVELOPE_LINEAR
    for n in HEAT_RESOLUTIONS:
        reg[f"heat_{n}"] = heat_text(n)
    return reg


def builtin_names() -> list[str]:
    return list(_registry())


def builtin_text(name: str) -> str:
    try:
        return _registry()[name]
    except KeyError:
        raise UsageError(f"unknown built-in scenario {name!r}") from None


def matrix_names(prefix: str) -> list[str]:
    return [f"{prefix}_{v}_{layout}_{vel}" for v in SORPTION_VARIANTS for layout, vel in MATRIX_LAYOUTS]
