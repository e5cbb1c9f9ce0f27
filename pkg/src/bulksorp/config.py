"""INI-style run configuration with line-numbered diagnostics.

Sections are ``[name]`` headers followed by ``key = value`` lines; ``#``
starts a comment.  Lists are separated by commas or whitespace.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .disc import Grid, State, VelocityField, build_grid
from .errors import DomainError, UsageError
from .model import ReactionNetwork, SorptionModel, SpeciesSystem, TriangularStructure, parse_reaction
from .stepper import Problem, StepperConfig


class ConfigError(ValueError):
    """Invalid configuration; names the section, key and line where the problem was found."""

    def __init__(self, reason: str, section: str | None = None, key: str | None = None,
                 line: int | None = None):
        self.reason, self.section, self.key, self.line = reason, section, key, line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        super().__init__(f"{', '.join(where)}: {reason}" if where else reason)


_STEPPER_KEYS = ("dt_init", "dt_min", "dt_max", "cfl", "lin_tol", "blowup_threshold", "positivity_tol",
                 "max_lin_iter", "t_end", "output_every")

_KEYS = {
    "grid": ("dim", "nx", "ny", "lx", "ly"),
    "species": ("names", "d_bulk", "d_surf"),
    "sorption": ("variant", "k_ad", "k_de", "sigma", "c_s_sigma", "beta"),
    "velocity": ("variant", "amplitude"),
    "stepper": _STEPPER_KEYS,
    "output": ("csv", "snapshot_dir", "snapshot_every"),
    "triangular_bulk": ("q", "c_tr", "mu"),
    "triangular_surface": ("q", "c_tr", "mu"),
}
_FREE_SECTIONS = ("reactions_bulk", "reactions_surface", "initial")
_REQUIRED = ("grid", "species", "sorption")

_SECTION = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]$")
_ENTRY = re.compile(r"^([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.*)$")


@dataclass(frozen=True)
class Entry:
    value: str
    line: int


def parse_ini(text: str) -> dict[str, dict[str, Entry]]:
    """Split ``text`` into ``{section: {key: Entry}}``; rejects duplicates and stray lines."""
    sections: dict[str, dict[str, Entry]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1).lower()
            if current in sections:
                raise ConfigError("duplicate section", current, line=lineno)
            if current not in _KEYS and current not in _FREE_SECTIONS:
                raise ConfigError("unknown section", current, line=lineno)
            sections[current] = {}
            continue
        m = _ENTRY.match(line)
        if not m:
            raise ConfigError(f"syntax error: expected 'key = value', got {raw.strip()!r}", current, line=lineno)
        if current is None:
            raise ConfigError("entry outside of any section", line=lineno)
        key, value = m.group(1), m.group(2).strip()
        if current in _KEYS and key not in _KEYS[current]:
            raise ConfigError("unknown key", current, key, lineno)
        if key in sections[current]:
            raise ConfigError("duplicate key", current, key, lineno)
        sections[current][key] = Entry(value, lineno)
    return sections


@dataclass(frozen=True)
class InitialProfile:
    """``constant v``, ``cosine mean amplitude`` or ``random seed low high``."""

    kind: str
    params: tuple[float, ...]

    def evaluate(self, points: np.ndarray, extents, salt: int = 0) -> np.ndarray:
        n = points.shape[0]
        if self.kind == "constant":
            return np.full(n, self.params[0])
        if self.kind == "cosine":
            mean, amp = self.params
            prof = np.ones(n)
            for k, length in enumerate(extents):
                prof = prof * np.cos(np.pi * points[:, k] / length)
            return mean + amp * prof
        seed, lo, hi = self.params
        rng = np.random.default_rng([int(seed), salt])
        return rng.uniform(lo, hi, n)


def _parse_profile(text: str) -> InitialProfile:
    parts = text.split()
    try:
        if len(parts) == 1:
            return InitialProfile("constant", (float(parts[0]),))
        kind, args = parts[0].lower(), tuple(float(p) for p in parts[1:])
    except ValueError as exc:
        raise ValueError(f"cannot parse initial profile {text!r}") from exc
    if kind == "constant" and len(args) == 1:
        return InitialProfile(kind, args)
    if kind == "cosine" and len(args) == 2:
        return InitialProfile(kind, args)
    if kind == "random" and len(args) == 3 and args[1] <= args[2]:
        return InitialProfile(kind, args)
    raise ValueError(f"cannot parse initial profile {text!r}; use a number, "
                     "'cosine mean amplitude' or 'random seed low high'")


@dataclass
class Config:
    text: str
    grid: Grid
    species: SpeciesSystem
    sorption: SorptionModel
    bulk_reactions: ReactionNetwork
    surface_reactions: ReactionNetwork
    velocity: VelocityField
    stepper: StepperConfig
    t_end: float
    initial_bulk: dict[str, InitialProfile]
    initial_surf: dict[str, InitialProfile]
    reaction_text_bulk: list[str] = field(default_factory=list)
    reaction_text_surface: list[str] = field(default_factory=list)
    csv: str | None = None
    snapshot_dir: str | None = None
    snapshot_every: float | None = None
    triangular_bulk: TriangularStructure | None = None
    triangular_surface: TriangularStructure | None = None

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def problem(self) -> Problem:
        return Problem(self.grid, self.species, self.sorption, self.bulk_reactions,
                       self.surface_reactions, self.velocity)

    def initial_state(self) -> State:
        g = self.grid
        c = np.zeros((self.species.n_species, g.n_cells))
        cs = np.zeros((self.species.n_species, g.n_faces))
        for i, name in enumerate(self.species.names):
            if name in self.initial_bulk:
                c[i] = self.initial_bulk[name].evaluate(g.cell_centers, g.extents, salt=2 * i)
            if name in self.initial_surf:
                cs[i] = self.initial_surf[name].evaluate(g.face_centers, g.extents, salt=2 * i + 1)
        return State(0.0, c, cs)


def _floats(entry: Entry, section: str, key: str, n: int | None = None) -> np.ndarray:
    try:
        vals = np.array([float(x) for x in re.split(r"[,\s]+", entry.value) if x], dtype=float)
    except ValueError:
        raise ConfigError(f"expected number(s), got {entry.value!r}", section, key, entry.line) from None
    if vals.size == 0:
        raise ConfigError("missing value", section, key, entry.line)
    if n is not None:
        if vals.size == 1:
            vals = np.full(n, vals[0])
        elif vals.size != n:
            raise ConfigError(f"expected {n} values, got {vals.size}", section, key, entry.line)
    return vals


def _scalar(sec: dict[str, Entry], section: str, key: str, default=None, kind=float):
    if key not in sec:
        if default is None:
            raise ConfigError("missing required key", section, key)
        return default
    entry = sec[key]
    try:
        return kind(entry.value)
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {entry.value!r}", section, key, entry.line) from None


def _line(sec: dict[str, Entry], *keys) -> int | None:
    lines = [sec[k].line for k in keys if k in sec]
    return min(lines) if lines else None


def _triangular(sec: dict[str, Entry], section: str, n: int) -> TriangularStructure:
    if "q" not in sec:
        raise ConfigError("missing required key", section, "q")
    rows = [r for r in sec["q"].value.split(";") if r.strip()]
    try:
        q = np.array([[float(x) for x in re.split(r"[,\s]+", r.strip())] for r in rows])
        return TriangularStructure(q, _scalar(sec, section, "c_tr", 1.0), _scalar(sec, section, "mu", 0.0))
    except (ValueError, UsageError, DomainError) as exc:
        raise ConfigError(str(exc), section, "q", sec["q"].line) from None


def parse_config(text: str) -> Config:
    """Parse and validate a configuration; raises :class:`ConfigError` on any problem."""
    ini = parse_ini(text)
    for name in _REQUIRED:
        if name not in ini:
            raise ConfigError("missing required section", name)

    g = ini["grid"]
    dim = _scalar(g, "grid", "dim", 1, int)
    if dim not in (1, 2):
        raise ConfigError("dim must be 1 or 2", "grid", "dim", _line(g, "dim"))
    if dim == 1 and ("ny" in g or "ly" in g):
        raise ConfigError("ny/ly are only valid for dim = 2", "grid", None, _line(g, "ny", "ly"))
    counts = [_scalar(g, "grid", "nx", kind=int)] + ([_scalar(g, "grid", "ny", kind=int)] if dim == 2 else [])
    extents = [_scalar(g, "grid", "lx", 1.0)] + ([_scalar(g, "grid", "ly", 1.0)] if dim == 2 else [])
    try:
        grid = build_grid(dim, counts, extents)
    except (UsageError, DomainError) as exc:
        raise ConfigError(str(exc), "grid", None, _line(g, "nx", "ny", "lx", "ly")) from None

    s = ini["species"]
    if "names" not in s:
        raise ConfigError("missing required key", "species", "names")
    names = [x for x in re.split(r"[,\s]+", s["names"].value) if x]
    n = len(names)
    for key in ("d_bulk", "d_surf"):
        if key not in s:
            raise ConfigError("missing required key", "species", key)
    try:
        species = SpeciesSystem(names, _floats(s["d_bulk"], "species", "d_bulk", n),
                                _floats(s["d_surf"], "species", "d_surf", n))
    except (UsageError, DomainError) as exc:
        raise ConfigError(str(exc), "species", None, _line(s, "names", "d_bulk", "d_surf")) from None

    so = ini["sorption"]
    if "variant" not in so:
        raise ConfigError("missing required key", "sorption", "variant")
    kw = {}
    for key in ("k_ad", "k_de"):
        if key not in so:
            raise ConfigError("missing required key", "sorption", key)
        vals = _floats(so[key], "sorption", key, n)
        if np.any(vals < 0):
            raise ConfigError(f"{key} must be nonnegative: sorption rate coefficients are positive "
                              "constants in the sorption law", "sorption", key, so[key].line)
        kw[key] = vals
    if "sigma" in so:
        kw["sigma"] = _floats(so["sigma"], "sorption", "sigma", n)
    try:
        sorption = SorptionModel(so["variant"].value, c_s_sigma=_scalar(so, "sorption", "c_s_sigma", 1.0),
                                 beta=_scalar(so, "sorption", "beta", 1.0), **kw)
    except (UsageError, DomainError) as exc:
        raise ConfigError(str(exc), "sorption", None, _line(so, "variant")) from None

    nets, texts = {}, {}
    for section in ("reactions_bulk", "reactions_surface"):
        sec = ini.get(section, {})
        texts[section] = [e.value for e in sec.values()]
        for key, entry in sec.items():
            try:
                parse_reaction(entry.value, names)
            except (ValueError, UsageError, DomainError) as exc:
                raise ConfigError(str(exc), section, key, entry.line) from None
        nets[section] = ReactionNetwork.from_strings(names, texts[section])

    v = ini.get("velocity", {})
    try:
        velocity = VelocityField(v["variant"].value if "variant" in v else "zero",
                                 _scalar(v, "velocity", "amplitude", 0.0))
    except UsageError as exc:
        raise ConfigError(str(exc), "velocity", "variant", _line(v, "variant")) from None

    st = ini.get("stepper", {})
    t_end = _scalar(st, "stepper", "t_end", 1.0)
    if not t_end > 0:
        raise ConfigError("t_end must be positive", "stepper", "t_end", _line(st, "t_end"))
    defaults = StepperConfig()
    skw = {}
    for key in _STEPPER_KEYS:
        if key == "t_end" or key not in st:
            continue
        skw[key] = _scalar(st, "stepper", key, kind=int if key == "max_lin_iter" else float)
    if "output_every" not in skw:
        skw["output_every"] = min(defaults.output_every, t_end)
    try:
        stepper = StepperConfig(**skw)
    except UsageError as exc:
        raise ConfigError(str(exc), "stepper", None, _line(st, *skw)) from None

    bulk_init, surf_init = {}, {}
    for key, entry in ini.get("initial", {}).items():
        name, _, where = key.partition(".")
        if name not in names or where not in ("", "surf"):
            raise ConfigError("expected a species name, optionally suffixed by '.surf'", "initial", key, entry.line)
        try:
            prof = _parse_profile(entry.value)
        except ValueError as exc:
            raise ConfigError(str(exc), "initial", key, entry.line) from None
        (surf_init if where else bulk_init)[name] = prof

    out = ini.get("output", {})
    snapshot_every = _scalar(out, "output", "snapshot_every", 0.0) or None
    if snapshot_every is not None and snapshot_every < 0:
        raise ConfigError("snapshot_every must be positive", "output", "snapshot_every", out["snapshot_every"].line)

    tri = {}
    for section, n_check in (("triangular_bulk", n), ("triangular_surface", n)):
        if section in ini:
            tri[section] = _triangular(ini[section], section, n_check)
            if tri[section].q.shape != (n, n):
                raise ConfigError(f"q must be {n}x{n}", section, "q", ini[section]["q"].line)

    return Config(
        text=text, grid=grid, species=species, sorption=sorption,
        bulk_reactions=nets["reactions_bulk"], surface_reactions=nets["reactions_surface"],
        velocity=velocity, stepper=stepper, t_end=t_end,
        initial_bulk=bulk_init, initial_surf=surf_init,
        reaction_text_bulk=texts["reactions_bulk"], reaction_text_surface=texts["reactions_surface"],
        csv=out["csv"].value if "csv" in out else None,
        snapshot_dir=out["snapshot_dir"].value if "snapshot_dir" in out else None,
        snapshot_every=snapshot_every,
        triangular_bulk=tri.get("triangular_bulk"), triangular_surface=tri.get("triangular_surface"),
    )


def load_config(source: str | Path) -> Config:
    """Load ``builtin:NAME`` or a file path."""
    from .scenarios import builtin_text

    source = str(source)
    if source.startswith("builtin:"):
        return parse_config(builtin_text(source.split(":", 1)[1]))
    return parse_config(Path(source).read_text())
