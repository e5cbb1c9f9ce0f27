"""Cell-centred finite volumes on intervals and rectangles, with the boundary as surface mesh.

Bulk cells of a 2-d grid are numbered ``k = j * nx + i``.  The boundary faces
form a closed counter-clockwise chain starting at the lower-left corner
(bottom, right, top, left); surface cell ``f`` *is* boundary face ``f``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, UsageError
from .model import SorptionModel

# outward normal ids of boundary faces
NORMAL_XMINUS, NORMAL_XPLUS, NORMAL_YMINUS, NORMAL_YPLUS = 0, 1, 2, 3


@dataclass(frozen=True)
class Grid:
    dim: int
    shape: tuple[int, ...]
    extents: tuple[float, ...]
    cell_volume: np.ndarray
    cell_centers: np.ndarray  # (n_cells, dim)
    face_area: np.ndarray
    face_normal: np.ndarray
    face_cell: np.ndarray
    face_centers: np.ndarray  # (n_faces, dim)

    @property
    def n_cells(self) -> int:
        return self.cell_volume.size

    @property
    def n_faces(self) -> int:
        return self.face_area.size

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.shape))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    @property
    def boundary_measure(self) -> float:
        if self.dim == 1:
            return 2.0
        return 2.0 * (self.extents[0] + self.extents[1])

    def cell_index(self, i: int, j: int = 0) -> int:
        return j * self.shape[0] + i

    def chain_neighbours(self) -> np.ndarray:
        """Successor of each surface cell along the closed boundary chain (2-d only)."""
        return (np.arange(self.n_faces) + 1) % self.n_faces


def build_grid(dim: int, counts, extents=None) -> Grid:
    counts = tuple(int(n) for n in np.atleast_1d(counts))
    if dim not in (1, 2):
        raise UsageError("only 1-d and 2-d grids are supported")
    if len(counts) != dim:
        raise UsageError(f"{dim}-d grid needs {dim} cell counts")
    if any(n < 2 for n in counts):
        raise UsageError("at least 2 cells per axis are required")
    extents = tuple(float(x) for x in (np.atleast_1d(extents) if extents is not None else [1.0] * dim))
    if len(extents) != dim or any(not L > 0 for L in extents):
        raise UsageError("extents must be positive, one per axis")

    if dim == 1:
        (n,), (L,) = counts, extents
        h = L / n
        centers = ((np.arange(n) + 0.5) * h)[:, None]
        return Grid(
            1, counts, extents,
            cell_volume=_frozen(np.full(n, h)),
            cell_centers=_frozen(centers),
            face_area=_frozen(np.ones(2)),
            face_normal=_frozen(np.array([NORMAL_XMINUS, NORMAL_XPLUS])),
            face_cell=_frozen(np.array([0, n - 1])),
            face_centers=_frozen(np.array([[0.0], [L]])),
        )

    (nx, ny), (Lx, Ly) = counts, extents
    hx, hy = Lx / nx, Ly / ny
    xc = (np.arange(nx) + 0.5) * hx
    yc = (np.arange(ny) + 0.5) * hy
    X, Y = np.meshgrid(xc, yc)  # row j, column i -> k = j*nx + i
    centers = np.column_stack([X.ravel(), Y.ravel()])
    area, normal, cell, fc = [], [], [], []
    for i in range(nx):  # bottom, left to right
        area.append(hx); normal.append(NORMAL_YMINUS); cell.append(i); fc.append((xc[i], 0.0))
    for j in range(ny):  # right, bottom to top
        area.append(hy); normal.append(NORMAL_XPLUS); cell.append(j * nx + nx - 1); fc.append((Lx, yc[j]))
    for i in reversed(range(nx)):  # top, right to left
        area.append(hx); normal.append(NORMAL_YPLUS); cell.append((ny - 1) * nx + i); fc.append((xc[i], Ly))
    for j in reversed(range(ny)):  # left, top to bottom
        area.append(hy); normal.append(NORMAL_XMINUS); cell.append(j * nx); fc.append((0.0, yc[j]))
    return Grid(
        2, counts, extents,
        cell_volume=_frozen(np.full(nx * ny, hx * hy)),
        cell_centers=_frozen(centers),
        face_area=_frozen(np.array(area)),
        face_normal=_frozen(np.array(normal)),
        face_cell=_frozen(np.array(cell)),
        face_centers=_frozen(np.array(fc)),
    )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class State:
    t: float
    c: np.ndarray  # (N, n_cells), amount/volume
    c_surf: np.ndarray  # (N, n_faces), amount/area

    def validate(self, grid: Grid, n_species: int) -> None:
        if self.c.shape != (n_species, grid.n_cells):
            raise UsageError(f"bulk field has shape {self.c.shape}, expected {(n_species, grid.n_cells)}")
        if self.c_surf.shape != (n_species, grid.n_faces):
            raise UsageError(f"surface field has shape {self.c_surf.shape}, expected {(n_species, grid.n_faces)}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.c_surf))):
            raise DomainError("state contains non-finite values")

    def is_nonnegative(self, tol: float = 0.0) -> bool:
        return bool(self.c.min(initial=0.0) >= -tol and self.c_surf.min(initial=0.0) >= -tol)

    def min_value(self) -> float:
        return float(min(self.c.min(), self.c_surf.min()))

    def sup_norm(self) -> float:
        return float(max(np.abs(self.c).max(), np.abs(self.c_surf).max()))


def total_mass(grid: Grid, state: State) -> np.ndarray:
    """Per-species bulk plus surface amount."""
    return state.c @ grid.cell_volume + state.c_surf @ grid.face_area


@dataclass(frozen=True)
class SparseOperator:
    """Linear operator ``L`` stored row-compressed, with ``diag(weights) @ L`` symmetric for diffusion.

    ``weights`` are the cell measures (volumes or face areas) of the space the
    operator acts on.
    """

    matrix: sp.csr_matrix
    weights: np.ndarray

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, x):
        return self.matrix @ x

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def flux_matrix(self) -> sp.csr_matrix:
        """``diag(weights) @ L``: the symmetric, zero-row-sum face-flux matrix."""
        return sp.diags(self.weights) @ self.matrix

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def _flux_operator(n: int, pairs: np.ndarray, trans: np.ndarray, weights: np.ndarray) -> SparseOperator:
    """Two-point flux operator from neighbour pairs and face transmissibilities."""
    a, b = pairs[:, 0], pairs[:, 1]
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([b, a, a, b])
    vals = np.concatenate([trans, trans, -trans, -trans])
    flux = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    flux.sum_duplicates()
    return SparseOperator(sp.diags(1.0 / weights) @ flux, weights)


def _interior_faces(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Neighbour pairs (lower index first), face measure and centre distance of interior faces."""
    if grid.dim == 1:
        (n,), (h,) = grid.shape, grid.spacing
        k = np.arange(n - 1)
        return np.column_stack([k, k + 1]), np.ones(n - 1), np.full(n - 1, h)
    (nx, ny), (hx, hy) = grid.shape, grid.spacing
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="xy")
    kx = (j * nx + i).ravel()
    i, j = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="xy")
    ky = (j * nx + i).ravel()
    pairs = np.concatenate([np.column_stack([kx, kx + 1]), np.column_stack([ky, ky + nx])])
    area = np.concatenate([np.full(kx.size, hy), np.full(ky.size, hx)])
    dist = np.concatenate([np.full(kx.size, hx), np.full(ky.size, hy)])
    return pairs, area, dist


def assemble_bulk_diffusion(grid: Grid, d: float) -> SparseOperator:
    """``L c ~ d * Laplacian(c)`` with homogeneous Neumann closure."""
    if not d > 0:
        raise DomainError("bulk diffusivity must be positive")
    pairs, area, dist = _interior_faces(grid)
    return _flux_operator(grid.n_cells, pairs, d * area / dist, grid.cell_volume)


def assemble_surface_diffusion(grid: Grid, d_surf: float) -> SparseOperator:
    """Periodic two-point diffusion along the boundary chain; zero on a 1-d grid's end points."""
    if not d_surf > 0:
        raise DomainError("surface diffusivity must be positive")
    n = grid.n_faces
    if grid.dim == 1:
        return SparseOperator(sp.csr_matrix((n, n)), grid.face_area)
    nxt = grid.chain_neighbours()
    f = np.arange(n)
    dist = 0.5 * (grid.face_area + grid.face_area[nxt])
    pairs = np.sort(np.column_stack([f, nxt]), axis=1)
    return _flux_operator(n, pairs, d_surf / dist, grid.face_area)


@dataclass(frozen=True)
class VelocityField:
    """Prescribed incompressible velocity: ``zero`` or the stream function ``A sin(pi x/Lx) sin(pi y/Ly)``."""

    variant: str = "zero"
    amplitude: float = 0.0

    def __post_init__(self):
        v = str(self.variant).lower()
        if v in ("stream", "streamfunction", "stream_function"):
            v = "stream"
        if v not in ("zero", "stream"):
            raise UsageError(f"unknown velocity variant {self.variant!r}")
        object.__setattr__(self, "variant", v)
        object.__setattr__(self, "amplitude", float(self.amplitude))

    def stream_values(self, grid: Grid) -> np.ndarray:
        """Stream function at grid vertices, shape ``(ny+1, nx+1)``, exactly zero on the boundary."""
        (nx, ny), (Lx, Ly) = grid.shape, grid.extents
        x = np.linspace(0.0, Lx, nx + 1)
        y = np.linspace(0.0, Ly, ny + 1)
        psi = self.amplitude * np.outer(np.sin(np.pi * y / Ly), np.sin(np.pi * x / Lx))
        psi[0, :] = psi[-1, :] = 0.0
        psi[:, 0] = psi[:, -1] = 0.0
        return psi

    def face_fluxes(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        """Volumetric fluxes ``(fx, fy)``: ``fx[j, i]`` through the vertical face at vertex column ``i``
        in ``+x``, ``fy[j, i]`` through the horizontal face at vertex row ``j`` in ``+y``."""
        if grid.dim == 1:
            # a divergence-free 1-d flux is constant, and the no-flux walls make it zero
            return np.zeros(grid.shape[0] + 1), np.zeros(0)
        (nx, ny) = grid.shape
        if self.variant == "zero":
            return np.zeros((ny, nx + 1)), np.zeros((ny + 1, nx))
        psi = self.stream_values(grid)
        fx = psi[1:, :] - psi[:-1, :]  # integral of d(psi)/dy along the face
        fy = -(psi[:, 1:] - psi[:, :-1])
        return fx, fy


def cell_divergence(grid: Grid, velocity: VelocityField) -> np.ndarray:
    """Net volumetric outflow of every cell."""
    fx, fy = velocity.face_fluxes(grid)
    if grid.dim == 1:
        return fx[1:] - fx[:-1]
    div = (fx[:, 1:] - fx[:, :-1]) + (fy[1:, :] - fy[:-1, :])
    return div.ravel()


def assemble_advection(grid: Grid, velocity: VelocityField) -> SparseOperator:
    """First-order upwind ``A c ~ -v . grad(c)`` from face fluxes of a divergence-free field."""
    fx, fy = velocity.face_fluxes(grid)
    n = grid.n_cells
    if grid.dim == 1 or velocity.variant == "zero":
        return SparseOperator(sp.csr_matrix((n, n)), grid.cell_volume)
    nx, ny = grid.shape
    up, down, flux = [], [], []
    # interior vertical faces between (i-1, j) and (i, j)
    j, i = np.meshgrid(np.arange(ny), np.arange(1, nx), indexing="ij")
    up.append((j * nx + i - 1).ravel()); down.append((j * nx + i).ravel()); flux.append(fx[:, 1:nx].ravel())
    j, i = np.meshgrid(np.arange(1, ny), np.arange(nx), indexing="ij")
    up.append(((j - 1) * nx + i).ravel()); down.append((j * nx + i).ravel()); flux.append(fy[1:ny, :].ravel())
    a, b, F = np.concatenate(up), np.concatenate(down), np.concatenate(flux)
    src = np.where(F > 0, a, b)  # upwind cell
    dst = np.where(F > 0, b, a)
    mag = np.abs(F)
    V = grid.cell_volume
    rows = np.concatenate([src, dst])
    cols = np.concatenate([src, src])
    vals = np.concatenate([-mag / V[src], mag / V[dst]])
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return SparseOperator(mat, V)


def advective_rate(op: SparseOperator) -> float:
    """Largest outflow rate ``max_K sum_out F / V_K``; explicit upwind is positive for ``dt * rate <= 1``."""
    if op.matrix.nnz == 0:
        return 0.0
    return float(np.max(-op.matrix.diagonal(), initial=0.0))


def apply_coupling(grid: Grid, model: SorptionModel, state: State, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Bulk and surface source fields of the sorption exchange.

    The bulk trace on face ``f`` is the value of its adjacent cell.  Each face
    removes ``s * area / volume`` from its cell and adds ``s`` to its surface cell.
    """
    if check and not state.is_nonnegative():
        raise DomainError("sorption coupling needs a nonnegative state")
    trace = state.c[:, grid.face_cell]
    s = model.rates(trace, state.c_surf)
    bulk = np.zeros_like(state.c)
    w = grid.face_area / grid.cell_volume[grid.face_cell]
    np.add.at(bulk.T, grid.face_cell, (-s * w).T)
    return bulk, s


# --------------------------------------------------------------------------
# snapshot files


def write_snapshot(out: TextIO | str | Path, grid: Grid, state: State, names) -> None:
    """Plain-text dump: ``#`` header lines, then ``i x [y] value`` per cell for every field."""
    if not isinstance(out, (str, Path)):
        _write_snapshot(out, grid, state, names)
        return
    with open(out, "w") as fh:
        _write_snapshot(fh, grid, state, names)


def _write_snapshot(fh: TextIO, grid: Grid, state: State, names) -> None:
    fh.write(f"# t = {state.t:.17g}\n")
    fh.write(f"# species = {' '.join(names)}\n")
    fh.write(f"# grid = {grid.dim} {' '.join(map(str, grid.shape))} {' '.join(f'{L:.17g}' for L in grid.extents)}\n")
    for s, name in enumerate(names):
        for kind, coords, values in (("bulk", grid.cell_centers, state.c[s]),
                                     ("surface", grid.face_centers, state.c_surf[s])):
            fh.write(f"# field {name} {kind}\n")
            for k in range(values.size):
                xs = " ".join(f"{x:.17g}" for x in coords[k])
                fh.write(f"{k} {xs} {values[k]:.17g}\n")


def read_snapshot(path) -> dict:
    """Inverse of :func:`write_snapshot`; returns header values and ``{(name, kind): values}``."""
    header, fields, current = {}, {}, None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                if key.strip().startswith("field"):
                    _, name, kind = key.split()
                    current = (name, kind)
                    fields[current] = []
                else:
                    header[key.strip()] = val.strip()
                continue
            fields[current].append(float(line.split()[-1]))
    return {"header": header, "fields": {k: np.array(v) for k, v in fields.items()}}
