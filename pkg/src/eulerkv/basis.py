"""
Sine/cosine Galerkin spaces on a rectangle.

Every scalar mode is a tensor product of one-dimensional functions that are
either cosines (homogeneous Neumann) or sines (homogeneous Dirichlet) along
each axis.  A *family* is the pair of parities, written as a two-letter tag:

    ``"cc"``  cos(i pi x/Lx) cos(j pi y/Ly)   Neumann family (F components)
    ``"sc"``  sin(i pi x/Lx) cos(j pi y/Ly)   x-normal family (v_x)
    ``"cs"``  cos(i pi x/Lx) sin(j pi y/Ly)   y-normal family (v_y)
    ``"ss"``  sin(i pi x/Lx) sin(j pi y/Ly)   produced by mixed derivatives

Modes are scaled to unit L2 norm, so the mass matrix of every family is the
identity.  Coefficients are stored as ``(Nx, Ny)`` arrays indexed by the
wavenumber pair ``(i, j)``; sine rows/columns with index 0 are identically
zero and kept only so that differentiation preserves the index.

Quadrature uses the cell-midpoint grid, which is exact for every cosine
polynomial whose wavenumber stays below ``2 * M`` per axis.  Every integrand
the scheme forms (a product of fields whose parities match, or a field tested
against a mode of its own family) is of that kind, and with
``M >= ceil(3N/2)`` this covers all triple products of in-span fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError

FAMILY_ALIASES = {"a": "sc", "b": "cs", "c": "cc", "d": "ss"}
FAMILIES = ("cc", "sc", "cs", "ss")

EDGES = ("left", "right", "bottom", "top")


def canonical_family(tag: str) -> str:
    tag = FAMILY_ALIASES.get(tag, tag)
    if tag not in FAMILIES:
        raise ValueError(f"unknown mode family {tag!r}")
    return tag


def product_family(f: str, g: str) -> str:
    """Family of the pointwise product of two families (parity algebra)."""
    out = []
    for a, b in zip(f, g):
        out.append("c" if a == b else "s")
    return "".join(out)


def derived_family(fam: str, axis: int) -> str:
    """Family after differentiating once along ``axis`` (0 = x, 1 = y)."""
    flipped = "s" if fam[axis] == "c" else "c"
    return fam[:axis] + flipped + fam[axis + 1:]


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle ``[0, Lx] x [0, Ly]``."""

    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise ConfigError(f"domain lengths must be positive, got Lx={self.Lx}, Ly={self.Ly}")

    def outward_normal(self, edge: str) -> np.ndarray:
        return {
            "left": np.array([-1.0, 0.0]),
            "right": np.array([1.0, 0.0]),
            "bottom": np.array([0.0, -1.0]),
            "top": np.array([0.0, 1.0]),
        }[edge]

    def edge_length(self, edge: str) -> float:
        return self.Ly if edge in ("left", "right") else self.Lx


def _modes_1d(n_modes: int, length: float, pts: np.ndarray, parity: str) -> np.ndarray:
    k = np.arange(n_modes) * math.pi / length
    arg = np.outer(pts, k)
    if parity == "c":
        out = math.sqrt(2.0 / length) * np.cos(arg)
        out[:, 0] = 1.0 / math.sqrt(length)
    else:
        out = math.sqrt(2.0 / length) * np.sin(arg)
        out[:, 0] = 0.0
    return out


class GalerkinBasis:
    """
    Tensor-product sine/cosine basis with its midpoint quadrature grid.

    Parameters
    ----------
    domain : Domain
    nx, ny : int
        Mode counts per axis (wavenumbers ``0 .. n-1``).
    mx, my : int, optional
        Quadrature points per axis.  Default ``ceil(3n/2)``.
    """

    def __init__(self, domain: Domain, nx: int, ny: int | None = None,
                 mx: int | None = None, my: int | None = None):
        ny = nx if ny is None else ny
        if nx < 2 or ny < 2:
            raise ConfigError(f"need at least 2 modes per axis, got ({nx}, {ny})")
        mx = math.ceil(3 * nx / 2) if not mx else mx
        my = math.ceil(3 * ny / 2) if not my else my
        if mx < math.ceil(3 * nx / 2) or my < math.ceil(3 * ny / 2):
            raise ConfigError(
                f"quadrature grid ({mx}, {my}) violates the 3/2 dealiasing rule "
                f"for modes ({nx}, {ny})")
        self.domain = domain
        self.nx, self.ny, self.mx, self.my = int(nx), int(ny), int(mx), int(my)
        Lx, Ly = domain.Lx, domain.Ly
        self.x = (np.arange(mx) + 0.5) * Lx / mx
        self.y = (np.arange(my) + 0.5) * Ly / my
        self.wx = Lx / mx
        self.wy = Ly / my
        self.kx = np.arange(nx) * math.pi / Lx
        self.ky = np.arange(ny) * math.pi / Ly
        self.lam = self.kx[:, None] ** 2 + self.ky[None, :] ** 2
        self._phx = {p: _modes_1d(nx, Lx, self.x, p) for p in "cs"}
        self._phy = {p: _modes_1d(ny, Ly, self.y, p) for p in "cs"}
        self._masks = {}
        for fam in FAMILIES:
            m = np.ones((nx, ny))
            if fam[0] == "s":
                m[0, :] = 0.0
            if fam[1] == "s":
                m[:, 0] = 0.0
            self._masks[fam] = m

    # -- shapes -----------------------------------------------------------
    @property
    def coeff_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.mx, self.my)

    @property
    def grid_spacing(self) -> float:
        return min(self.wx, self.wy)

    def mask(self, fam: str) -> np.ndarray:
        """1 on admissible modes of ``fam``, 0 on the unused sine index 0."""
        return self._masks[fam]

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    # -- transforms -------------------------------------------------------
    def to_grid(self, coeff: np.ndarray, fam: str) -> np.ndarray:
        """Synthesize grid values; leading axes of ``coeff`` are batched."""
        return self._phx[fam[0]] @ coeff @ self._phy[fam[1]].T

    def to_coeff(self, values: np.ndarray, fam: str) -> np.ndarray:
        """Quadrature (= L2) projection of grid values onto the family."""
        if values.shape[-2:] != self.grid_shape:
            raise ConfigError(
                f"grid of shape {values.shape[-2:]} does not match basis grid {self.grid_shape}")
        return (self.wx * self.wy) * (self._phx[fam[0]].T @ values @ self._phy[fam[1]])

    def diff(self, coeff: np.ndarray, fam: str, axis: int) -> tuple[np.ndarray, str]:
        """Exact derivative along ``axis``; returns (coefficients, new family)."""
        k = self.kx[:, None] if axis == 0 else self.ky[None, :]
        sign = -1.0 if fam[axis] == "c" else 1.0
        return sign * k * coeff, derived_family(fam, axis)

    def diff_adjoint(self, coeff: np.ndarray, fam_out: str, axis: int) -> np.ndarray:
        """
        Adjoint of :meth:`diff` in coefficient space.

        ``coeff`` lives in the family produced by differentiation
        (``fam_out``); the result lives in the family that was differentiated.
        No boundary terms appear because every family pair is closed under
        integration by parts.
        """
        k = self.kx[:, None] if axis == 0 else self.ky[None, :]
        # d/dx maps c -> s with -k and s -> c with +k; the adjoint is the transpose.
        sign = -1.0 if fam_out[axis] == "s" else 1.0
        return sign * k * coeff

    def laplacian(self, coeff: np.ndarray) -> np.ndarray:
        return -self.lam * coeff

    def integrate_grid(self, values: np.ndarray) -> np.ndarray:
        """Midpoint quadrature over the last two axes."""
        return (self.wx * self.wy) * values.sum(axis=(-2, -1))

    # -- pointwise evaluation --------------------------------------------
    def eval_points(self, coeff: np.ndarray, fam: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        px = _modes_1d(self.nx, self.domain.Lx, x, fam[0])
        py = _modes_1d(self.ny, self.domain.Ly, y, fam[1])
        # out[..., p] = sum_ij px[p, i] c[..., i, j] py[p, j]
        return np.einsum("pi,...ij,pj->...p", px, coeff, py)

    def edge_nodes(self, edge: str) -> tuple[np.ndarray, np.ndarray, float]:
        """Quadrature nodes (x, y) and weight along one edge."""
        Lx, Ly = self.domain.Lx, self.domain.Ly
        if edge == "left":
            return np.zeros(self.my), self.y.copy(), self.wy
        if edge == "right":
            return np.full(self.my, Lx), self.y.copy(), self.wy
        if edge == "bottom":
            return self.x.copy(), np.zeros(self.mx), self.wx
        if edge == "top":
            return self.x.copy(), np.full(self.mx, Ly), self.wx
        raise ValueError(f"unknown edge {edge!r}")

    def edge_values(self, coeff: np.ndarray, fam: str, edge: str) -> np.ndarray:
        x, y, _ = self.edge_nodes(edge)
        return self.eval_points(coeff, fam, x, y)

    def edge_project(self, values: np.ndarray, fam: str, edge: str) -> np.ndarray:
        """Load vector ``int_edge values * phi_m dS`` for every mode of ``fam``."""
        x, y, w = self.edge_nodes(edge)
        px = _modes_1d(self.nx, self.domain.Lx, x, fam[0])
        py = _modes_1d(self.ny, self.domain.Ly, y, fam[1])
        return w * np.einsum("...p,pi,pj->...ij", values, px, py)


@dataclass(frozen=True, eq=False)
class TensorField:
    """
    Rank-0/1/2/3 field stored as grid values and/or Galerkin coefficients.

    ``families`` is an object array of family tags with the component shape.
    ``grid`` has shape ``comp_shape + (Mx, My)`` and ``coeff`` has shape
    ``comp_shape + (Nx, Ny)``; either may be ``None`` when not current.
    """

    basis: GalerkinBasis
    families: np.ndarray
    grid: np.ndarray | None = None
    coeff: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        fams = np.asarray(self.families, dtype=object)
        fams = np.vectorize(canonical_family, otypes=[object])(fams) if fams.size else fams
        object.__setattr__(self, "families", fams)
        if self.grid is None and self.coeff is None:
            raise ValueError("a TensorField needs grid values or coefficients")
        if self.grid is not None and self.grid.shape != fams.shape + self.basis.grid_shape:
            raise ConfigError(
                f"grid shape {self.grid.shape} inconsistent with components {fams.shape} "
                f"and basis grid {self.basis.grid_shape}")
        if self.coeff is not None and self.coeff.shape != fams.shape + self.basis.coeff_shape:
            raise ConfigError(
                f"coefficient shape {self.coeff.shape} inconsistent with components "
                f"{fams.shape} and modes {self.basis.coeff_shape}")

    @property
    def rank(self) -> int:
        return self.families.ndim

    @property
    def comp_shape(self) -> tuple[int, ...]:
        return self.families.shape

    @classmethod
    def from_coeff(cls, basis: GalerkinBasis, coeff, families) -> "TensorField":
        fams = np.asarray(families, dtype=object)
        return cls(basis, fams, coeff=np.asarray(coeff, dtype=float))

    @classmethod
    def from_grid(cls, basis: GalerkinBasis, grid, families) -> "TensorField":
        fams = np.asarray(families, dtype=object)
        return cls(basis, fams, grid=np.asarray(grid, dtype=float))

    @classmethod
    def scalar(cls, basis: GalerkinBasis, grid=None, coeff=None, family: str = "cc") -> "TensorField":
        fams = np.array(family, dtype=object)
        return cls(basis, fams, grid=None if grid is None else np.asarray(grid, float),
                   coeff=None if coeff is None else np.asarray(coeff, float))

    def values(self) -> np.ndarray:
        """Grid values, synthesizing them from coefficients if needed."""
        if self.grid is not None:
            return self.grid
        if "grid" not in self._cache:
            out = np.empty(self.comp_shape + self.basis.grid_shape)
            for idx in np.ndindex(*self.comp_shape):
                out[idx] = self.basis.to_grid(self.coeff[idx], self.families[idx])
            self._cache["grid"] = out
        return self._cache["grid"]

    def coefficients(self) -> np.ndarray:
        if self.coeff is not None:
            return self.coeff
        return transform_forward(self).coeff


def transform_forward(f: TensorField) -> TensorField:
    """Project grid values onto the mode set; result has current coefficients."""
    if f.grid is None:
        return f
    b = f.basis
    coeff = np.empty(f.comp_shape + b.coeff_shape)
    for idx in np.ndindex(*f.comp_shape):
        coeff[idx] = b.to_coeff(f.grid[idx], f.families[idx])
    return TensorField(b, f.families, grid=f.grid, coeff=coeff)


def transform_inverse(f: TensorField) -> TensorField:
    """Synthesize grid values from coefficients."""
    return TensorField(f.basis, f.families, grid=f.values(), coeff=f.coeff)


def gradient(f: TensorField) -> TensorField:
    """
    Term-by-term derivative of the mode expansion.

    The new (last) component index is the derivative direction, so for a
    vector ``v`` the result is ``(grad v)[i, j] = d v_i / d x_j``.
    """
    f = transform_forward(f)
    b = f.basis
    shape = f.comp_shape + (2,)
    coeff = np.empty(shape + b.coeff_shape)
    fams = np.empty(shape, dtype=object)
    for idx in np.ndindex(*f.comp_shape):
        for axis in range(2):
            c, fam = b.diff(f.coeff[idx], f.families[idx], axis)
            coeff[idx + (axis,)] = c
            fams[idx + (axis,)] = fam
    return TensorField(b, fams, coeff=coeff)


def dealiased_product(f: TensorField, g: TensorField, families=None) -> TensorField:
    """
    Pointwise product on the padded grid, projected back to the mode set.

    One factor may be a scalar (rank 0); it then multiplies every component
    of the other.  The output family of each component follows the parity
    rule unless ``families`` overrides it.
    """
    if f.basis is not g.basis:
        raise ConfigError("fields live on different bases")
    if f.rank and g.rank and f.comp_shape != g.comp_shape:
        raise ConfigError(f"component shapes {f.comp_shape} and {g.comp_shape} differ")
    if f.rank == 0 and g.rank:
        f, g = g, f
    prod = f.values() * (g.values() if g.rank else g.values()[(None,) * f.rank])
    if families is None:
        fams = np.empty(f.comp_shape, dtype=object)
        for idx in np.ndindex(*f.comp_shape):
            gf = g.families[idx] if g.rank else g.families[()]
            fams[idx] = product_family(f.families[idx], gf)
    else:
        fams = np.asarray(families, dtype=object)
    return transform_forward(TensorField(f.basis, fams, grid=prod))


def integrate(f: TensorField):
    """Quadrature of every component over the rectangle."""
    return f.basis.integrate_grid(f.values())


def boundary_integrate(g: Mapping[str, np.ndarray] | None, f: TensorField, tol: float = 1e-12) -> float:
    """
    Sum over the four edges of the 1D quadrature of ``g . f``.

    Parameters
    ----------
    g : mapping edge -> array of shape (2, n_nodes)
        Traction vectors tabulated on :meth:`GalerkinBasis.edge_nodes`.
        Missing edges are treated as zero.  Each vector must be tangential.
    f : TensorField
        Rank-1 field evaluated on the edges through its mode expansion.
    """
    if not g:
        return 0.0
    if f.rank != 1:
        raise ConfigError("boundary_integrate expects a vector field")
    b = f.basis
    f = transform_forward(f)
    total = 0.0
    for edge in EDGES:
        if edge not in g:
            continue
        gv = np.asarray(g[edge], dtype=float)
        n = b.domain.outward_normal(edge)
        normal = n[0] * gv[0] + n[1] * gv[1]
        scale = max(1.0, float(np.max(np.abs(gv))))
        if np.max(np.abs(normal)) > tol * scale:
            raise ConfigError(f"traction on edge {edge!r} has a normal component")
        _, _, w = b.edge_nodes(edge)
        fv = np.stack([b.edge_values(f.coeff[i], f.families[i], edge) for i in range(2)])
        total += w * float(np.sum(gv * fv))
    return total


def vector_families() -> np.ndarray:
    return np.array(["sc", "cs"], dtype=object)


def tensor_families(layout: str = "parity") -> np.ndarray:
    """Families of the four deformation-gradient components."""
    if layout == "parity":
        return np.array([["cc", "ss"], ["ss", "cc"]], dtype=object)
    if layout == "neumann":
        return np.array([["cc", "cc"], ["cc", "cc"]], dtype=object)
    raise ConfigError(f"unknown tensor layout {layout!r}; use 'parity' or 'neumann'")


def random_coefficients(basis: GalerkinBasis, families: Sequence | np.ndarray, rng: np.random.Generator,
                        decay: float = 1.0) -> np.ndarray:
    """Random in-span coefficients with algebraic spectral decay (test helper)."""
    fams = np.asarray(families, dtype=object)
    out = np.empty(fams.shape + basis.coeff_shape)
    i = np.arange(basis.nx)[:, None]
    j = np.arange(basis.ny)[None, :]
    envelope = 1.0 / (1.0 + i ** 2 + j ** 2) ** decay
    for idx in np.ndindex(*fams.shape):
        out[idx] = rng.standard_normal(basis.coeff_shape) * envelope * basis.mask(fams[idx])
    return out
