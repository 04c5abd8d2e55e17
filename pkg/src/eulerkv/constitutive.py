"""
Stored energy, conservative Cauchy stress and viscous stresses.

Pointwise tensors use *leading* component axes: a deformation gradient
array has shape ``(2, 2, *batch)`` so that a grid field ``(2, 2, Mx, My)``
and a single ``(2, 2)`` matrix go through the same code.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .basis import TensorField, gradient, transform_forward
from .errors import ConfigError

DIM = 2
SMOOTHING = 1e-12  # |E|^{3/2} is evaluated as (|E|^2 + SMOOTHING^2)^{3/4}


@dataclass(frozen=True)
class MaterialParams:
    """Density, viscosity moduli, hyperviscosity and transport regularization."""

    rho: float = 1.0
    D_lambda: float = 0.1
    D_mu: float = 0.1
    nu: float = 1e-3
    p: float = 3.0
    epsilon: float = 0.0

    def __post_init__(self):
        vals = (self.rho, self.D_lambda, self.D_mu, self.nu, self.p, self.epsilon)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"material parameters must be finite, got {vals}")
        if not self.rho > 0:
            raise ConfigError(f"mass density rho must be positive, got {self.rho}")
        if not self.nu > 0:
            raise ConfigError(f"hyperviscosity nu must be positive, got {self.nu}")
        if not self.p > DIM:
            raise ConfigError(f"hyperstress exponent p must exceed the dimension d={DIM}, got {self.p}")
        if not self.D_mu > 0:
            raise ConfigError(
                f"shear viscosity D_mu must be positive (viscosity tensor positive definite), got {self.D_mu}")
        if not self.D_lambda >= 0:
            raise ConfigError(f"bulk viscosity D_lambda must be nonnegative, got {self.D_lambda}")
        if not self.epsilon >= 0:
            raise ConfigError(f"transport regularization epsilon must be nonnegative, got {self.epsilon}")


@dataclass(frozen=True)
class StoredEnergyModel:
    """
    Regularized St. Venant-Kirchhoff energy of the Green-Lagrange strain.

    ``kind="svk"`` forces ``eta = 0``.  ``bulk_penalty`` adds
    ``bulk_penalty * (1 - det F)**2`` (elastic incompressibility penalty).
    """

    kind: str = "regularized-svk"
    K: float = 1.0
    G: float = 1.0
    eta: float = 0.1
    bulk_penalty: float = 0.0

    def __post_init__(self):
        if self.kind not in ("regularized-svk", "svk"):
            raise ConfigError(f"unknown stored-energy kind {self.kind!r}")
        if not self.K > 0 or not self.G > 0:
            raise ConfigError(f"elastic moduli must be positive, got K={self.K}, G={self.G}")
        if not self.eta >= 0:
            raise ConfigError(f"growth regularization eta must be nonnegative, got {self.eta}")
        if not self.bulk_penalty >= 0:
            raise ConfigError(f"bulk penalty must be nonnegative, got {self.bulk_penalty}")
        if self.kind == "svk" and self.eta != 0:
            object.__setattr__(self, "eta", 0.0)

    def warn_growth(self) -> None:
        if self.eta == 0 or self.bulk_penalty > 0:
            warnings.warn(
                "stored energy grows faster than linearly (eta = 0 or bulk penalty active); "
                "the linear-growth bound on phi and phi' does not hold",
                stacklevel=2)


def growth_constant(m: StoredEnergyModel) -> float:
    """
    A constant l with ``phi(F) <= l (1 + |F|)`` and ``|phi'(F)| <= l``.

    Only finite for ``eta > 0`` and no bulk penalty.  Derived from
    ``K tr(E)^2 + G |dev E|^2 <= (2K + G)|E|^2``, ``|F|^2 <= 2 sqrt(2)|E| + 2``
    and ``max_e e / (1 + eta e^{3/2}) = (2/eta)^{2/3} / 3``.
    """
    if m.eta == 0 or m.bulk_penalty > 0:
        return math.inf
    l_phi = (2 * m.K + m.G) / m.eta
    c = 7 * m.K + 3.5 * m.G
    l_dphi = c * (math.sqrt(2) * (2 / m.eta) ** (2 / 3) / 3 + 1.6818 / m.eta)
    return max(l_phi, l_dphi)


def _det(F):
    return F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]


def _cof(F):
    return np.array([[F[1, 1], -F[1, 0]], [-F[0, 1], F[0, 0]]])


def green_lagrange(F) -> np.ndarray:
    """``E = (F^T F - I) / 2``."""
    F = np.asarray(F, dtype=float)
    E = np.einsum("ki...,kj...->ij...", F, F)
    E[0, 0] -= 1.0
    E[1, 1] -= 1.0
    return 0.5 * E


def _energy_parts(E, m: StoredEnergyModel):
    tr = E[0, 0] + E[1, 1]
    nrm2 = E[0, 0] ** 2 + E[1, 1] ** 2 + E[0, 1] ** 2 + E[1, 0] ** 2
    sph2 = tr ** 2 / DIM
    dev2 = nrm2 - sph2
    s = (nrm2 + SMOOTHING ** 2) ** 0.75 if m.eta else 0.0
    return tr, nrm2, sph2, np.maximum(dev2, 0.0), s


def stored_energy(F, m: StoredEnergyModel) -> np.ndarray:
    """
    ``phi(F) = d K |sph E|^2 / (2 + eta |E|^{3/2}) + G |dev E|^2 / (1 + eta |E|^{3/2})``.

    Plus the optional bulk penalty.  Evaluated pointwise over the batch axes.
    """
    F = np.asarray(F, dtype=float)
    E = green_lagrange(F)
    _, _, sph2, dev2, s = _energy_parts(E, m)
    phi = DIM * m.K * sph2 / (2.0 + m.eta * s) + m.G * dev2 / (1.0 + m.eta * s)
    if m.bulk_penalty:
        phi = phi + m.bulk_penalty * (1.0 - _det(F)) ** 2
    return phi


def _energy_strain_derivative(E, m: StoredEnergyModel):
    tr, nrm2, sph2, dev2, s = _energy_parts(E, m)
    eye = np.zeros_like(E)
    eye[0, 0] = eye[1, 1] = 1.0
    dev = E - (tr / DIM) * eye
    a = DIM * m.K * sph2
    b = m.G * dev2
    den_a = 2.0 + m.eta * s
    den_b = 1.0 + m.eta * s
    # d(d K tr^2 / d)/dE = 2 K tr I ; d|dev|^2/dE = 2 dev
    out = (2.0 * m.K * tr / den_a) * eye + (2.0 * m.G / den_b) * dev
    if m.eta:
        ds = 1.5 * (nrm2 + SMOOTHING ** 2) ** -0.25  # ds/dE = ds * E
        coef = -m.eta * ds * (a / den_a ** 2 + b / den_b ** 2)
        out = out + coef * E
    return out


def stored_energy_derivative(F, m: StoredEnergyModel) -> np.ndarray:
    """Analytic ``d phi / d F = F (d phi / d E)`` plus the penalty term."""
    F = np.asarray(F, dtype=float)
    SE = _energy_strain_derivative(green_lagrange(F), m)
    dphi = np.einsum("ik...,kj...->ij...", F, SE)
    if m.bulk_penalty:
        dphi = dphi - 2.0 * m.bulk_penalty * (1.0 - _det(F)) * _cof(F)
    return dphi


def cauchy_stress_conservative(F, m: StoredEnergyModel) -> np.ndarray:
    """``T = phi'(F) F^T + phi(F) I``."""
    F = np.asarray(F, dtype=float)
    dphi = stored_energy_derivative(F, m)
    T = np.einsum("ik...,jk...->ij...", dphi, F)
    phi = stored_energy(F, m)
    T[0, 0] += phi
    T[1, 1] += phi
    return T


def strain_rate(v: TensorField) -> TensorField:
    """Symmetric part of the velocity gradient, ``(grad v + grad v^T) / 2``."""
    g = gradient(v)
    coeff = 0.5 * (g.coeff + np.swapaxes(g.coeff, 0, 1))
    fams = g.families.copy()
    if fams[0, 1] != fams[1, 0]:
        raise ConfigError("velocity families do not give a symmetric strain-rate layout")
    return TensorField(v.basis, fams, coeff=coeff)


def viscous_stress_pointwise(Ev, D_lambda: float, D_mu: float) -> np.ndarray:
    tr = Ev[0, 0] + Ev[1, 1]
    out = 2.0 * D_mu * np.asarray(Ev, dtype=float)
    out[0, 0] = out[0, 0] + D_lambda * tr
    out[1, 1] = out[1, 1] + D_lambda * tr
    return out


def viscous_stress(Ev: TensorField, mp: MaterialParams) -> TensorField:
    """Local viscous stress ``D_lambda tr(E) I + 2 D_mu E`` (exact in span)."""
    Ev = transform_forward(Ev)
    coeff = viscous_stress_pointwise(Ev.coeff, mp.D_lambda, mp.D_mu)
    return TensorField(Ev.basis, Ev.families, coeff=coeff)


def hyperstress_pointwise(gradE, nu: float, p: float) -> np.ndarray:
    """
    ``nu |G|^{p-2} G`` with the Frobenius norm over the leading component axes.

    Zero where ``G = 0`` (continuous for ``p > 2``; the identity for ``p = 2``).
    """
    gradE = np.asarray(gradE, dtype=float)
    nrm2 = np.sum(gradE ** 2, axis=(0, 1, 2))
    if p == 2:
        scale = nu * np.ones_like(nrm2)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(nrm2 > 0, nu * nrm2 ** ((p - 2) / 2), 0.0)
    return scale * gradE


def hyperstress(Ev: TensorField, mp: MaterialParams) -> TensorField:
    """
    Rank-3 hyperstress ``nu |grad E|^{p-2} grad E`` evaluated on the padded grid
    and projected onto the families of ``grad E``.
    """
    gE = gradient(Ev)
    h = hyperstress_pointwise(gE.values(), mp.nu, mp.p)
    return transform_forward(TensorField(Ev.basis, gE.families, grid=h))


def dissipation_density(Ev, gradE, mp: MaterialParams) -> np.ndarray:
    """Pointwise ``D E : E + nu |grad E|^p`` (nonnegative)."""
    tr = Ev[0, 0] + Ev[1, 1]
    e2 = np.sum(np.asarray(Ev) ** 2, axis=(0, 1))
    g2 = np.sum(np.asarray(gradE) ** 2, axis=(0, 1, 2))
    return mp.D_lambda * tr ** 2 + 2.0 * mp.D_mu * e2 + mp.nu * g2 ** (mp.p / 2)
