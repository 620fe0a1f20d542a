"""Pointwise tensor kernels for 2D isotropic elasticity with scalar damage.

Conventions: symmetric 2x2 tensors, double contraction a:b counts the
off-diagonal twice, and the elastic energy density is the full contraction
sigma:e (no 1/2 factor) because it acts as the damage driving force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SymTensor2:
    """Symmetric 2x2 tensor with components xx, yy, xy."""

    xx: float
    yy: float
    xy: float

    def trace(self) -> float:
        return self.xx + self.yy

    def inner(self, other: "SymTensor2") -> float:
        """Double contraction a:b = a_ij b_ij (xy counted twice)."""
        return self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy

    def norm(self) -> float:
        return math.sqrt(self.inner(self))

    def __add__(self, other: "SymTensor2") -> "SymTensor2":
        return SymTensor2(self.xx + other.xx, self.yy + other.yy, self.xy + other.xy)

    def __sub__(self, other: "SymTensor2") -> "SymTensor2":
        return SymTensor2(self.xx - other.xx, self.yy - other.yy, self.xy - other.xy)

    def scaled(self, c: float) -> "SymTensor2":
        return SymTensor2(c * self.xx, c * self.yy, c * self.xy)

    @staticmethod
    def identity(c: float = 1.0) -> "SymTensor2":
        return SymTensor2(c, c, 0.0)


ZERO_TENSOR = SymTensor2(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic material data for the coupled wave/damage system.

    lam, mu are the Lame parameters; lam_star = lam + mu is the 2D bulk
    modulus used by the volumetric/deviatoric split. young and poisson
    record where lam, mu came from.
    """

    lam: float
    mu: float
    lam_star: float
    rho: float
    gamma_star: float
    epsilon: float
    alpha: float
    young: float
    poisson: float

    def __post_init__(self):
        if self.mu <= 0 or 2.0 * self.lam + 2.0 * self.mu <= 0:
            raise ValueError(
                f"coercivity requires mu > 0 and 2*lam + 2*mu > 0, got lam={self.lam}, mu={self.mu}"
            )
        if abs(self.lam_star - (self.lam + self.mu)) > 1e-14 * max(1.0, abs(self.lam_star)):
            raise ValueError("lam_star must equal lam + mu in 2D")
        for name in ("rho", "gamma_star", "epsilon", "alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def coercivity_constant(self) -> float:
        """c = 2*mu + 2*min(lam, 0): W(e) >= c |e|^2 for all symmetric e."""
        return 2.0 * self.mu + 2.0 * min(self.lam, 0.0)

    @property
    def pwave_speed(self) -> float:
        return math.sqrt((self.lam + 2.0 * self.mu) / self.rho)

    @classmethod
    def from_engineering(
        cls,
        young: float,
        poisson: float,
        rho: float,
        gamma_star: float,
        epsilon: float,
        alpha: float,
        plane_strain: bool = True,
    ) -> "MaterialParams":
        lam, mu = lame_from_engineering(young, poisson, plane_strain=plane_strain)
        return cls(
            lam=lam,
            mu=mu,
            lam_star=lam + mu,
            rho=rho,
            gamma_star=gamma_star,
            epsilon=epsilon,
            alpha=alpha,
            young=young,
            poisson=poisson,
        )


def lame_from_engineering(
    young: float, poisson: float, plane_strain: bool = True
) -> tuple[float, float]:
    """Convert (E, nu) to the Lame parameters (lam, mu).

    Plane strain (default): lam = E*nu / ((1+nu)(1-2nu)). Plane stress
    substitutes the reduced lam = E*nu / (1-nu^2). mu = E / (2(1+nu))
    either way.
    """
    if young <= 0:
        raise ValueError(f"young must be positive, got {young}")
    if not (-1.0 < poisson < 0.5):
        raise ValueError(
            f"poisson must lie in (-1, 1/2); {poisson} makes the conversion singular"
        )
    mu = young / (2.0 * (1.0 + poisson))
    if plane_strain:
        lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    else:
        lam = young * poisson / (1.0 - poisson * poisson)
    return lam, mu


def strain(grad_u) -> SymTensor2:
    """Symmetric part of a 2x2 displacement gradient (rows = components)."""
    return SymTensor2(
        xx=grad_u[0][0],
        yy=grad_u[1][1],
        xy=0.5 * (grad_u[0][1] + grad_u[1][0]),
    )


def stress_iso(e: SymTensor2, m: MaterialParams) -> SymTensor2:
    """Undamaged isotropic stress lam*tr(e)*I + 2*mu*e."""
    lt = m.lam * e.trace()
    return SymTensor2(lt + 2.0 * m.mu * e.xx, lt + 2.0 * m.mu * e.yy, 2.0 * m.mu * e.xy)


def damaged_stress(e: SymTensor2, z: float, m: MaterialParams) -> SymTensor2:
    """(1-z)^2 * stress_iso(e)."""
    if not (0.0 <= z <= 1.0):
        raise ValueError(f"damage must lie in [0, 1], got {z}")
    return stress_iso(e, m).scaled((1.0 - z) ** 2)


def deviatoric_split(e: SymTensor2) -> tuple[float, SymTensor2]:
    """Return (tr(e), deviatoric part e - tr(e)/2 * I)."""
    div = e.trace()
    half = 0.5 * div
    return div, SymTensor2(e.xx - half, e.yy - half, e.xy)


def stress_split(e: SymTensor2, m: MaterialParams) -> tuple[SymTensor2, SymTensor2]:
    """Jordan split of the stress into expansion/shear and compression parts.

    sigma_plus = lam_star*(div)_+ I + 2*mu*e_dev carries expansion and
    shear; sigma_minus = lam_star*(div)_- I carries pure compression.
    sigma_plus - sigma_minus recovers the isotropic stress.
    """
    div, e_dev = deviatoric_split(e)
    div_pos = max(div, 0.0)
    div_neg = max(-div, 0.0)
    sp = SymTensor2(
        m.lam_star * div_pos + 2.0 * m.mu * e_dev.xx,
        m.lam_star * div_pos + 2.0 * m.mu * e_dev.yy,
        2.0 * m.mu * e_dev.xy,
    )
    sm = SymTensor2.identity(m.lam_star * div_neg)
    return sp, sm


def indicator_xi(div: float) -> int:
    """Volumetric expansion indicator: 1 where div >= 0, else 0."""
    return 1 if div >= 0.0 else 0


def energy_density_w(e: SymTensor2, m: MaterialParams) -> float:
    """Full driving energy density W = sigma:e = lam*tr(e)^2 + 2*mu*|e|^2."""
    return m.lam * e.trace() ** 2 + 2.0 * m.mu * e.inner(e)


def energy_density_w_plus(
    e: SymTensor2, xi: int, m: MaterialParams, mu_convention: str = "sigma-plus"
) -> float:
    """Expansion/shear driving energy lam_star*xi*tr(e)^2 + 2*mu*|e_dev|^2.

    The default coefficient 2*mu on |e_dev|^2 makes W_plus = sigma_plus:e
    hold identically (and W_plus = W whenever tr(e) >= 0).
    mu_convention="single-mu" reproduces the variant with a bare mu
    coefficient instead.
    """
    div, e_dev = deviatoric_split(e)
    if mu_convention == "sigma-plus":
        mu_coeff = 2.0 * m.mu
    elif mu_convention == "single-mu":
        mu_coeff = m.mu
    else:
        raise ValueError(f"unknown mu_convention {mu_convention!r}")
    return m.lam_star * xi * div * div + mu_coeff * e_dev.inner(e_dev)


def eta_coefficient(z: float, xi: int, m: MaterialParams) -> float:
    """Volumetric coefficient of the lagged-indicator damaged stress.

    eta = (1-z)^2 (lam_star*xi - mu) + lam_star*(1-xi) in 2D, chosen so
    that eta*tr(e)*I + 2*mu*(1-z)^2*e reproduces the stress that damages
    only the expansion/shear part while leaving compression intact.
    """
    if not (0.0 <= z <= 1.0):
        raise ValueError(f"damage must lie in [0, 1], got {z}")
    g = (1.0 - z) ** 2
    return g * (m.lam_star * xi - m.mu) + m.lam_star * (1 - xi)


def unilateral_stress(e: SymTensor2, xi: int, z: float, m: MaterialParams) -> SymTensor2:
    """Damaged stress with lagged indicator: eta*tr(e)*I + 2*mu*(1-z)^2*e."""
    eta = eta_coefficient(z, xi, m)
    g2mu = 2.0 * m.mu * (1.0 - z) ** 2
    lt = eta * e.trace()
    return SymTensor2(lt + g2mu * e.xx, lt + g2mu * e.yy, g2mu * e.xy)
