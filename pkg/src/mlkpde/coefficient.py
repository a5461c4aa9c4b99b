"""Periodic random diffusion coefficient on the unit square.

The field is ``Psi(x, y) = 1 + sum_j sin(2 pi y_j) psi_j(x)`` with
``psi_j(x) = (C/sqrt(6)) j^(-theta) sin(j pi x1) sin(j pi x2)``, truncated to
s parametric dimensions.  Positivity of the lower bound
``a_min = 1 - (C/sqrt(6)) zeta(theta)`` is enforced at construction so that
every assembled stiffness matrix is elliptic by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import DomainError, riemann_zeta

_SQRT6 = math.sqrt(6.0)


class CoefficientBoundError(ValueError):
    """The coefficient model violates the uniform positivity bound."""


@dataclass(frozen=True)
class CoefficientModel:
    """Truncation dimension s, scaling C >= 0, decay exponent theta > 1."""

    s: int
    C: float
    theta: float
    psi0: float = 1.0

    def __post_init__(self):
        if self.s < 1:
            raise DomainError(f"s must be >= 1, got {self.s}")
        if self.C < 0.0:
            raise DomainError(f"C must be >= 0, got {self.C}")
        if not self.theta > 1.0:
            raise DomainError(f"theta must be > 1, got {self.theta}")
        if self.psi0 != 1.0:
            raise DomainError("only psi0 = 1 is supported")
        if self.a_min <= 0.0:
            raise CoefficientBoundError(
                f"a_min = 1 - (C/sqrt(6)) zeta(theta) = {self.a_min:.6f} <= 0; "
                f"the coefficient is not uniformly positive"
            )

    @property
    def zeta_theta(self) -> float:
        return riemann_zeta(self.theta)

    @property
    def a_min(self) -> float:
        return 1.0 - self.C / _SQRT6 * self.zeta_theta

    @property
    def a_max(self) -> float:
        return 1.0 + self.C / _SQRT6 * self.zeta_theta

    def psi_amplitudes(self) -> np.ndarray:
        """Amplitudes (C/sqrt(6)) j^(-theta) for j = 1..s."""
        j = np.arange(1, self.s + 1, dtype=float)
        return self.C / _SQRT6 * j ** (-self.theta)


def eval_coeff(model: CoefficientModel, x, y) -> float:
    """Pointwise field value; extra components of y beyond s are ignored."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (2,):
        raise DomainError(f"x must be a 2-d point, got shape {x.shape}")
    if y.size < model.s:
        raise DomainError(f"y must have at least s={model.s} components, got {y.size}")
    amps = model.psi_amplitudes()
    j = np.arange(1, model.s + 1, dtype=float)
    terms = (
        np.sin(2.0 * math.pi * y[: model.s])
        * amps
        * np.sin(j * math.pi * x[0])
        * np.sin(j * math.pi * x[1])
    )
    # theta near 1 decays slowly; sum ascending with compensation.
    return 1.0 + math.fsum(terms)


def sin_table(model: CoefficientModel, xs: np.ndarray) -> np.ndarray:
    """Per-point spatial factors ``psi_j(x)`` as an (n, s) table.

    Fast path for assembly: the field at all points for one y is then
    ``1 + table @ sin(2 pi y[:s])``.
    """
    xs = np.asarray(xs, dtype=float)
    j = np.arange(1, model.s + 1, dtype=float)
    return (
        model.psi_amplitudes()[None, :]
        * np.sin(j[None, :] * math.pi * xs[:, 0, None])
        * np.sin(j[None, :] * math.pi * xs[:, 1, None])
    )


def eval_coeff_many(model: CoefficientModel, xs: np.ndarray, y) -> np.ndarray:
    """Field values at many spatial points for a single parameter vector."""
    y = np.asarray(y, dtype=float)
    if y.size < model.s:
        raise DomainError(f"y must have at least s={model.s} components, got {y.size}")
    return 1.0 + sin_table(model, xs) @ np.sin(2.0 * math.pi * y[: model.s])


def bbar_sequence(model: CoefficientModel) -> np.ndarray:
    """W^{1,inf}-scaled sequence ``bbar_j = C pi j^(1-theta) / (a_min sqrt(6))``."""
    j = np.arange(1, model.s + 1, dtype=float)
    return model.C * math.pi * j ** (1.0 - model.theta) / (model.a_min * _SQRT6)


def b_sequence(model: CoefficientModel) -> np.ndarray:
    """L^inf-scaled sequence ``b_j = C j^(-theta) / (a_min sqrt(6))``."""
    j = np.arange(1, model.s + 1, dtype=float)
    return model.C * j ** (-model.theta) / (model.a_min * _SQRT6)


def truncate(model: CoefficientModel, s_new: int) -> CoefficientModel:
    """Same model with the series cut at s_new terms (y_j = 0 for j > s_new)."""
    if not 1 <= s_new <= model.s:
        raise DomainError(f"s_new must be in [1, {model.s}], got {s_new}")
    return CoefficientModel(s_new, model.C, model.theta)


PRESETS = {
    "easy": (1.5, 3.6),
    "hard": (0.2, 1.2),
}


def preset(name: str, s: int = 64) -> CoefficientModel:
    """The two named problem parameterisations; s defaults to 64."""
    try:
        C, theta = PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return CoefficientModel(s, C, theta)
