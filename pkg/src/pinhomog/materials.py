"""Hyperelastic energy densities, their gradients, and recession behaviour.

Two models are shipped: the p-power of the Frobenius norm (regularized near
zero gradient so second derivatives stay bounded for p < 2) and the
compressible neo-Hookean density for planar deformations.  Densities accept
stacked (n, m, d) arrays of displacement-gradient matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleStateError, InvalidArgumentError


@dataclass(frozen=True)
class EnergyModel:
    kind: str                # "p_norm" | "neo_hookean"
    p: float = 2.0
    mu: float = 1.0
    lam: float = 1.0
    eta: float = 1e-8        # regularization of the norm for p < 2

    def __post_init__(self):
        if self.kind == "p_norm":
            if not 0 < self.p:
                raise InvalidArgumentError(f"growth exponent must be positive, got {self.p}")
        elif self.kind == "neo_hookean":
            if self.mu <= 0 or self.lam < 0:
                raise InvalidArgumentError("need mu > 0 and lambda >= 0")
        else:
            raise InvalidArgumentError(f"unknown energy model {self.kind!r}")
        if self.eta <= 0:
            raise InvalidArgumentError("regularization eta must be positive")


@dataclass(frozen=True)
class RecessionModel:
    """Positively p-homogeneous large-strain limit density."""

    p: float

    def density(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        nrm = np.sqrt(np.sum(xi * xi, axis=(-2, -1)))
        return nrm ** self.p


def p_norm(p: float, eta: float = 1e-8) -> EnergyModel:
    return EnergyModel("p_norm", p=p, eta=eta)


def neo_hookean(mu: float, lam: float) -> EnergyModel:
    return EnergyModel("neo_hookean", p=2.0, mu=mu, lam=lam)


def _as_stack(xi):
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 2
    if single:
        xi = xi[None]
    return xi, single


def density(model: EnergyModel, xi) -> np.ndarray | float:
    """Energy per unit area for (stacks of) gradient matrices.

    p_norm: (|xi|^2 + eta^2)^(p/2) - eta^p, zero at xi = 0.
    neo_hookean (2x2, interpreted as the deformation gradient):
    (mu/2)(|xi|^2 - 2) - mu log J + (lam/2)(log J)^2 with J = det xi > 0;
    zero and stress-free at the identity.
    """
    xi, single = _as_stack(xi)
    if model.kind == "p_norm":
        n2 = np.sum(xi * xi, axis=(-2, -1))
        e = model.eta
        val = (n2 + e * e) ** (0.5 * model.p) - e ** model.p
    else:
        J = _det2(model, xi)
        logJ = np.log(J)
        n2 = np.sum(xi * xi, axis=(-2, -1))
        val = 0.5 * model.mu * (n2 - 2.0) - model.mu * logJ + 0.5 * model.lam * logJ ** 2
    return float(val[0]) if single else val


def density_gradient(model: EnergyModel, xi) -> np.ndarray:
    """Exact gradient of density() with respect to the matrix entries."""
    xi, single = _as_stack(xi)
    if model.kind == "p_norm":
        n2 = np.sum(xi * xi, axis=(-2, -1))
        e = model.eta
        coef = model.p * (n2 + e * e) ** (0.5 * model.p - 1.0)
        g = coef[..., None, None] * xi
    else:
        J = _det2(model, xi)
        logJ = np.log(J)
        # d(log J)/d xi = inv(xi)^T
        invT = np.empty_like(xi)
        invT[..., 0, 0] = xi[..., 1, 1]
        invT[..., 0, 1] = -xi[..., 1, 0]
        invT[..., 1, 0] = -xi[..., 0, 1]
        invT[..., 1, 1] = xi[..., 0, 0]
        invT /= J[..., None, None]
        g = model.mu * (xi - invT) + (model.lam * logJ)[..., None, None] * invT
    return g[0] if single else g


def density_value_and_grad(model: EnergyModel, xi):
    """Joint evaluation used by the assembler (shares intermediates)."""
    xi, single = _as_stack(xi)
    if model.kind == "p_norm":
        n2 = np.sum(xi * xi, axis=(-2, -1))
        e = model.eta
        base = n2 + e * e
        val = base ** (0.5 * model.p) - e ** model.p
        g = (model.p * base ** (0.5 * model.p - 1.0))[..., None, None] * xi
    else:
        val = density(model, xi)
        g = density_gradient(model, xi)
        val = np.atleast_1d(val)
    if single:
        return float(val[0]), g[0]
    return val, g


def _det2(model: EnergyModel, xi: np.ndarray) -> np.ndarray:
    if xi.shape[-2:] != (2, 2):
        raise InvalidArgumentError("neo-Hookean density needs 2x2 deformation gradients")
    J = xi[..., 0, 0] * xi[..., 1, 1] - xi[..., 0, 1] * xi[..., 1, 0]
    if np.any(J <= 0):
        raise InadmissibleStateError("det(grad y) <= 0 at some quadrature point")
    return J


def recession(model: EnergyModel) -> RecessionModel:
    """Large-strain limit of density(t*xi)/t^p; exact power of the norm.

    Only available for the p_norm model; the neo-Hookean case is handled
    through the exponentially-scaled (p = d) cell-problem path instead.
    """
    if model.kind != "p_norm":
        raise NotImplementedError(
            "recession is only defined for the p_norm model; use the "
            "log-scaled cell-problem density for neo-Hookean experiments")
    return RecessionModel(model.p)
