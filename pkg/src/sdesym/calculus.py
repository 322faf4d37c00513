"""Stochastic calculus on expressions: the second-order operator entering
Ito's formula (here called the Ito Laplacian), drift corrections between the
Ito and Stratonovich forms, and changes of variables.

Conventions for an Ito system dx^i = f^i dt + sigma^i_k dw^k with states
x^j and noises w^k, acting on a scalar u(x, t, w):

    Delta u = (sigma sigma^T)^{jk} u_{x^j x^k}
            + 2 sigma^j_k u_{x^j w^k}
            + sum_k u_{w^k w^k}

(summation over repeated indices).  The Ito differential of u(x, t, w) along
solutions is then

    du = (u_t + f^j u_{x^j} + 1/2 Delta u) dt + (sigma^j_k u_{x^j} + u_{w^k}) dw^k
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .expr import (
    Expr, ZERO, Num, Sym, add, mul, differentiate, substitute, contains,
    free_symbols, is_zero,
)
from .model import SdeSystem, VectorField, ITO, STRATONOVICH

__all__ = [
    "ito_laplacian", "drift_correction", "ito_to_stratonovich",
    "stratonovich_to_ito", "ito_differential", "ito_change_of_variables",
    "change_of_variables", "infinitesimal_map_residuals", "TransformedSde",
    "InterpretationError",
]

_HALF = Num(Fraction(1, 2))


class InterpretationError(ValueError):
    """Operation applied to a system in the wrong interpretation."""


def _require(sys: SdeSystem, interpretation: str, what: str):
    if sys.interpretation != interpretation:
        raise InterpretationError(
            f"{what} expects a {interpretation} system, got {sys.interpretation}")


def ito_laplacian(u: Expr, sys: SdeSystem) -> Expr:
    """The second-order operator of Ito's formula applied to u(x, t, w)."""
    _require(sys, ITO, "ito_laplacian")
    states, noises, sg = sys.states, sys.noises, sys.diffusion
    terms = []
    du = {s: differentiate(u, s) for s in states}
    for j, xj in enumerate(states):
        for k, xk in enumerate(states):
            a = add(*[mul(sg[j][p], sg[k][p]) for p in range(sys.m)])
            if is_zero(a):
                continue
            terms.append(mul(a, differentiate(du[xj], xk)))
    for j, xj in enumerate(states):
        for k, wk in enumerate(noises):
            if is_zero(sg[j][k]):
                continue
            terms.append(mul(2, sg[j][k], differentiate(du[xj], wk)))
    for wk in noises:
        terms.append(differentiate(differentiate(u, wk), wk))
    return add(*terms)


def drift_correction(sys: SdeSystem) -> tuple:
    """rho^i = 1/2 sum_{k,j} d(sigma^i_j)/dx^k * sigma^k_j.

    The Ito drift equals the Stratonovich drift plus this correction when
    both forms share the diffusion matrix.
    """
    states, sg = sys.states, sys.diffusion
    out = []
    for i in range(sys.n):
        parts = []
        for j in range(sys.m):
            for k, xk in enumerate(states):
                parts.append(mul(differentiate(sg[i][j], xk), sg[k][j]))
        out.append(mul(_HALF, add(*parts)) if parts else ZERO)
    return tuple(out)


def ito_to_stratonovich(sys: SdeSystem) -> SdeSystem:
    _require(sys, ITO, "ito_to_stratonovich")
    rho = drift_correction(sys)
    drift = tuple(add(f, mul(-1, r)) for f, r in zip(sys.drift, rho))
    return sys.with_coefficients(drift, sys.diffusion, STRATONOVICH)


def stratonovich_to_ito(sys: SdeSystem) -> SdeSystem:
    _require(sys, STRATONOVICH, "stratonovich_to_ito")
    rho = drift_correction(sys)
    drift = tuple(add(b, r) for b, r in zip(sys.drift, rho))
    return sys.with_coefficients(drift, sys.diffusion, ITO)


def as_ito(sys: SdeSystem) -> SdeSystem:
    return sys if sys.is_ito() else stratonovich_to_ito(sys)


def ito_differential(u: Expr, sys: SdeSystem):
    """(drift part, noise parts) of du along solutions of an Ito system."""
    _require(sys, ITO, "ito_differential")
    drift = add(
        differentiate(u, sys.time),
        *[mul(sys.drift[j], differentiate(u, xj))
          for j, xj in enumerate(sys.states)],
        mul(_HALF, ito_laplacian(u, sys)))
    noise = []
    for k, wk in enumerate(sys.noises):
        noise.append(add(
            *[mul(sys.diffusion[j][k], differentiate(u, xj))
              for j, xj in enumerate(sys.states)],
            differentiate(u, wk)))
    return drift, tuple(noise)


@dataclass(frozen=True)
class TransformedSde:
    """Coefficients of the transformed equation, written in the original
    variables.  When `state_free` holds they are functions of (t, w) alone
    and can be read directly as the coefficients in the new variable."""
    maps: tuple            # new variables as expressions in the old ones
    drift: tuple           # drift[i]
    noise: tuple           # noise[i][k]
    state_free: bool
    noise_free: bool

    @property
    def ito_form(self) -> bool:
        # integrable-by-Ito form: coefficients do not involve the state or
        # the driving noises
        return self.state_free and self.noise_free


def _dependence(exprs, sys: SdeSystem):
    state_free = True
    noise_free = True
    for e in exprs:
        names = free_symbols(e)
        if names & set(sys.states):
            state_free = False
        if names & set(sys.noises):
            noise_free = False
    return state_free, noise_free


def ito_change_of_variables(sys: SdeSystem, phi: Expr) -> TransformedSde:
    """Scalar change of variables x = phi(y, t, w) by Ito's formula."""
    _require(sys, ITO, "ito_change_of_variables")
    if sys.n != 1:
        raise ValueError("scalar change of variables needs a 1-state system")
    drift, noise = ito_differential(phi, sys)
    state_free, noise_free = _dependence((drift,) + noise, sys)
    return TransformedSde((phi,), (drift,), (noise,), state_free, noise_free)


def change_of_variables(sys: SdeSystem, maps) -> TransformedSde:
    """Multi-dimensional change of variables z^i = Z^i(x, t), w-free maps."""
    _require(sys, ITO, "change_of_variables")
    maps = tuple(maps)
    if len(maps) != sys.n:
        raise ValueError(f"need {sys.n} component maps, got {len(maps)}")
    for Z in maps:
        for wk in sys.noises:
            if contains(Z, wk):
                raise ValueError(
                    "component maps of a system change of variables must be "
                    "noise-free; use the scalar form for w-dependent maps")
    drift = []
    noise = []
    for Z in maps:
        d, s = ito_differential(Z, sys)
        drift.append(d)
        noise.append(s)
    state_free, noise_free = _dependence(
        tuple(drift) + tuple(x for row in noise for x in row), sys)
    return TransformedSde(maps, tuple(drift), tuple(noise),
                          state_free, noise_free)


def infinitesimal_map_residuals(sys: SdeSystem, v: VectorField):
    """First order in eps of transforming by x -> x + eps*xi.

    Transforms the system through the near-identity map with a symbolic
    eps, subtracts the coefficients evaluated at the displaced point, and
    extracts the O(eps) part.  Zero exactly when the candidate satisfies
    the determining equations, so this is an independent route to the same
    residuals (it never writes those equations down).
    """
    _require(sys, ITO, "infinitesimal_map_residuals")
    eps = Sym("_eps")
    shifted = {x: add(Sym(x), mul(eps, v.xi[j]))
               for j, x in enumerate(sys.states)}

    drift_res = []
    noise_res = []
    for i, xi_i in enumerate(v.xi):
        Z = add(Sym(sys.states[i]), mul(eps, xi_i))
        new_drift, new_noise = ito_differential(Z, sys)
        target_drift = substitute(sys.drift[i], shifted)
        dres = _eps_linear(add(new_drift, mul(-1, target_drift)), eps)
        drift_res.append(dres)
        row = []
        for k in range(sys.m):
            target = substitute(sys.diffusion[i][k], shifted)
            row.append(_eps_linear(add(new_noise[k], mul(-1, target)), eps))
        noise_res.append(tuple(row))
    return tuple(drift_res), tuple(noise_res)


def _eps_linear(e: Expr, eps: Sym) -> Expr:
    return substitute(differentiate(e, eps.name), {eps.name: ZERO})
