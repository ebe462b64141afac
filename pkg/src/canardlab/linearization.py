"""Linearization along canard trajectories.

For each scheme/singularity pair the one-step map, linearized along the
canard, is upper (or lower) triangular with a unit eigenvalue in the canard
direction; the transversal multiplier J = d(xnew)/dx governs contraction
toward and expansion away from the canard.  Closed forms:

  transcritical, explicit RK:  J(x) = 1 + h Q_s(x), with the stage recursion
      dk_i = 2 (x + h eps A_i) (1 + h sum_{j<i} a_ij dk_j),  Q_s = sum alpha_i dk_i
  transcritical, Kahan:        J(x) = (1 - h^2 x (x + eps h) + eps h^2) / (1 - h x)^2
  pitchfork, explicit RK:      J(y) = 1 + h R_s(y), same recursion with the
      stage factor (y + h eps A_i) in place of 2(x + h eps A_i)
  pitchfork, implicit family:  J(y) = (1 + (h/2) y + h^2 (1-2a) eps/4)
                                      / (1 - (h/2) y - h^2 (1+2a) eps/4)
  fold, Kahan:                 J(x) = (-h^2 x^2 + (1 + h^2 eps/4)^2)
                                      / (1 - h x + h^2 eps/4)^2

The Kahan/implicit factors satisfy the exact pairing J(c+d) J(c-d) = 1 about
the symmetry center c (-eps h/2 on the lines, 0 on the fold parabola), which
is what makes the delayed loss of stability symmetric for those schemes.
Accumulated products over canard positions are kept both directly and in
log-space (sign tracked separately) so ledgers stay finite for very long
runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Union

from .schemes import (
    ButcherTableau,
    PoleError,
    a_family_step_pitchfork,
    euler_step,
    kahan_step_fold,
    kahan_step_transcritical,
    rk_step,
)
from .systems import PlanarPoint, SingularityKind, SystemParams, fold_kahan_parabola_offset

#: Scheme selector for the Kahan map (transcritical and fold closed forms;
#: for the pitchfork it is routed to the implicit family with a = -1/2).
KAHAN = "kahan"


@dataclass(frozen=True)
class AFamily:
    """Selector for the symmetric implicit family member with parameter a."""

    a: object


SchemeSelector = Union[ButcherTableau, str, AFamily]


def q_s(tableau: ButcherTableau, params: SystemParams, x):
    """Weighted stage-derivative sum Q_s(x) along the transcritical canard.

    dk_i/dx = 2 (x + h eps A_i) (1 + h sum_{j<i} a_ij dk_j/dx), A_i = sum_j a_ij;
    Q_s(x) = sum_i alpha_i dk_i/dx.  For s = 1 this is 2x.
    """
    ctx = params.ctx
    h, eps = params.h, params.epsilon
    alpha, rows, sums = tableau.bind(ctx)
    dk: list = []
    for i in range(tableau.s):
        acc = ctx.mpf(0)
        for j, aij in enumerate(rows[i]):
            acc = acc + aij * dk[j]
        dk.append(2 * (x + h * eps * sums[i]) * (1 + h * acc))
    total = ctx.mpf(0)
    for i in range(tableau.s):
        total = total + alpha[i] * dk[i]
    return total


def q_s_pitchfork(tableau: ButcherTableau, params: SystemParams, y):
    """Pitchfork analogue of q_s: stage factor (y + h eps A_i), evaluated on {x=0}."""
    ctx = params.ctx
    h, eps = params.h, params.epsilon
    alpha, rows, sums = tableau.bind(ctx)
    dk: list = []
    for i in range(tableau.s):
        acc = ctx.mpf(0)
        for j, aij in enumerate(rows[i]):
            acc = acc + aij * dk[j]
        dk.append((y + h * eps * sums[i]) * (1 + h * acc))
    total = ctx.mpf(0)
    for i in range(tableau.s):
        total = total + alpha[i] * dk[i]
    return total


def _kahan_transcritical_factor(params: SystemParams, x):
    h, eps = params.h, params.epsilon
    den = 1 - h * x
    if den == 0:
        raise PoleError("transcritical Kahan multiplier has a pole at x = 1/h")
    return (1 - h * h * x * (x + eps * h) + eps * h * h) / (den * den)


def _afamily_pitchfork_factor(aparam, params: SystemParams, y):
    h, eps = params.h, params.epsilon
    num = 1 + h * y / 2 + h * h * (1 - 2 * aparam) * eps / 4
    den = 1 - h * y / 2 - h * h * (1 + 2 * aparam) * eps / 4
    if den == 0:
        raise PoleError("implicit pitchfork multiplier has a pole at this y")
    return num / den


def _kahan_fold_factor(params: SystemParams, x):
    h, eps = params.h, params.epsilon
    q = 1 + h * h * eps / 4
    den = 1 - h * x + h * h * eps / 4
    if den == 0:
        raise PoleError("fold Kahan multiplier has a pole at x = (1 + h^2 eps/4)/h")
    return (q * q - h * h * x * x) / (den * den)


def jacobian_factor(
    kind: SingularityKind,
    scheme: SchemeSelector,
    params: SystemParams,
    s_pos,
):
    """Transversal multiplier d(xnew)/dx on the canard at slow position s_pos.

    s_pos is the canard coordinate: x (= y) on the transcritical diagonal,
    y on the pitchfork line, x on the fold parabola.
    """
    if kind is SingularityKind.TRANSCRITICAL:
        if isinstance(scheme, ButcherTableau):
            return 1 + params.h * q_s(scheme, params, s_pos)
        if scheme == KAHAN:
            return _kahan_transcritical_factor(params, s_pos)
    elif kind is SingularityKind.PITCHFORK:
        if isinstance(scheme, ButcherTableau):
            return 1 + params.h * q_s_pitchfork(scheme, params, s_pos)
        if scheme == KAHAN:
            return _afamily_pitchfork_factor(params.ctx.mpf(-1) / 2, params, s_pos)
        if isinstance(scheme, AFamily):
            return _afamily_pitchfork_factor(params.ctx.mpf(scheme.a), params, s_pos)
    elif kind is SingularityKind.FOLD:
        if scheme == KAHAN:
            return _kahan_fold_factor(params, s_pos)
    raise ValueError(f"no canard multiplier for {kind.value} with scheme {scheme!r}")


def variational_matrix(
    kind: SingularityKind,
    scheme: SchemeSelector,
    params: SystemParams,
    s_pos,
):
    """Full 2x2 variational matrix along the canard at position s_pos.

    The unit eigenvalue carries eigenvector (1, 1) on the transcritical
    diagonal and (0, 1) on the pitchfork line; the transversal multiplier is
    the (1,1) entry.
    """
    ctx = params.ctx
    h, eps = params.h, params.epsilon
    one = ctx.mpf(1)
    zero = ctx.mpf(0)
    j = jacobian_factor(kind, scheme, params, s_pos)
    if kind is SingularityKind.TRANSCRITICAL:
        if isinstance(scheme, ButcherTableau):
            # stage derivatives w.r.t. y are the negatives of those w.r.t. x
            return ((j, one - j), (zero, one))
        if scheme == KAHAN:
            den = 1 - h * s_pos
            jt = (-2 * h * s_pos - eps * h * h) / den
            return ((j, jt), (zero, one))
    elif kind is SingularityKind.PITCHFORK:
        return ((j, zero), (zero, one))
    elif kind is SingularityKind.FOLD and scheme == KAHAN:
        x = s_pos
        y = x * x - fold_kahan_parabola_offset(params)
        q = h * h * eps / 4
        den = 1 - h * x + q
        m12 = -h / den
        m21 = (h * eps - h * h * eps * x + (h * h * h * eps / 4) * (2 * x * x - 2 * y + eps) - q * h * eps * x) / (den * den)
        m22 = (1 - h * x - q) / den
        return ((j, m12), (m21, m22))
    raise ValueError(f"no variational matrix for {kind.value} with scheme {scheme!r}")


def canard_spacing(kind: SingularityKind, params: SystemParams):
    """Per-step slow advance of the canard: eps*h, except eps*h/2 on the fold."""
    step = params.epsilon * params.h
    if kind is SingularityKind.FOLD:
        return step / 2
    return step


def symmetry_center(kind: SingularityKind, params: SystemParams):
    """Center of the pairing identity: -eps*h/2 on the lines, 0 on the fold."""
    if kind is SingularityKind.FOLD:
        return params.ctx.mpf(0)
    return -params.epsilon * params.h / 2


@dataclass
class ContractionLedger:
    """Multipliers and running products along a canard entered at -rho.

    factors[k] is the multiplier at canard position -rho + k*spacing and
    running_product[k] the inclusive product of factors[0..k].  log_abs[k]
    and sign[k] carry the same products in log-space for very long runs.
    """

    rho: object
    spacing: object
    positions: list = field(default_factory=list)
    factors: list = field(default_factory=list)
    running_product: list = field(default_factory=list)
    log_abs: list = field(default_factory=list)
    sign: list = field(default_factory=list)

    def write_csv(self, path, ndigits: int = 30, ctx=None):
        """Export as CSV with columns k, s_pos, factor, log_running_product."""
        if ctx is None:
            ctx = self.positions[0].context
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "s_pos", "factor", "log_running_product"])
            for k in range(len(self.factors)):
                writer.writerow(
                    [
                        k,
                        ctx.nstr(self.positions[k], ndigits),
                        ctx.nstr(self.factors[k], ndigits),
                        ctx.nstr(self.log_abs[k], ndigits),
                    ]
                )


def contraction_product(
    kind: SingularityKind,
    scheme: SchemeSelector,
    params: SystemParams,
    rho,
    n: int,
) -> ContractionLedger:
    """Ledger of multipliers at canard positions -rho + k*spacing, k = 0..n."""
    ctx = params.ctx
    rho = ctx.mpf(rho)
    if not rho > 0:
        raise ValueError("entry offset rho must be > 0")
    spacing = canard_spacing(kind, params)
    ledger = ContractionLedger(rho=rho, spacing=spacing)
    prod = ctx.mpf(1)
    logabs = ctx.mpf(0)
    sgn = 1
    for k in range(n + 1):
        pos = -rho + k * spacing
        try:
            f = jacobian_factor(kind, scheme, params, pos)
        except PoleError as err:
            err.index = k
            raise
        prod = prod * f
        if f == 0:
            sgn = 0
            logabs = ctx.mpf("-inf")
        elif sgn != 0:
            if f < 0:
                sgn = -sgn
            logabs = logabs + ctx.ln(abs(f))
        ledger.positions.append(pos)
        ledger.factors.append(f)
        ledger.running_product.append(prod)
        ledger.log_abs.append(logabs)
        ledger.sign.append(sgn)
    return ledger


def symmetry_defect(
    kind: SingularityKind,
    scheme: SchemeSelector,
    params: SystemParams,
    s_pos,
):
    """|J(c+d) J(c-d) - 1| with c the symmetry center and d = s_pos - c.

    Exactly zero (to context precision) for the Kahan and implicit-family
    multipliers; explicit schemes have no such pairing.
    """
    c = symmetry_center(kind, params)
    d = s_pos - c
    j_plus = jacobian_factor(kind, scheme, params, c + d)
    j_minus = jacobian_factor(kind, scheme, params, c - d)
    return abs(j_plus * j_minus - 1)


def _canard_point(kind: SingularityKind, params: SystemParams, s_pos) -> PlanarPoint:
    if kind is SingularityKind.TRANSCRITICAL:
        return PlanarPoint(s_pos, s_pos)
    if kind is SingularityKind.PITCHFORK:
        return PlanarPoint(params.ctx.mpf(0), s_pos)
    if kind is SingularityKind.FOLD:
        return PlanarPoint(s_pos, s_pos * s_pos - fold_kahan_parabola_offset(params))
    raise ValueError(f"unknown singularity kind: {kind!r}")


def _step_x(kind: SingularityKind, scheme: SchemeSelector, params: SystemParams, p: PlanarPoint):
    if isinstance(scheme, ButcherTableau):
        if scheme.s == 1:
            return euler_step(kind, params, p).x
        return rk_step(scheme, kind, params, p).x
    if kind is SingularityKind.TRANSCRITICAL and scheme == KAHAN:
        return kahan_step_transcritical(params, p).x
    if kind is SingularityKind.FOLD and scheme == KAHAN:
        return kahan_step_fold(params, p).x
    if kind is SingularityKind.PITCHFORK:
        if scheme == KAHAN:
            a = params.ctx.mpf(-1) / 2
        elif isinstance(scheme, AFamily):
            a = params.ctx.mpf(scheme.a)
        else:
            raise ValueError(f"unsupported pitchfork scheme: {scheme!r}")
        return a_family_step_pitchfork(a, params, p).point.x
    raise ValueError(f"unsupported scheme {scheme!r} for {kind.value}")


def finite_difference_factor(
    kind: SingularityKind,
    scheme: SchemeSelector,
    params: SystemParams,
    s_pos,
    delta,
):
    """Centered finite difference of the step map's x-component along x.

    Differentiates the actual one-step map at the canard point (y held
    fixed), providing an independent check of jacobian_factor.  delta should
    be around 10^(-digits/2) so truncation and rounding errors balance.
    """
    ctx = params.ctx
    delta = ctx.mpf(delta)
    p = _canard_point(kind, params, s_pos)
    hi = _step_x(kind, scheme, params, PlanarPoint(p.x + delta, p.y))
    lo = _step_x(kind, scheme, params, PlanarPoint(p.x - delta, p.y))
    return (hi - lo) / (2 * delta)
