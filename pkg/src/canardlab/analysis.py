"""Quantitative analysis of delayed loss of stability.

The transversal multipliers accumulated along a canard form the product
v1(n); the slow passage is "paid back" when |v1| returns to 1.  This module
computes

  * the principal-branch Lambert W function (Halley iteration), used by the
    closed-form lower bounds;
  * lower bounds K* on the exit iteration count for forward Euler on the
    transcritical and pitchfork systems, and the generic explicit-RK bound
    built from the Faulhaber expansion of the accumulated product;
  * the way-in/way-out map: entry index N and exit offset psi with
    |v1(N + psi)| >= 1 (Kahan maps give psi = N exactly on the symmetric
    lattice, and psi in {N+1, N+2} off it);
  * linearized critical triplets (rho*, h*, eps*) solving 1 + h Q_s(-rho) = 0,
    where the one-step multiplier at entry vanishes and the delay blows up;
  * jump classification of simulated orbits near the canard and the
    bisection in h that locates the nonlinear critical step size;
  * parameter sweeps producing critical-step-size surfaces.

Jump classification semantics: an orbit entering beside the canard leaves it
on one side.  RIGHT means it left on the side it entered (the correct,
delay-symmetric outcome); LEFT means the accumulated multipliers flipped the
deviation's sign, so the orbit jumps in the wrong direction (this happens
for step sizes just above the critical value, where the entry multiplier
turns negative); STUCK means it never left within the iteration budget, the
finite-precision artifact of orbits collapsing onto the invariant set.

Classification can run in two representations.  The raw representation
iterates the map in plain (x, y) coordinates and exhibits the sticky-set
artifact whenever the deviation falls below the working precision.  The
deviation representation rewrites the same map exactly in (deviation, slow)
coordinates, where the transversal deviation carries its own exponent; this
is what makes critical-step bisection feasible at a few hundred digits even
where the raw orbit would need thousands.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .linearization import (
    AFamily,
    KAHAN,
    SchemeSelector,
    canard_spacing,
    jacobian_factor,
    q_s,
    symmetry_center,
)
from .precision import PrecisionContext
from .schemes import (
    ButcherTableau,
    PoleError,
    a_family_step_pitchfork,
    kahan_step_fold,
    rk_step,
)
from .systems import (
    NoCanard,
    PlanarPoint,
    SingularityKind,
    SystemParams,
    fold_kahan_parabola_offset,
)


class OutOfDomain(ValueError):
    """Argument outside the supported domain of a special function."""


class PastCriticality(ValueError):
    """Entry parameters lie at or beyond the critical multiplier sign change."""


class NotContracting(ValueError):
    """The entry multiplier exceeds 1: no initial contraction to pay back."""


class Unresolved(RuntimeError):
    """The searched-for index or classification was not found within budget."""

    def __init__(self, max_n, message: Optional[str] = None):
        super().__init__(message or f"not resolved within {max_n} iterations")
        self.max_n = max_n


class NoBracket(RuntimeError):
    """No step-size bracket with differing jump classes was found."""


# ---------------------------------------------------------------------------
# Lambert W (principal branch, nonnegative arguments)
# ---------------------------------------------------------------------------


def lambert_w0(ctx: PrecisionContext, x):
    """Principal-branch Lambert W for x >= 0 by Halley iteration.

    Solves w exp(w) = x to relative residual 10^(-digits+10), starting from
    w = ln(1 + x).  Nonnegative arguments cover every use in this package
    (the bound formulas call W on -c*ln(a) with a in (0, 1]).
    """
    x = ctx.mpf(x)
    if x < 0:
        raise OutOfDomain(f"lambert_w0 requires x >= 0, got {x}")
    if x == 0:
        return ctx.mpf(0)
    w = ctx.ln(1 + x)
    step_bar = ctx.tol(2)
    for _ in range(200):
        ew = ctx.exp(w)
        f = w * ew - x
        denom = ew * (w + 1) - (w + 2) * f / (2 * w + 2)
        if denom == 0:
            break
        dw = f / denom
        w = w - dw
        if abs(dw) <= step_bar * (1 + abs(w)):
            break
    residual = abs(w * ctx.exp(w) - x)
    if residual > ctx.tol(10) * abs(x):
        raise ArithmeticError("lambert_w0 failed to converge to the residual tolerance")
    return w


# ---------------------------------------------------------------------------
# Closed-form exit bounds
# ---------------------------------------------------------------------------


def kstar_transcritical_euler(ctx: PrecisionContext, rho, h, eps):
    """Lower bound K* on the exit count for forward Euler, transcritical case.

    K* = (1/(h^2 eps)) (-1 + 2 h rho + exp(W(-h^2 eps ln(1 - 2 rho h)))),
    valid while the entry multiplier 1 - 2 h rho stays positive.  As rho
    approaches 1/(2h) the bound (and the exit coordinate -rho + K* h eps)
    diverges.
    """
    rho, h, eps = ctx.mpf(rho), ctx.mpf(h), ctx.mpf(eps)
    if not (h > 0 and eps > 0 and rho > 0):
        raise ValueError("need rho > 0, h > 0, eps > 0")
    a = 1 - 2 * h * rho
    if a <= 0:
        raise PastCriticality("1 - 2 h rho <= 0: entry is at or past the critical multiplier")
    w = lambert_w0(ctx, -h * h * eps * ctx.ln(a))
    return (-1 + 2 * h * rho + ctx.exp(w)) / (h * h * eps)


def kstar_pitchfork_euler(ctx: PrecisionContext, rho, h, eps):
    """Lower bound K* for forward Euler, pitchfork case.

    K* = (1/(h^2 eps)) (-1 + h rho + exp(W(-h^2 eps ln(1 - h rho)))),
    valid while 1 - h rho > 0; diverges as rho -> 1/h.
    """
    rho, h, eps = ctx.mpf(rho), ctx.mpf(h), ctx.mpf(eps)
    if not (h > 0 and eps > 0 and rho > 0):
        raise ValueError("need rho > 0, h > 0, eps > 0")
    a = 1 - h * rho
    if a <= 0:
        raise PastCriticality("1 - h rho <= 0: entry is at or past the critical multiplier")
    w = lambert_w0(ctx, -h * h * eps * ctx.ln(a))
    return (-1 + h * rho + ctx.exp(w)) / (h * h * eps)


# -- generic explicit-RK bound ------------------------------------------------

#: Bernoulli numbers with the B1 = +1/2 convention, as used by the Faulhaber
#: power-sum formula sum_{k=1}^{n} k^m = (1/(m+1)) sum_j C(m+1, j) B_j n^{m+1-j}.
_BERNOULLI_PLUS = (
    Fraction(1),
    Fraction(1, 2),
    Fraction(1, 6),
    Fraction(0),
    Fraction(-1, 30),
    Fraction(0),
    Fraction(1, 42),
    Fraction(0),
    Fraction(-1, 30),
)


def _poly_add(p, q):
    n = max(len(p), len(q))
    out = []
    for i in range(n):
        a = p[i] if i < len(p) else 0
        b = q[i] if i < len(q) else 0
        out.append(a + b)
    return out


def _poly_scale(p, c):
    return [c * v for v in p]


def _poly_mul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] = out[i + j] + a * b
    return out


def _poly_eval(p, x):
    acc = 0 * x
    for c in reversed(p):
        acc = acc * x + c
    return acc


def _poly_shift_linear(p, alpha, beta):
    """Coefficients of p(alpha + beta * t) as a polynomial in t (Horner)."""
    res = [0 * alpha]
    for c in reversed(p):
        res = _poly_add(_poly_mul(res, [alpha, beta]), [c])
    return res


def qs_polynomial(tableau: ButcherTableau, params: SystemParams):
    """Coefficients (ascending) of Q_s as a polynomial in the canard position."""
    ctx = params.ctx
    h, eps = params.h, params.epsilon
    alpha, rows, sums = tableau.bind(ctx)
    dk = []
    for i in range(tableau.s):
        acc = [ctx.mpf(0)]
        for j, aij in enumerate(rows[i]):
            acc = _poly_add(acc, _poly_scale(dk[j], aij))
        base = [2 * h * eps * sums[i], ctx.mpf(2)]
        dk.append(_poly_mul(base, _poly_add([ctx.mpf(1)], _poly_scale(acc, h))))
    total = [ctx.mpf(0)]
    for i in range(tableau.s):
        total = _poly_add(total, _poly_scale(dk[i], alpha[i]))
    return total


def _theta_coefficients(tableau: ButcherTableau, params: SystemParams, rho):
    """Coefficients theta_i of 1 + h Q_s(-rho + h eps k) as a polynomial in k."""
    ctx = params.ctx
    qs = qs_polynomial(tableau, params)
    shifted = _poly_shift_linear(qs, -rho, params.h * params.epsilon)
    theta = _poly_scale(shifted, params.h)
    theta[0] = theta[0] + 1
    while len(theta) < tableau.s + 1:
        theta.append(ctx.mpf(0))
    return theta


def rk_theta0(tableau: ButcherTableau, params: SystemParams, rho):
    """Entry multiplier theta_0 = 1 + h Q_s(-rho)."""
    return 1 + params.h * q_s(tableau, params, -rho)


def rk_cbar(tableau: ButcherTableau, params: SystemParams, rho):
    """Scheme constant C-bar of the generic explicit-RK exit bound.

    The accumulated product's log-sum is bounded through the Faulhaber
    expansion sum_i theta_i sum_k k^i = sum_i C_i (K-1)^i; then
    C-bar = |ln(max_i |C_i|)| / ln 2 + 1.  The C_i depend on (h, eps, rho)
    through the theta_i, so C-bar is computed per call.
    """
    ctx = params.ctx
    s = tableau.s
    if s - 1 >= len(_BERNOULLI_PLUS):
        raise ValueError("stage count beyond the hard-coded Bernoulli table")
    theta = _theta_coefficients(tableau, params, ctx.mpf(rho))
    cs = []
    for i in range(1, s + 1):
        acc = ctx.mpf(0)
        for m in range(max(i, 1), s + 1):
            b = _BERNOULLI_PLUS[m - i]
            if b == 0:
                continue
            coeff = Fraction(math.comb(m + 1, m - i), m + 1) * b
            acc = acc + theta[m] * ctx.mpf(coeff)
        cs.append(acc)
    max_c = max(abs(c) for c in cs)
    if max_c == 0:
        raise ValueError("degenerate accumulated-product polynomial: all C_i vanish")
    return abs(ctx.ln(max_c)) / ctx.ln(2) + 1


def kstar_rk(ctx: PrecisionContext, theta0, cbar, s: int):
    """Generic explicit-RK lower bound K* = 1 + exp(W(-ln(theta0) / (cbar (s+1)))).

    Requires the entry multiplier theta0 in (0, 1]: nonpositive means the
    entry is past criticality, above 1 means there is no contraction to pay
    back.  theta0 = 1 gives K* = 2.
    """
    theta0 = ctx.mpf(theta0)
    cbar = ctx.mpf(cbar)
    if theta0 <= 0:
        raise PastCriticality("theta0 <= 0: entry multiplier past its sign change")
    if theta0 > 1:
        raise NotContracting("theta0 > 1: entry multiplier is not contracting")
    if not (cbar > 0 and s >= 1):
        raise ValueError("need cbar > 0 and s >= 1")
    w = lambert_w0(ctx, -ctx.ln(theta0) / (cbar * (s + 1)))
    return 1 + ctx.exp(w)


# ---------------------------------------------------------------------------
# Way-in/way-out map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WayOutResult:
    """Entry index, exit offset, and the accumulated product at exit.

    n_in counts canard steps from the entry -rho to the symmetry center;
    psi is the smallest m >= 0 with |v1(n_in + m)| >= 1, where v1(n) is the
    inclusive product of multipliers at positions -rho + k*spacing, k <= n.
    """

    n_in: int
    psi: int
    product_at_exit: object

    @property
    def exit_index(self) -> int:
        return self.n_in + self.psi


def _entry_index(ctx, rho, center, spacing) -> int:
    t = (rho + center) / spacing
    if t < 0:
        raise ValueError("entry offset rho lies before the symmetry center")
    snap = ctx.tol(10) * (1 + abs(t))
    return int(ctx.floor(t + snap))


def wayout(
    kind: SingularityKind,
    scheme: SchemeSelector,
    params: SystemParams,
    rho,
    max_n: int = 10_000_000,
) -> WayOutResult:
    """Way-in/way-out map of the linearization along the canard.

    Accumulates multipliers at canard positions -rho + k*spacing and returns
    the smallest psi with |v1(n_in + psi)| >= 1 (to the context's residual
    tolerance, so pairs that cancel exactly in real arithmetic are accepted).
    Raises Unresolved if psi is not found within max_n steps past the center.
    """
    ctx = params.ctx
    if not params.epsilon > 0:
        raise ValueError("way-in/way-out analysis requires epsilon > 0")
    rho = ctx.mpf(rho)
    if not rho > 0:
        raise ValueError("entry offset rho must be > 0")
    spacing = canard_spacing(kind, params)
    center = symmetry_center(kind, params)
    n_in = _entry_index(ctx, rho, center, spacing)
    tol = ctx.tol(10)
    logsum = ctx.mpf(0)
    sign = 1
    n = 0
    while n <= n_in + max_n:
        pos = -rho + n * spacing
        try:
            f = jacobian_factor(kind, scheme, params, pos)
        except PoleError as err:
            err.index = n
            raise
        if f == 0:
            sign = 0
            logsum = ctx.mpf("-inf")
        else:
            if f < 0:
                sign = -sign
            logsum = logsum + ctx.ln(abs(f))
        if n >= n_in and logsum >= -tol:
            product = sign * ctx.exp(logsum)
            return WayOutResult(n_in=n_in, psi=n - n_in, product_at_exit=product)
        n += 1
    raise Unresolved(max_n, f"way-out not reached within {max_n} steps past the center")


# ---------------------------------------------------------------------------
# Critical triplets (linearized)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BisectionBracket:
    lo: object
    hi: object


@dataclass(frozen=True)
class CriticalTriplet:
    """(rho*, h*, eps*) at which the linearized entry multiplier vanishes.

    source is "linearized" for roots of 1 + h Q_s(-rho) = 0 and a
    BisectionBracket for values located from the nonlinear system.
    """

    rho_star: object
    h_star: object
    eps_star: object
    source: Union[str, BisectionBracket]


def _refine_root(g, lo, hi, glo, ghi, ctx, rel_tol):
    """Root of g on a sign-changing bracket: bisection then secant polish."""
    if glo == 0:
        return lo
    if ghi == 0:
        return hi
    # bisect to a short bracket first
    for _ in range(24):
        mid = (lo + hi) / 2
        gm = g(mid)
        if gm == 0:
            return mid
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi, ghi = mid, gm
    # secant iteration, safeguarded by the bracket
    a, fa = lo, glo
    b, fb = hi, ghi
    for _ in range(400):
        if abs(b - a) <= rel_tol * max(abs(a), abs(b)):
            break
        if fb == fa:
            c = (a + b) / 2
        else:
            c = b - fb * (b - a) / (fb - fa)
            if not (lo < c < hi):
                c = (lo + hi) / 2
        fc = g(c)
        if fc == 0:
            return c
        if (fc < 0) == (glo < 0):
            lo, glo = c, fc
        else:
            hi, ghi = c, fc
        a, fa = b, fb
        b, fb = c, fc
    return (lo + hi) / 2


def critical_triplet_linearized(
    tableau: ButcherTableau,
    h,
    eps,
    ctx: PrecisionContext,
    rho_max=None,
    scan_points: int = 2000,
) -> Optional[CriticalTriplet]:
    """Smallest rho > 0 with 1 + h Q_s(-rho) = 0, or None if no sign change.

    Scans rho in (0, rho_max] (default 10/h; larger entries fall outside the
    local canonical-form regime) and refines the first sign change to the
    context's precision.  Forward Euler gives rho* = 1/(2h) exactly; some
    schemes (e.g. heun2) have no root and return None.
    """
    params = SystemParams.create(ctx, eps, h)
    if not params.epsilon > 0:
        raise ValueError("critical triplets require epsilon > 0")
    h_s = params.h
    rho_max = ctx.mpf(rho_max) if rho_max is not None else 10 / h_s

    def g(rho):
        return 1 + h_s * q_s(tableau, params, -rho)

    prev_rho = ctx.mpf(0)
    prev_g = ctx.mpf(1)  # g(0) = 1 + h*Q_s(0) with Q_s(0) = O(h eps^2) — treat start as positive
    step = rho_max / scan_points
    for i in range(1, scan_points + 1):
        rho = i * step
        gi = g(rho)
        if gi == 0:
            return CriticalTriplet(rho, h_s, params.epsilon, "linearized")
        if (gi < 0) != (prev_g < 0):
            root = _refine_root(g, prev_rho, rho, prev_g, gi, ctx, ctx.tol(8))
            return CriticalTriplet(root, h_s, params.epsilon, "linearized")
        prev_rho, prev_g = rho, gi
    return None


def linearized_critical_h(
    tableau: ButcherTableau,
    rho,
    eps,
    ctx: PrecisionContext,
    h_max=None,
    scan_points: int = 2000,
):
    """Smallest h > 0 with 1 + h Q_s(-rho; h, eps) = 0, or None.

    This is the critical-triplet equation solved for the step size at fixed
    (rho, eps), the quantity plotted by the critical-surface sweeps.
    """
    rho = ctx.mpf(rho)
    if not rho > 0:
        raise ValueError("rho must be > 0")
    h_max = ctx.mpf(h_max) if h_max is not None else 10 / rho

    def g(h):
        params = SystemParams.create(ctx, eps, h)
        return 1 + h * q_s(tableau, params, -rho)

    prev_h = None
    prev_g = None
    step = h_max / scan_points
    for i in range(1, scan_points + 1):
        h = i * step
        gi = g(h)
        if gi == 0:
            return h
        if prev_g is not None and (gi < 0) != (prev_g < 0):
            return _refine_root(g, prev_h, h, prev_g, gi, ctx, ctx.tol(8))
        prev_h, prev_g = h, gi
    return None


# ---------------------------------------------------------------------------
# Jump classification
# ---------------------------------------------------------------------------


class JumpClass(enum.Enum):
    RIGHT = "right"  # left the canard on the entry side (correct direction)
    LEFT = "left"    # deviation sign flipped: wrong-direction jump
    STUCK = "stuck"  # never detached within the iteration budget


@dataclass(frozen=True)
class JumpResult:
    label: JumpClass
    steps: int
    point: PlanarPoint
    deviation: object


def _default_start(kind: SingularityKind, params: SystemParams, rho, delta) -> PlanarPoint:
    if kind is SingularityKind.TRANSCRITICAL:
        return PlanarPoint(-rho, -rho + delta)
    if kind is SingularityKind.PITCHFORK:
        return PlanarPoint(delta, -rho)
    if kind is SingularityKind.FOLD:
        y = rho * rho - fold_kahan_parabola_offset(params) + delta
        return PlanarPoint(-rho, y)
    raise ValueError(f"unknown singularity kind: {kind!r}")


def _decide(dev, dev0, steps, point) -> JumpResult:
    same_side = (dev > 0) == (dev0 > 0)
    return JumpResult(
        label=JumpClass.RIGHT if same_side else JumpClass.LEFT,
        steps=steps,
        point=point,
        deviation=dev,
    )


def _classify_transcritical_deviation(scheme, params, u0, y0, threshold, max_n):
    """Exact (deviation, slow) iteration of the transcritical one-step maps.

    u = x - y obeys u -> u (1 + h (2y + u)) under forward Euler, the
    analogous stage recursion under explicit RK, and
    u -> u (1 + h y + eps h^2) / (1 - h (y + u)) under the Kahan map; the
    slow coordinate advances by eps*h per step in all cases.
    """
    ctx = params.ctx
    h, eps = params.h, params.epsilon
    heps = h * eps
    u, y = u0, y0
    if scheme == KAHAN:
        num_eps = eps * h * h
        for n in range(1, max_n + 1):
            den = 1 - h * (y + u)
            if den == 0:
                raise PoleError("transcritical Kahan step hit its pole", index=n)
            u = u * (1 + h * y + num_eps) / den
            y = y + heps
            if u == 0:
                return JumpResult(JumpClass.STUCK, n, PlanarPoint(y + u, y), u)
            if abs(u) >= threshold:
                return _decide(u, u0, n, PlanarPoint(y + u, y))
        return JumpResult(JumpClass.STUCK, max_n, PlanarPoint(y + u, y), u)
    if isinstance(scheme, ButcherTableau):
        if scheme.s == 1:  # forward Euler fast path
            for n in range(1, max_n + 1):
                u = u * (1 + h * (2 * y + u))
                y = y + heps
                if u == 0:
                    return JumpResult(JumpClass.STUCK, n, PlanarPoint(y + u, y), u)
                if abs(u) >= threshold:
                    return _decide(u, u0, n, PlanarPoint(y + u, y))
            return JumpResult(JumpClass.STUCK, max_n, PlanarPoint(y + u, y), u)
        alpha, rows, _ = scheme.bind(ctx)
        s = scheme.s
        two_eps = 2 * eps
        for n in range(1, max_n + 1):
            us = []
            ss = []
            ds = []
            base_s = 2 * y + u
            for i in range(s):
                ui = u
                si = base_s
                for j, aij in enumerate(rows[i]):
                    ui = ui + h * aij * ds[j]
                    si = si + h * aij * (ds[j] + two_eps)
                di = ui * si
                us.append(ui)
                ss.append(si)
                ds.append(di)
            du = ctx.mpf(0)
            for i in range(s):
                du = du + alpha[i] * ds[i]
            u = u + h * du
            y = y + heps
            if u == 0:
                return JumpResult(JumpClass.STUCK, n, PlanarPoint(y + u, y), u)
            if abs(u) >= threshold:
                return _decide(u, u0, n, PlanarPoint(y + u, y))
        return JumpResult(JumpClass.STUCK, max_n, PlanarPoint(y + u, y), u)
    raise ValueError(f"unsupported transcritical scheme: {scheme!r}")


def _classify_transcritical_raw(scheme, params, start, threshold, max_n):
    # in raw coordinates the deviation is a difference of stored values; once
    # it falls to a few digits above the working-precision floor, the map's
    # increments can no longer evolve it faithfully and the simulated orbit
    # is glued to the invariant set: that is the sticky-set artifact this
    # engine exposes, reported as STUCK
    h, eps = params.h, params.epsilon
    heps = h * eps
    glue = params.ctx.tol(3)
    x, y = start.x, start.y
    u0 = x - y
    if scheme == KAHAN:
        for n in range(1, max_n + 1):
            den = 1 - h * x
            if den == 0:
                raise PoleError("transcritical Kahan step hit its pole", index=n)
            yn = y + heps
            x = (x + heps - h * y * yn) / den
            y = yn
            u = x - y
            if abs(u) <= glue * max(abs(x), abs(y)):
                return JumpResult(JumpClass.STUCK, n, PlanarPoint(x, y), u)
            if abs(u) >= threshold:
                return _decide(u, u0, n, PlanarPoint(x, y))
        return JumpResult(JumpClass.STUCK, max_n, PlanarPoint(x, y), x - y)
    if isinstance(scheme, ButcherTableau):
        if scheme.s == 1:  # forward Euler fast path (same rounding as euler_step)
            for n in range(1, max_n + 1):
                t = x * x - y * y + eps
                x, y = x + h * t, y + heps
                u = x - y
                if abs(u) <= glue * max(abs(x), abs(y)):
                    return JumpResult(JumpClass.STUCK, n, PlanarPoint(x, y), u)
                if abs(u) >= threshold:
                    return _decide(u, u0, n, PlanarPoint(x, y))
            return JumpResult(JumpClass.STUCK, max_n, PlanarPoint(x, y), x - y)
        p = PlanarPoint(x, y)
        for n in range(1, max_n + 1):
            p = rk_step(scheme, SingularityKind.TRANSCRITICAL, params, p)
            u = p.x - p.y
            if abs(u) <= glue * max(abs(p.x), abs(p.y)):
                return JumpResult(JumpClass.STUCK, n, p, u)
            if abs(u) >= threshold:
                return _decide(u, u0, n, p)
        return JumpResult(JumpClass.STUCK, max_n, p, p.x - p.y)
    raise ValueError(f"unsupported transcritical scheme: {scheme!r}")


def _classify_pitchfork(scheme, params, start, threshold, max_n):
    """Pitchfork classification; x itself is the transversal deviation."""
    ctx = params.ctx
    h, eps = params.h, params.epsilon
    heps = h * eps
    x0 = start.x
    if isinstance(scheme, ButcherTableau) and scheme.s == 1:
        x, y = start.x, start.y
        for n in range(1, max_n + 1):
            x, y = x + h * x * (y - x * x), y + heps
            if x == 0:
                return JumpResult(JumpClass.STUCK, n, PlanarPoint(x, y), x)
            if abs(x) >= threshold:
                return _decide(x, x0, n, PlanarPoint(x, y))
        return JumpResult(JumpClass.STUCK, max_n, PlanarPoint(x, y), x)
    if isinstance(scheme, ButcherTableau):
        stepper = lambda p: rk_step(scheme, SingularityKind.PITCHFORK, params, p)
    elif scheme == KAHAN:
        a = ctx.mpf(-1) / 2
        stepper = lambda p: a_family_step_pitchfork(a, params, p).point
    elif isinstance(scheme, AFamily):
        a = ctx.mpf(scheme.a)
        stepper = lambda p: a_family_step_pitchfork(a, params, p).point
    else:
        raise ValueError(f"unsupported pitchfork scheme: {scheme!r}")
    p = start
    for n in range(1, max_n + 1):
        try:
            p = stepper(p)
        except PoleError as err:
            err.index = n
            raise
        if p.x == 0:
            return JumpResult(JumpClass.STUCK, n, p, p.x)
        if abs(p.x) >= threshold:
            return _decide(p.x, x0, n, p)
    return JumpResult(JumpClass.STUCK, max_n, p, p.x)


def _classify_fold(scheme, params, start, threshold, max_n):
    """Fold classification (Kahan only); deviation is the parabola residual."""
    if scheme != KAHAN:
        raise NoCanard("explicit one-step maps of the fold have no canard to classify against")
    offset = fold_kahan_parabola_offset(params)
    glue = params.ctx.tol(3)
    p = start
    w0 = p.y - (p.x * p.x - offset)
    for n in range(1, max_n + 1):
        try:
            p = kahan_step_fold(params, p)
        except PoleError as err:
            err.index = n
            raise
        w = p.y - (p.x * p.x - offset)
        if abs(w) <= glue * max(abs(p.y), p.x * p.x):
            return JumpResult(JumpClass.STUCK, n, p, w)
        if abs(w) >= threshold:
            return _decide(w, w0, n, p)
    w = p.y - (p.x * p.x - offset)
    return JumpResult(JumpClass.STUCK, max_n, p, w)


def classify_jump(
    kind: SingularityKind,
    scheme: SchemeSelector,
    params: SystemParams,
    rho,
    delta,
    escape=None,
    max_n: Optional[int] = None,
    track_deviation: bool = True,
    start: Optional[PlanarPoint] = None,
) -> JumpResult:
    """Classify the jump of an orbit entering beside the canard at -rho.

    The default start perturbs the canard entry by delta: (-rho, -rho+delta)
    for the transcritical system, (delta, -rho) for the pitchfork, and a
    parabola offset of delta for the fold.  The orbit is iterated until its
    transversal deviation reaches the escape threshold (default rho/2); the
    side it leaves on, relative to the side it entered, gives RIGHT (same
    side, correct direction) or LEFT (flipped, wrong direction).  STUCK is
    returned when the deviation vanishes exactly (finite-precision collapse
    onto the invariant set) or the iteration budget runs out.

    track_deviation=True iterates the map in exact deviation coordinates
    (transcritical), immune to the collapse artifact; =False iterates the
    raw map at working precision and therefore reproduces the artifact.
    """
    ctx = params.ctx
    if not params.epsilon > 0:
        raise ValueError("jump classification requires epsilon > 0")
    rho = ctx.mpf(rho)
    delta = ctx.mpf(delta)
    if not rho > 0:
        raise ValueError("rho must be > 0")
    threshold = ctx.mpf(escape) if escape is not None else rho / 2
    if not threshold > 0:
        raise ValueError("escape threshold must be > 0")
    if max_n is None:
        spacing = canard_spacing(kind, params)
        max_n = int(10 * ctx.floor(2 * rho / spacing) + 10)
    if start is None:
        start = _default_start(kind, params, rho, delta)

    if kind is SingularityKind.TRANSCRITICAL:
        u0 = start.x - start.y
        if u0 == 0:
            raise ValueError("start lies exactly on the canard; nothing to classify")
        if track_deviation:
            return _classify_transcritical_deviation(scheme, params, u0, start.y, threshold, max_n)
        return _classify_transcritical_raw(scheme, params, start, threshold, max_n)
    if kind is SingularityKind.PITCHFORK:
        if start.x == 0:
            raise ValueError("start lies exactly on the canard; nothing to classify")
        return _classify_pitchfork(scheme, params, start, threshold, max_n)
    if kind is SingularityKind.FOLD:
        return _classify_fold(scheme, params, start, threshold, max_n)
    raise ValueError(f"unknown singularity kind: {kind!r}")


# ---------------------------------------------------------------------------
# Nonlinear critical step size by bisection
# ---------------------------------------------------------------------------


def critical_h_bisection(
    kind: SingularityKind,
    tableau: ButcherTableau,
    rho,
    eps,
    delta,
    digits_target: int,
    ctx: PrecisionContext,
    h_bracket=None,
    max_n: Optional[int] = None,
    track_deviation: bool = True,
    scan_budget: int = 160,
) -> CriticalTriplet:
    """Bracket the nonlinear critical step size h* by bisection on h.

    Below h* orbits jump in the correct direction (RIGHT); just above they
    jump in the wrong direction (LEFT).  Starting from the linearized
    critical step (or a caller-provided bracket), the first RIGHT/LEFT flip
    is bracketed and bisected until the bracket is narrower than
    10^(-digits_target) relative.  The returned triplet carries the bracket;
    h_star is its midpoint.
    """
    rho = ctx.mpf(rho)
    delta = ctx.mpf(delta)

    def classify_at(h):
        params = SystemParams.create(ctx, eps, h)
        return classify_jump(
            kind, tableau, params, rho, delta,
            max_n=max_n, track_deviation=track_deviation,
        ).label

    if h_bracket is not None:
        lo, hi = ctx.mpf(h_bracket[0]), ctx.mpf(h_bracket[1])
        c_lo, c_hi = classify_at(lo), classify_at(hi)
        if c_lo is not JumpClass.RIGHT or c_hi is not JumpClass.LEFT:
            raise NoBracket(
                f"provided bracket does not classify RIGHT/LEFT: got {c_lo.value}/{c_hi.value}"
            )
    else:
        seed = linearized_critical_h(tableau, rho, eps, ctx)
        if seed is None:
            raise NoBracket("no linearized critical step size exists to seed the scan")
        ratio = 1 + ctx.mpf(1) / 256
        h0 = seed * (1 - ctx.mpf(1) / 512)
        c0 = classify_at(h0)
        lo = hi = None
        if c0 is JumpClass.RIGHT:
            h_prev, c_prev = h0, c0
            h_cur = h0
            for _ in range(scan_budget):
                h_cur = h_cur * ratio
                c_cur = classify_at(h_cur)
                if c_prev is JumpClass.RIGHT and c_cur is JumpClass.LEFT:
                    lo, hi = h_prev, h_cur
                    break
                h_prev, c_prev = h_cur, c_cur
        else:
            h_prev, c_prev = h0, c0
            h_cur = h0
            for _ in range(scan_budget):
                h_cur = h_cur / ratio
                c_cur = classify_at(h_cur)
                if c_cur is JumpClass.RIGHT and c_prev is JumpClass.LEFT:
                    lo, hi = h_cur, h_prev
                    break
                h_prev, c_prev = h_cur, c_cur
        if lo is None:
            raise NoBracket("no RIGHT/LEFT flip found within the scan budget")

    width_bar = ctx.mpf(10) ** (-digits_target)
    while (hi - lo) > width_bar * hi:
        mid = (lo + hi) / 2
        c_mid = classify_at(mid)
        if c_mid is JumpClass.RIGHT:
            lo = mid
        elif c_mid is JumpClass.LEFT:
            hi = mid
        else:
            raise Unresolved(
                max_n or -1, f"classification at h={ctx.nstr(mid, 12)} came back stuck"
            )
    return CriticalTriplet(rho, (lo + hi) / 2, ctx.mpf(eps), BisectionBracket(lo, hi))


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepCell:
    rho: object
    eps: object
    h_star: object  # None when no critical step exists
    mode: str


def sweep_surface(
    tableau: ButcherTableau,
    rho_grid,
    eps_grid,
    mode: str,
    ctx: PrecisionContext,
    delta="1e-4",
    digits_target: int = 3,
) -> list:
    """Critical-step-size surface over a (rho, eps) grid.

    mode "linearized" solves 1 + h Q_s(-rho) = 0 for h cell by cell; mode
    "bisection" locates the nonlinear value per cell.  Cells without a
    solution carry h_star = None.  For the shipped schemes the surfaces come
    out essentially constant along the eps axis (h* ~ const / rho).
    """
    mode = mode.lower()
    if mode not in ("linearized", "bisection"):
        raise ValueError(f"mode must be 'linearized' or 'bisection', got {mode!r}")
    cells = []
    for rho in rho_grid:
        for eps in eps_grid:
            rho_s = ctx.mpf(rho)
            eps_s = ctx.mpf(eps)
            if mode == "linearized":
                h_star = linearized_critical_h(tableau, rho_s, eps_s, ctx)
            else:
                try:
                    trip = critical_h_bisection(
                        SingularityKind.TRANSCRITICAL, tableau, rho_s, eps_s,
                        delta, digits_target, ctx,
                    )
                    h_star = trip.h_star
                except NoBracket:
                    h_star = None
            cells.append(SweepCell(rho=rho_s, eps=eps_s, h_star=h_star, mode=mode))
    return cells
