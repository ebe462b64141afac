"""One-step maps for the canonical fast-slow systems.

Four families:

  * forward Euler and general explicit Runge-Kutta maps built from a Butcher
    tableau (weights alpha_i, strictly lower-triangular coefficients a_ij);
  * Kahan's bilinear discretization of quadratic vector fields, which is
    explicit and birational (the inverse step is the step with -h), given in
    closed form for the transcritical and fold systems and generically via
    zneW = z + h (Id - (h/2) Df(z))^{-1} f(z);
  * the one-parameter family of symmetric, A-stable, second-order implicit
    schemes

        (xnew - x)/h = a f(x) + (1-2a) f((x+xnew)/2) + a f(xnew),

    applied to the pitchfork (a = 1/2 is the trapezoid rule, a = 0 the
    midpoint rule, a = -1/2 the Kahan method); the pitchfork's cubic term
    makes the update an implicit scalar equation of degree <= 3 in xnew.

Tableau coefficients are stored as exact Fractions and bound to a precision
context at evaluation time, so a tableau can serve contexts of any precision
without accumulating conversion error.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Union

from .precision import PrecisionContext
from .systems import Orbit, PlanarPoint, SingularityKind, SystemParams, vector_field


class PoleError(ArithmeticError):
    """A rational one-step map was evaluated at a pole of its denominator.

    For orbit iteration the offending iterate index is attached as .index.
    """

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class NoRealBranch(ArithmeticError):
    """The implicit update equation has no real solution near the predictor."""


# ---------------------------------------------------------------------------
# Butcher tableaux
# ---------------------------------------------------------------------------


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


@dataclass(frozen=True)
class ButcherTableau:
    """Explicit Runge-Kutta tableau: weights alpha and coefficients a_ij.

    a is stored as one row per stage, row i (0-based) holding the i entries
    a_{i+1,1} .. a_{i+1,i}; strict lower-triangularity is structural.
    Consistency (sum of weights = 1) is required: it is what moves the
    canard at slow speed eps*h per step.
    """

    name: str
    alpha: tuple
    a: tuple

    def __post_init__(self):
        alpha = tuple(_frac(v) for v in self.alpha)
        rows = tuple(tuple(_frac(v) for v in row) for row in self.a)
        if len(rows) != len(alpha):
            raise ValueError("need one coefficient row per stage")
        for i, row in enumerate(rows):
            if len(row) != i:
                raise ValueError(f"stage {i + 1} must have exactly {i} coefficients (explicit scheme)")
        if sum(alpha) != 1:
            raise ValueError(f"tableau {self.name!r}: weights must sum to 1, got {sum(alpha)}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "a", rows)

    @property
    def s(self) -> int:
        return len(self.alpha)

    def row_sums(self) -> tuple:
        """A_i = sum_j a_ij as exact Fractions (A_1 = 0)."""
        return tuple(sum(row, Fraction(0)) for row in self.a)

    def bind(self, ctx: PrecisionContext):
        """Coefficients as scalars of ctx: (alpha, a-rows, row sums)."""
        alpha = tuple(ctx.mpf(v) for v in self.alpha)
        rows = tuple(tuple(ctx.mpf(v) for v in row) for row in self.a)
        sums = tuple(ctx.mpf(v) for v in self.row_sums())
        return alpha, rows, sums


EULER = ButcherTableau("euler", (1,), ((),))
HEUN2 = ButcherTableau("heun2", (Fraction(1, 2), Fraction(1, 2)), ((), (1,)))
KUTTA3 = ButcherTableau(
    "kutta3",
    (Fraction(1, 6), Fraction(2, 3), Fraction(1, 6)),
    ((), (Fraction(1, 2),), (-1, 2)),
)
HEUN3 = ButcherTableau(
    "heun3",
    (Fraction(1, 4), 0, Fraction(3, 4)),
    ((), (Fraction(1, 3),), (0, Fraction(2, 3))),
)
RALSTON3 = ButcherTableau(
    "ralston3",
    (Fraction(2, 9), Fraction(1, 3), Fraction(4, 9)),
    ((), (Fraction(1, 2),), (0, Fraction(3, 4))),
)
SSPRK3 = ButcherTableau(
    "ssprk3",
    (Fraction(1, 6), Fraction(1, 6), Fraction(2, 3)),
    ((), (1,), (Fraction(1, 4), Fraction(1, 4))),
)

SHIPPED_TABLEAUX = {
    t.name: t for t in (EULER, HEUN2, KUTTA3, HEUN3, RALSTON3, SSPRK3)
}

#: The tableaux used for the critical-triplet surface figures: Euler plus the
#: four common third-order schemes.  (heun2 is shipped too, but it has no
#: critical triplet, so its surface is empty.)
SURFACE_TABLEAUX = ("euler", "kutta3", "heun3", "ralston3", "ssprk3")


def load_tableau_file(path, name: Optional[str] = None) -> ButcherTableau:
    """Load a tableau from a plain-text table file.

    Format: first non-comment line is the stage count s, the next line the s
    weights, then s-1 rows of the strictly lower triangle (row for stage i
    has i-1 entries).  Entries are decimal strings or exact rationals like
    "1/6"; '#' starts a comment.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = []
        for raw in fh:
            stripped = raw.split("#", 1)[0].strip()
            if stripped:
                lines.append(stripped)
    if not lines:
        raise ValueError(f"{path}: empty tableau file")
    s = int(lines[0])
    if s < 1:
        raise ValueError(f"{path}: stage count must be >= 1, got {s}")
    if len(lines) != 1 + 1 + (s - 1):
        raise ValueError(f"{path}: expected {1 + s} content lines for s={s}, got {len(lines)}")
    alpha = tuple(Fraction(tok) for tok in lines[1].split())
    if len(alpha) != s:
        raise ValueError(f"{path}: weight row must have {s} entries")
    rows = [()]
    for i in range(2, s + 1):
        toks = lines[i].split()
        if len(toks) != i - 1:
            raise ValueError(f"{path}: row for stage {i} must have {i - 1} entries")
        rows.append(tuple(Fraction(tok) for tok in toks))
    if name is None:
        name = str(path)
    return ButcherTableau(name, alpha, tuple(rows))


# ---------------------------------------------------------------------------
# Explicit steppers
# ---------------------------------------------------------------------------


def euler_step(kind: SingularityKind, params: SystemParams, p: PlanarPoint) -> PlanarPoint:
    """Forward-Euler update p + h * f(p)."""
    v = vector_field(kind, params, p)
    h = params.h
    return PlanarPoint(p.x + h * v.x, p.y + h * v.y)


def rk_step(
    tableau: ButcherTableau,
    kind: SingularityKind,
    params: SystemParams,
    p: PlanarPoint,
) -> PlanarPoint:
    """Explicit Runge-Kutta update for the transcritical or pitchfork system.

    Stage slopes (kappa_i, ell_i) follow the usual explicit recursion; for
    these systems the slow slope is constant, ell_i = eps.  With weights
    summing to 1 this reproduces euler_step at s = 1, and it keeps the
    canard set invariant: on the transcritical diagonal every kappa_i
    collapses to eps, so the step is (x + eps h, x + eps h).
    """
    if kind not in (SingularityKind.TRANSCRITICAL, SingularityKind.PITCHFORK):
        raise ValueError("explicit RK steps are provided for the transcritical and pitchfork systems")
    ctx = params.ctx
    h = params.h
    alpha, rows, _ = tableau.bind(ctx)
    kappas: list = []
    ells: list = []
    for i in range(tableau.s):
        sx = p.x
        sy = p.y
        for j, aij in enumerate(rows[i]):
            sx = sx + h * aij * kappas[j]
            sy = sy + h * aij * ells[j]
        v = vector_field(kind, params, PlanarPoint(sx, sy))
        kappas.append(v.x)
        ells.append(v.y)
    dx = ctx.mpf(0)
    dy = ctx.mpf(0)
    for i in range(tableau.s):
        dx = dx + alpha[i] * kappas[i]
        dy = dy + alpha[i] * ells[i]
    return PlanarPoint(p.x + h * dx, p.y + h * dy)


# ---------------------------------------------------------------------------
# Kahan maps
# ---------------------------------------------------------------------------


def kahan_step_transcritical(params: SystemParams, p: PlanarPoint, reverse: bool = False) -> PlanarPoint:
    """Kahan update of the transcritical system (birational; reverse applies h -> -h).

    xnew = (x + eps h - h y (y + eps h)) / (1 - h x),  ynew = y + eps h.
    Pole at x = 1/h.
    """
    x, y = p.x, p.y
    h, eps = params.h, params.epsilon
    if reverse:
        h = -h
    den = 1 - h * x
    if den == 0:
        raise PoleError("transcritical Kahan step evaluated at its pole x = 1/h")
    yn = y + eps * h
    return PlanarPoint((x + eps * h - h * y * yn) / den, yn)


def kahan_step_fold(params: SystemParams, p: PlanarPoint, reverse: bool = False) -> PlanarPoint:
    """Kahan update of the fold system (birational; reverse=True applies h -> -h).

    xnew = (x - h y - (h^2/4) eps x) / (1 - h x + (h^2/4) eps)
    ynew = (y - h x y - (h^2/2) eps x^2 + h eps x - (h^2/4) eps y) / (same)
    """
    x, y = p.x, p.y
    h, eps = params.h, params.epsilon
    if reverse:
        h = -h
    q = h * h * eps / 4
    den = 1 - h * x + q
    if den == 0:
        raise PoleError("fold Kahan step evaluated at its pole x = (1 + h^2 eps/4)/h")
    xn = (x - h * y - q * x) / den
    yn = (y - h * x * y - 2 * q * x * x + h * eps * x - q * y) / den
    return PlanarPoint(xn, yn)


@dataclass(frozen=True)
class QuadraticField:
    """Planar quadratic vector field f(z) = Q(z) + B z + c.

    q1 and q2 hold the (x^2, xy, y^2) coefficients of the two components'
    quadratic forms; b is the 2x2 linear part, c the constant part.
    """

    q1: tuple
    q2: tuple
    b: tuple
    c: tuple

    @classmethod
    def transcritical(cls, ctx: PrecisionContext, epsilon) -> "QuadraticField":
        eps = ctx.mpf(epsilon)
        zero = ctx.mpf(0)
        one = ctx.mpf(1)
        return cls(
            q1=(one, zero, -one),
            q2=(zero, zero, zero),
            b=((zero, zero), (zero, zero)),
            c=(eps, eps),
        )

    @classmethod
    def fold(cls, ctx: PrecisionContext, epsilon) -> "QuadraticField":
        eps = ctx.mpf(epsilon)
        zero = ctx.mpf(0)
        one = ctx.mpf(1)
        return cls(
            q1=(one, zero, zero),
            q2=(zero, zero, zero),
            b=((zero, -one), (eps, zero)),
            c=(zero, zero),
        )

    def value(self, p: PlanarPoint) -> PlanarPoint:
        x, y = p.x, p.y
        xx, xy, yy = x * x, x * y, y * y
        f1 = self.q1[0] * xx + self.q1[1] * xy + self.q1[2] * yy + self.b[0][0] * x + self.b[0][1] * y + self.c[0]
        f2 = self.q2[0] * xx + self.q2[1] * xy + self.q2[2] * yy + self.b[1][0] * x + self.b[1][1] * y + self.c[1]
        return PlanarPoint(f1, f2)

    def jacobian(self, p: PlanarPoint) -> tuple:
        x, y = p.x, p.y
        j11 = 2 * self.q1[0] * x + self.q1[1] * y + self.b[0][0]
        j12 = self.q1[1] * x + 2 * self.q1[2] * y + self.b[0][1]
        j21 = 2 * self.q2[0] * x + self.q2[1] * y + self.b[1][0]
        j22 = self.q2[1] * x + 2 * self.q2[2] * y + self.b[1][1]
        return ((j11, j12), (j21, j22))


def kahan_step_general(field: QuadraticField, h, p: PlanarPoint) -> PlanarPoint:
    """Kahan update of a general planar quadratic field.

    znew = z + h (Id - (h/2) Df(z))^{-1} f(z); raises PoleError when the
    2x2 matrix is singular.  Coincides with the specialized transcritical
    and fold maps when the field encodes those systems.
    """
    f = field.value(p)
    (j11, j12), (j21, j22) = field.jacobian(p)
    m11 = 1 - h * j11 / 2
    m12 = -h * j12 / 2
    m21 = -h * j21 / 2
    m22 = 1 - h * j22 / 2
    det = m11 * m22 - m12 * m21
    if det == 0:
        raise PoleError("Kahan step: Id - (h/2) Df(z) is singular at this point")
    gx = (m22 * f.x - m12 * f.y) / det
    gy = (m11 * f.y - m21 * f.x) / det
    return PlanarPoint(p.x + h * gx, p.y + h * gy)


# ---------------------------------------------------------------------------
# Symmetric implicit family for the pitchfork
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchInfo:
    """Root-selection record of an implicit step."""

    method: str
    residual: object


@dataclass(frozen=True)
class StepResult:
    point: PlanarPoint
    branch_info: Optional[BranchInfo] = None


_AFAMILY_MAX_NEWTON = 200


def _afamily_residual(aparam, h, x, y, yn, xn):
    """Residual of the implicit pitchfork relation at candidate xnew."""
    mid_x = (x + xn) / 2
    mid_y = (y + yn) / 2
    f_old = x * y - x * x * x
    f_mid = mid_x * mid_y - mid_x * mid_x * mid_x
    f_new = xn * yn - xn * xn * xn
    return x + h * (aparam * f_old + (1 - 2 * aparam) * f_mid + aparam * f_new) - xn


def _afamily_residual_prime(aparam, h, x, y, yn, xn):
    mid_x = (x + xn) / 2
    mid_y = (y + yn) / 2
    d_mid = (mid_y - 3 * mid_x * mid_x) / 2
    d_new = yn - 3 * xn * xn
    return h * ((1 - 2 * aparam) * d_mid + aparam * d_new) - 1


def _afamily_cubic_coeffs(aparam, h, x, y, yn):
    """Coefficients (c0, c1, c2, c3) of the cleared update polynomial in xnew."""
    ysum = y + yn
    b = 1 - 2 * aparam
    c0 = x + h * (aparam * (x * y - x * x * x) + b * x * ysum / 4 - b * x * x * x / 8)
    c1 = -1 + h * (b * ysum / 4 - 3 * b * x * x / 8 + aparam * yn)
    c2 = -3 * h * b * x / 8
    c3 = -h * (1 + 6 * aparam) / 8
    return c0, c1, c2, c3


def a_family_step_pitchfork(
    aparam, params: SystemParams, p: PlanarPoint, reverse: bool = False
) -> StepResult:
    """One step of the symmetric implicit family on the pitchfork system.

    The slow update is explicit, ynew = y + eps h.  The fast update solves
    the degree-<=3 implicit relation for xnew by Newton iteration seeded at
    the forward-Euler predictor; if Newton fails to meet the residual bar
    10^(-digits+10), the cleared polynomial is solved exactly and the real
    root nearest the predictor is selected.  The line {x = 0} is invariant:
    from x = 0 the canard branch xnew = 0 is returned unconditionally (other
    real branches may coexist there).

    The family is symmetric (time-reversible): reverse=True applies the step
    with h -> -h, which undoes the forward step.
    """
    ctx = params.ctx
    aparam = ctx.mpf(aparam)
    h, eps = params.h, params.epsilon
    if reverse:
        h = -h
    x, y = p.x, p.y
    yn = y + eps * h
    if x == 0:
        return StepResult(PlanarPoint(ctx.mpf(0), yn), BranchInfo("canard", ctx.mpf(0)))

    tol = ctx.tol(10)
    xn = x + h * x * (y - x * x)  # Euler predictor
    predictor = xn
    converged = False
    for _ in range(_AFAMILY_MAX_NEWTON):
        r = _afamily_residual(aparam, h, x, y, yn, xn)
        dr = _afamily_residual_prime(aparam, h, x, y, yn, xn)
        if dr == 0:
            break
        step = r / dr
        xn = xn - step
        if abs(step) <= ctx.tol(2) * (1 + abs(xn)):
            converged = True
            break
    if converged:
        r = _afamily_residual(aparam, h, x, y, yn, xn)
        if abs(r) <= tol * (1 + abs(xn)):
            return StepResult(PlanarPoint(xn, yn), BranchInfo("newton", r))

    # Newton failed: solve the cleared polynomial exactly.
    c0, c1, c2, c3 = _afamily_cubic_coeffs(aparam, h, x, y, yn)
    coeffs = [c3, c2, c1, c0]
    while coeffs and coeffs[0] == 0:
        coeffs = coeffs[1:]
    if len(coeffs) < 2:
        raise NoRealBranch("implicit pitchfork update degenerated to a constant relation")
    roots = ctx.polyroots(coeffs, maxsteps=200, extraprec=60)
    imag_bar = ctx.tol(15)
    real_roots = [r.real for r in roots if abs(r.imag) <= imag_bar * (1 + abs(r))]
    if not real_roots:
        raise NoRealBranch("implicit pitchfork update has no real branch at this point")
    xn = min(real_roots, key=lambda r: abs(r - predictor))
    for _ in range(8):  # polish
        r = _afamily_residual(aparam, h, x, y, yn, xn)
        dr = _afamily_residual_prime(aparam, h, x, y, yn, xn)
        if dr == 0:
            break
        xn = xn - r / dr
    r = _afamily_residual(aparam, h, x, y, yn, xn)
    if abs(r) > tol * (1 + abs(xn)):
        raise NoRealBranch("implicit pitchfork update: no branch met the residual tolerance")
    return StepResult(PlanarPoint(xn, yn), BranchInfo("cubic", r))


def kahan_step_pitchfork(params: SystemParams, p: PlanarPoint) -> StepResult:
    """Kahan member (a = -1/2) of the implicit pitchfork family."""
    return a_family_step_pitchfork(params.ctx.mpf(-1) / 2, params, p)


# ---------------------------------------------------------------------------
# Orbit iteration
# ---------------------------------------------------------------------------

Stepper = Callable[[PlanarPoint], Union[PlanarPoint, StepResult]]


def iterate(
    stepper: Stepper,
    p0: PlanarPoint,
    n: int,
    stop_rule: Optional[Callable[[PlanarPoint], bool]] = None,
) -> Orbit:
    """Iterate a one-step map n times from p0.

    Returns an orbit of length n+1, shorter if stop_rule fires (the firing
    point is kept and its index recorded).  A PoleError raised by the
    stepper propagates with the offending iterate index attached.
    """
    if n < 0:
        raise ValueError("iteration count must be >= 0")
    orbit = Orbit(points=[p0])
    if stop_rule is not None and stop_rule(p0):
        orbit.stop_index = 0
        return orbit
    p = p0
    for k in range(1, n + 1):
        try:
            nxt = stepper(p)
        except PoleError as err:
            err.index = k
            raise
        p = nxt.point if isinstance(nxt, StepResult) else nxt
        orbit.points.append(p)
        if stop_rule is not None and stop_rule(p):
            orbit.stop_index = k
            break
    return orbit
