"""Command-line driver for the canard discretization experiments.

Subcommands:

  simulate   iterate one orbit, write n,x,y CSV rows plus a footer comment
             with the parameters and the jump classification
  sweep      critical-step-size surfaces over a (rho, eps) grid, one CSV and
             one gnuplot script per tableau
  wayout     way-in/way-out indices of the linearization along the canard
  bisect     bracket the nonlinear critical step size by bisection
  kstar      closed-form exit-count lower bounds
  verify     run the structural property suites and print a pass/fail table

Every subcommand accepts --digits; decimal-valued flags are parsed exactly
at that precision (no double round-trip through binary floats).  Plain
simulation defaults to 50 digits; sweep and bisect default to 5000 digits,
matching the precision the delicate experiments need.  Exit codes: 0 ok,
2 usage or invalid parameters, 3 pole hit, 4 search/bracket failure.
"""

from __future__ import annotations

import argparse
import csv
import random
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    NoBracket,
    Unresolved,
    critical_h_bisection,
    kstar_pitchfork_euler,
    kstar_rk,
    kstar_transcritical_euler,
    rk_cbar,
    rk_theta0,
    sweep_surface,
    wayout,
)
from .linearization import (
    AFamily,
    KAHAN,
    finite_difference_factor,
    jacobian_factor,
    symmetry_center,
    symmetry_defect,
)
from .precision import ANALYSIS_DIGITS, SIMULATE_DIGITS, InvalidPrecision, make_context
from .schemes import (
    KUTTA3,
    SHIPPED_TABLEAUX,
    SURFACE_TABLEAUX,
    ButcherTableau,
    NoRealBranch,
    PoleError,
    QuadraticField,
    a_family_step_pitchfork,
    euler_step,
    kahan_step_fold,
    kahan_step_general,
    kahan_step_pitchfork,
    kahan_step_transcritical,
    load_tableau_file,
    rk_step,
)
from .systems import (
    NoCanard,
    PlanarPoint,
    SingularityKind,
    SystemParams,
    fold_first_integral,
    fold_kahan_parabola_offset,
    fold_rk_reduced_gap,
    fold_slow_solutions,
)

_KINDS = {k.value: k for k in SingularityKind}


def _add_common(p: argparse.ArgumentParser, digits_default: int):
    p.add_argument("--digits", type=int, default=digits_default,
                   help=f"working decimal digits (default {digits_default})")
    p.add_argument("--out", default="-", help="output CSV path ('-' = stdout)")


def _resolve_tableau(args) -> ButcherTableau:
    if getattr(args, "tableau_file", None):
        return load_tableau_file(args.tableau_file, name=Path(args.tableau_file).stem)
    name = getattr(args, "tableau", None) or "euler"
    try:
        return SHIPPED_TABLEAUX[name]
    except KeyError:
        raise ValueError(
            f"unknown tableau {name!r}; shipped: {', '.join(sorted(SHIPPED_TABLEAUX))}"
        ) from None


def _open_out(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def _scheme_selector(args, ctx):
    name = args.scheme
    if name == "euler":
        return SHIPPED_TABLEAUX["euler"]
    if name == "rk":
        return _resolve_tableau(args)
    if name == "kahan":
        return KAHAN
    if name == "afamily":
        if args.a is None:
            raise ValueError("--a is required for the afamily scheme")
        return AFamily(ctx.mpf(args.a))
    raise ValueError(f"unknown scheme {name!r}")


def _build_stepper(kind, args, ctx, params):
    name = args.scheme
    if name == "euler":
        return lambda p: euler_step(kind, params, p)
    if name == "rk":
        tab = _resolve_tableau(args)
        return lambda p: rk_step(tab, kind, params, p)
    if name == "kahan":
        if kind is SingularityKind.TRANSCRITICAL:
            return lambda p: kahan_step_transcritical(params, p)
        if kind is SingularityKind.FOLD:
            return lambda p: kahan_step_fold(params, p)
        return lambda p: kahan_step_pitchfork(params, p).point
    if name == "afamily":
        if kind is not SingularityKind.PITCHFORK:
            raise ValueError("the afamily scheme is defined for the pitchfork system only")
        if args.a is None:
            raise ValueError("--a is required for the afamily scheme")
        a = ctx.mpf(args.a)
        return lambda p: a_family_step_pitchfork(a, params, p).point
    raise ValueError(f"unknown scheme {name!r}")


def _deviation(kind, params, p):
    if kind is SingularityKind.TRANSCRITICAL:
        return p.x - p.y
    if kind is SingularityKind.PITCHFORK:
        return p.x
    return p.y - (p.x * p.x - fold_kahan_parabola_offset(params))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    ctx = make_context(args.digits)
    params = SystemParams.create(ctx, args.eps, args.h, a=args.a)
    kind = _KINDS[args.kind]
    if args.x0 is not None and args.y0 is not None:
        p = PlanarPoint(ctx.mpf(args.x0), ctx.mpf(args.y0))
    elif args.rho is not None:
        rho = ctx.mpf(args.rho)
        delta = ctx.mpf(args.delta)
        if kind is SingularityKind.TRANSCRITICAL:
            p = PlanarPoint(-rho, -rho + delta)
        elif kind is SingularityKind.PITCHFORK:
            p = PlanarPoint(delta, -rho)
        else:
            p = PlanarPoint(-rho, rho * rho - fold_kahan_parabola_offset(params) + delta)
    else:
        raise ValueError("give either --x0/--y0 or --rho (with optional --delta)")

    stepper = _build_stepper(kind, args, ctx, params)
    scale = max(abs(p.x), abs(p.y), ctx.mpf(1))
    threshold = ctx.mpf(args.escape) if args.escape else scale / 2
    hard_stop = 4 * max(scale, threshold)

    dev0 = _deviation(kind, params, p)
    label = "undecided"
    nd = args.out_digits
    out, close = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(["n", "x", "y"])
        writer.writerow([0, ctx.nstr(p.x, nd), ctx.nstr(p.y, nd)])
        n = 0
        while n < args.n_max:
            try:
                p = stepper(p)
            except PoleError as err:
                err.index = n + 1
                raise
            n += 1
            if n % args.stride == 0 or n == args.n_max:
                writer.writerow([n, ctx.nstr(p.x, nd), ctx.nstr(p.y, nd)])
            dev = _deviation(kind, params, p)
            if label == "undecided":
                if dev == 0:
                    label = "stuck"
                elif dev0 != 0 and abs(dev) >= threshold:
                    same = (dev > 0) == (dev0 > 0)
                    label = "right" if same else "left"
            if abs(p.x) > hard_stop or abs(p.y) > hard_stop:
                if n % args.stride != 0 and n != args.n_max:
                    writer.writerow([n, ctx.nstr(p.x, nd), ctx.nstr(p.y, nd)])
                break
        if label == "undecided":
            label = "stuck"  # never detached within the budget
        out.write(
            f"# kind={args.kind} scheme={args.scheme} h={args.h} eps={args.eps}"
            f" digits={args.digits} n={n} jump={label}\n"
        )
    finally:
        if close:
            out.close()
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _grid(ctx, lo, hi, steps):
    lo = ctx.mpf(lo)
    hi = ctx.mpf(hi)
    if steps < 1:
        raise ValueError("grid needs at least one point")
    if steps == 1:
        return [lo]
    d = (hi - lo) / (steps - 1)
    return [lo + i * d for i in range(steps)]


_PLOT_TEMPLATE = """# gnuplot script: critical-step-size surface for {name}
# run:  gnuplot -p {script}
set title "critical step size h*  ({name})"
set xlabel "rho"
set ylabel "eps"
set zlabel "h*"
set dgrid3d {rsteps},{esteps}
set hidden3d
set datafile separator ","
splot "{csv}" every ::1 using 1:2:3 with lines notitle
"""


def cmd_sweep(args) -> int:
    ctx = make_context(args.digits)
    if args.tableau == "all":
        names = sorted(SHIPPED_TABLEAUX)
    elif args.tableau == "surfaces":
        names = list(SURFACE_TABLEAUX)
    else:
        names = [args.tableau]
    rho_grid = _grid(ctx, args.rho_min, args.rho_max, args.rho_steps)
    eps_grid = _grid(ctx, args.eps_min, args.eps_max, args.eps_steps)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nd = args.out_digits
    for name in names:
        tab = SHIPPED_TABLEAUX[name] if name in SHIPPED_TABLEAUX else load_tableau_file(name)
        cells = sweep_surface(
            tab, rho_grid, eps_grid, args.mode, ctx,
            delta=args.delta, digits_target=args.digits_target,
        )
        csv_path = out_dir / f"surface_{tab.name}.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rho", "eps", "h_star", "mode", "tableau"])
            for cell in cells:
                h_txt = "" if cell.h_star is None else ctx.nstr(cell.h_star, nd)
                writer.writerow([ctx.nstr(cell.rho, nd), ctx.nstr(cell.eps, nd),
                                 h_txt, cell.mode, tab.name])
        script_path = out_dir / f"surface_{tab.name}.gp"
        script_path.write_text(
            _PLOT_TEMPLATE.format(
                name=tab.name, script=script_path.name, csv=csv_path.name,
                rsteps=args.rho_steps, esteps=args.eps_steps,
            ),
            encoding="utf-8",
        )
        print(f"wrote {csv_path} and {script_path}")
    return 0


# ---------------------------------------------------------------------------
# wayout
# ---------------------------------------------------------------------------


def cmd_wayout(args) -> int:
    ctx = make_context(args.digits)
    params = SystemParams.create(ctx, args.eps, args.h, a=args.a)
    kind = _KINDS[args.kind]
    scheme = _scheme_selector(args, ctx)
    result = wayout(kind, scheme, params, ctx.mpf(args.rho), max_n=args.n_max)
    out, close = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(["kind", "scheme", "h", "eps", "rho", "N", "psi"])
        writer.writerow([args.kind, args.scheme, args.h, args.eps, args.rho,
                         result.n_in, result.psi])
    finally:
        if close:
            out.close()
    return 0


# ---------------------------------------------------------------------------
# bisect
# ---------------------------------------------------------------------------


def cmd_bisect(args) -> int:
    ctx = make_context(args.digits)
    kind = _KINDS[args.kind]
    tab = _resolve_tableau(args)
    bracket = None
    if args.h_lo is not None and args.h_hi is not None:
        bracket = (args.h_lo, args.h_hi)
    trip = critical_h_bisection(
        kind, tab, args.rho, args.eps, args.delta, args.digits_target, ctx,
        h_bracket=bracket, max_n=args.n_max,
    )
    nd = max(args.digits_target + 5, args.out_digits)
    out, close = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(["kind", "tableau", "rho", "eps", "h_lo", "h_hi", "digits"])
        writer.writerow([args.kind, tab.name, args.rho, args.eps,
                         ctx.nstr(trip.source.lo, nd), ctx.nstr(trip.source.hi, nd),
                         args.digits_target])
    finally:
        if close:
            out.close()
    return 0


# ---------------------------------------------------------------------------
# kstar
# ---------------------------------------------------------------------------


def cmd_kstar(args) -> int:
    ctx = make_context(args.digits)
    nd = args.out_digits
    rho = ctx.mpf(args.rho)
    variant = args.variant
    theta0_txt = cbar_txt = s_txt = tab_name = ""
    if variant == "euler-transcritical":
        value = kstar_transcritical_euler(ctx, rho, args.h, args.eps)
    elif variant == "euler-pitchfork":
        value = kstar_pitchfork_euler(ctx, rho, args.h, args.eps)
    elif variant == "rk":
        tab = _resolve_tableau(args)
        params = SystemParams.create(ctx, args.eps, args.h)
        theta0 = rk_theta0(tab, params, rho)
        cbar = rk_cbar(tab, params, rho)
        value = kstar_rk(ctx, theta0, cbar, tab.s)
        theta0_txt = ctx.nstr(theta0, nd)
        cbar_txt = ctx.nstr(cbar, nd)
        s_txt = str(tab.s)
        tab_name = tab.name
    else:
        raise ValueError(f"unknown kstar variant {variant!r}")
    out, close = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(["variant", "tableau", "rho", "h", "eps", "theta0", "cbar", "s", "kstar"])
        writer.writerow([variant, tab_name, args.rho, args.h, args.eps,
                         theta0_txt, cbar_txt, s_txt, ctx.nstr(value, nd)])
    finally:
        if close:
            out.close()
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _suite_rk_diagonal(ctx, rng):
    params = SystemParams.create(ctx, "0.01", "0.1")
    tol = ctx.tol(5)
    worst = ctx.mpf(0)
    for tab in SHIPPED_TABLEAUX.values():
        for xs in ("-2", "-1", "-0.3", "0", "0.7", "1.5"):
            x = ctx.mpf(xs)
            p = rk_step(tab, SingularityKind.TRANSCRITICAL, params, PlanarPoint(x, x))
            if p.x != p.y:
                return False, f"diagonal broken for {tab.name} at x={xs}"
            worst = max(worst, abs(p.x - (x + params.epsilon * params.h)))
    return worst <= tol, f"max slow-speed defect {ctx.nstr(worst, 3)}"


def _suite_kahan_symmetry(ctx, rng):
    worst = ctx.mpf(0)
    cases = [
        (SingularityKind.TRANSCRITICAL, KAHAN),
        (SingularityKind.FOLD, KAHAN),
        (SingularityKind.PITCHFORK, AFamily(ctx.mpf("-0.5"))),
        (SingularityKind.PITCHFORK, AFamily(ctx.mpf(0))),
        (SingularityKind.PITCHFORK, AFamily(ctx.mpf("0.5"))),
    ]
    params = SystemParams.create(ctx, "0.01", "0.1")
    for kind, scheme in cases:
        c = symmetry_center(kind, params)
        for i in range(1, 201):
            d = ctx.mpf(i) / 40  # up to 5, inside the pole radius ~10
            worst = max(worst, symmetry_defect(kind, scheme, params, c + d))
    return worst <= ctx.tol(10), f"max pairing defect {ctx.nstr(worst, 3)}"


def _suite_kahan_birational(ctx, rng):
    params = SystemParams.create(ctx, "0.01", "0.1")
    worst = ctx.mpf(0)
    for _ in range(40):
        x = ctx.mpf(rng.uniform(-3, 3))
        y = ctx.mpf(rng.uniform(-3, 3))
        p = PlanarPoint(x, y)
        q = kahan_step_fold(params, p)
        back = kahan_step_fold(params, q, reverse=True)
        worst = max(worst, abs(back.x - x), abs(back.y - y))
        q = kahan_step_transcritical(params, p)
        back = kahan_step_transcritical(params, q, reverse=True)
        worst = max(worst, abs(back.x - x), abs(back.y - y))
    return worst <= ctx.tol(10), f"max round-trip defect {ctx.nstr(worst, 3)}"


def _suite_general_form(ctx, rng):
    params = SystemParams.create(ctx, "0.01", "0.05")
    f_tc = QuadraticField.transcritical(ctx, params.epsilon)
    f_fold = QuadraticField.fold(ctx, params.epsilon)
    worst = ctx.mpf(0)
    for _ in range(40):
        x = ctx.mpf(rng.uniform(-2, 2))
        y = ctx.mpf(rng.uniform(-2, 2))
        p = PlanarPoint(x, y)
        a = kahan_step_transcritical(params, p)
        b = kahan_step_general(f_tc, params.h, p)
        worst = max(worst, abs(a.x - b.x), abs(a.y - b.y))
        a = kahan_step_fold(params, p)
        b = kahan_step_general(f_fold, params.h, p)
        worst = max(worst, abs(a.x - b.x), abs(a.y - b.y))
    return worst <= ctx.tol(10), f"max specialization defect {ctx.nstr(worst, 3)}"


def _suite_afamily(ctx, rng):
    params = SystemParams.create(ctx, "0.01", "0.1")
    worst = ctx.mpf(0)
    for a_txt in ("-0.5", "0", "0.5"):
        a = ctx.mpf(a_txt)
        for _ in range(20):
            x = ctx.mpf(rng.uniform(-1, 1))
            y = ctx.mpf(rng.uniform(-2, 1))
            res = a_family_step_pitchfork(a, params, PlanarPoint(x, y))
            worst = max(worst, abs(res.branch_info.residual))
            back = a_family_step_pitchfork(a, params, res.point, reverse=True).point
            worst = max(worst, abs(back.x - x), abs(back.y - y))
    ok = worst <= ctx.tol(10)
    return ok, f"max residual / round-trip defect {ctx.nstr(worst, 3)}"


def _suite_fold_structure(ctx, rng):
    params = SystemParams.create(ctx, "0.01", "0.1")
    offset = fold_kahan_parabola_offset(params)
    p = PlanarPoint(ctx.mpf(0), -offset)
    worst = ctx.mpf(0)
    for _ in range(500):
        p = kahan_step_fold(params, p)
        worst = max(worst, abs(p.y - (p.x * p.x - offset)))
    if worst > ctx.tol(10):
        return False, f"parabola residual {ctx.nstr(worst, 3)}"
    h = params.h
    gap_ok = (
        fold_slow_solutions(-h / 2, h) is None
        and fold_slow_solutions(ctx.mpf(0), h) is not None
        and fold_slow_solutions(-h, h) is not None
    )
    if not gap_ok:
        return False, "slow-solution gap mismatch"
    h8 = ctx.mpf("0.125")
    if fold_rk_reduced_gap(KUTTA3, -h8 / 4, h8) or not fold_rk_reduced_gap(KUTTA3, -h8, h8):
        return False, "reduced-map gap mismatch"
    for _ in range(20):
        x = ctx.mpf(rng.uniform(-2, 2))
        hval = fold_first_integral(PlanarPoint(x, x * x - params.epsilon / 2), params.epsilon)
        worst = max(worst, abs(hval))
    return worst <= ctx.tol(10), f"max invariant residual {ctx.nstr(worst, 3)}"


def _suite_wayout_lattice(ctx, rng):
    params = SystemParams.create(ctx, "0.01", "0.1")
    eh = params.epsilon * params.h
    for kind, scheme in (
        (SingularityKind.TRANSCRITICAL, KAHAN),
        (SingularityKind.PITCHFORK, KAHAN),
        (SingularityKind.FOLD, KAHAN),
    ):
        for n in range(1, 21):
            if kind is SingularityKind.FOLD:
                rho = eh * n / 2
            else:
                rho = eh * n + eh / 2
            result = wayout(kind, scheme, params, rho, max_n=3 * n + 10)
            if result.psi != n or result.n_in != n:
                return False, f"{kind.value}: psi={result.psi} at lattice N={n}"
    return True, "psi = N on the lattice for N = 1..20"


def _suite_kstar_bounds(ctx, rng):
    checked = 0
    for _ in range(20):
        h = ctx.mpf(rng.uniform(0.05, 0.4))
        eps = ctx.mpf(rng.uniform(0.2, 1.0))
        rho = ctx.mpf(rng.uniform(0.1, 0.9)) / (2 * h)
        kstar = kstar_transcritical_euler(ctx, rho, h, eps)
        prod = ctx.mpf(1)
        k = 0
        while k < 10_000:
            prod = prod * (1 - 2 * h * (rho - k * h * eps))
            k += 1
            if prod >= 1:
                break
        else:
            continue
        if not ctx.mpf(k) >= kstar - ctx.tol(20):
            return False, f"euler-transcritical bound violated: K={k} < K*={ctx.nstr(kstar, 8)}"
        checked += 1
    return checked > 0, f"{checked} random bound checks passed"


def _suite_fd_jacobian(ctx, rng):
    fd_ctx = ctx if ctx.digits >= 50 else make_context(50)
    params = SystemParams.create(fd_ctx, "0.01", "0.1")
    delta = fd_ctx.mpf(10) ** (-(fd_ctx.digits // 2))
    bar = fd_ctx.mpf(10) ** (-(fd_ctx.digits // 2 - 5))
    cases = [
        (SingularityKind.TRANSCRITICAL, SHIPPED_TABLEAUX["euler"]),
        (SingularityKind.TRANSCRITICAL, KUTTA3),
        (SingularityKind.TRANSCRITICAL, KAHAN),
        (SingularityKind.PITCHFORK, SHIPPED_TABLEAUX["euler"]),
        (SingularityKind.PITCHFORK, AFamily(fd_ctx.mpf("0.5"))),
        (SingularityKind.FOLD, KAHAN),
    ]
    worst = fd_ctx.mpf(0)
    for kind, scheme in cases:
        for s_txt in ("-0.8", "-0.2", "0.3", "0.9"):
            s = fd_ctx.mpf(s_txt)
            jac = jacobian_factor(kind, scheme, params, s)
            fd = finite_difference_factor(kind, scheme, params, s, delta)
            worst = max(worst, abs(fd - jac) / abs(jac))
    return worst <= bar, f"max relative FD defect {fd_ctx.nstr(worst, 3)}"


_SUITES = {
    "rk-diagonal": _suite_rk_diagonal,
    "kahan-symmetry": _suite_kahan_symmetry,
    "kahan-birational": _suite_kahan_birational,
    "general-form": _suite_general_form,
    "a-family": _suite_afamily,
    "fold-structure": _suite_fold_structure,
    "wayout-lattice": _suite_wayout_lattice,
    "kstar-bounds": _suite_kstar_bounds,
    "fd-jacobian": _suite_fd_jacobian,
}


def cmd_verify(args) -> int:
    ctx = make_context(args.digits)
    rng = random.Random(args.seed)
    names = args.suite or list(_SUITES)
    failures = 0
    width = max(len(n) for n in names)
    for name in names:
        ok, detail = _SUITES[name](ctx, rng)
        status = "PASS" if ok else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}")
        if not ok:
            failures += 1
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="canardlab",
        description="delayed loss of stability in discretized planar fast-slow systems",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="iterate one orbit and write an n,x,y CSV")
    p.add_argument("--kind", choices=sorted(_KINDS), required=True)
    p.add_argument("--scheme", choices=("euler", "rk", "kahan", "afamily"), default="euler")
    p.add_argument("--tableau", default="kutta3", help="shipped tableau name for --scheme rk")
    p.add_argument("--tableau-file", help="plain-text tableau file")
    p.add_argument("--h", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--a", help="implicit-family parameter (pitchfork)")
    p.add_argument("--x0")
    p.add_argument("--y0")
    p.add_argument("--rho", help="canard entry offset (alternative to --x0/--y0)")
    p.add_argument("--delta", default="1e-4", help="entry perturbation (default 1e-4)")
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--stride", type=int, default=1, help="write every stride-th point")
    p.add_argument("--escape", help="deviation threshold for jump classification")
    p.add_argument("--out-digits", type=int, default=30)
    _add_common(p, SIMULATE_DIGITS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="critical-step-size surfaces over a (rho, eps) grid")
    p.add_argument("--tableau", default="surfaces",
                   help="tableau name, 'surfaces' (euler + 3rd-order set), or 'all'")
    p.add_argument("--rho-min", default="1")
    p.add_argument("--rho-max", default="10")
    p.add_argument("--rho-steps", type=int, default=10)
    p.add_argument("--eps-min", default="0.01")
    p.add_argument("--eps-max", default="1")
    p.add_argument("--eps-steps", type=int, default=5)
    p.add_argument("--mode", choices=("linearized", "bisection"), default="linearized")
    p.add_argument("--delta", default="1e-4")
    p.add_argument("--digits-target", type=int, default=3)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--out-digits", type=int, default=30)
    _add_common(p, ANALYSIS_DIGITS)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("wayout", help="way-in/way-out indices along the canard")
    p.add_argument("--kind", choices=sorted(_KINDS), required=True)
    p.add_argument("--scheme", choices=("euler", "rk", "kahan", "afamily"), default="kahan")
    p.add_argument("--tableau", default="kutta3")
    p.add_argument("--tableau-file")
    p.add_argument("--h", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--rho", required=True)
    p.add_argument("--a", help="implicit-family parameter (pitchfork)")
    p.add_argument("--n-max", type=int, default=1_000_000)
    _add_common(p, SIMULATE_DIGITS)
    p.set_defaults(func=cmd_wayout)

    p = sub.add_parser("bisect", help="bracket the nonlinear critical step size")
    p.add_argument("--kind", choices=sorted(_KINDS), default="transcritical")
    p.add_argument("--tableau", default="euler")
    p.add_argument("--tableau-file")
    p.add_argument("--rho", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--delta", default="1e-4")
    p.add_argument("--digits-target", type=int, default=3)
    p.add_argument("--h-lo", help="optional bracket low end")
    p.add_argument("--h-hi", help="optional bracket high end")
    p.add_argument("--n-max", type=int, help="classification iteration budget")
    p.add_argument("--out-digits", type=int, default=30)
    _add_common(p, ANALYSIS_DIGITS)
    p.set_defaults(func=cmd_bisect)

    p = sub.add_parser("kstar", help="closed-form exit-count lower bounds")
    p.add_argument("--variant", choices=("euler-transcritical", "euler-pitchfork", "rk"),
                   required=True)
    p.add_argument("--rho", required=True)
    p.add_argument("--h", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--tableau", default="kutta3")
    p.add_argument("--tableau-file")
    p.add_argument("--out-digits", type=int, default=30)
    _add_common(p, SIMULATE_DIGITS)
    p.set_defaults(func=cmd_kstar)

    p = sub.add_parser("verify", help="run the structural property suites")
    p.add_argument("--suite", action="append", choices=sorted(_SUITES),
                   help="suite to run (repeatable; default all)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--digits", type=int, default=SIMULATE_DIGITS)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PoleError as err:
        print(f"pole error: {err} (iterate index {err.index})", file=sys.stderr)
        return 3
    except (Unresolved, NoBracket) as err:
        print(f"unresolved: {err}", file=sys.stderr)
        return 4
    except (ValueError, NoCanard, NoRealBranch, InvalidPrecision) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
