"""Command-line entry point: verification suites, extraction, recursion, perturbation and solving.

Every suite starts with the background check that K satisfies Przanowski's
equation, so a non-solution fails every suite.  Reports are JSON; the exit code
is 0 when every check passes, 1 when one fails and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import solver as slv
from .expr import parse
from .geometry import Background, curvature_at
from .jets import Point4
from .lax import appendix_a_coefficients, commutator_decomposition
from .manifolds import SpecError, load_manifold
from .operators import gauge_kernel_element, lin_prz_apply, prz_residual
from .twistor import (
    TwistorError,
    builtin_family,
    contour_extract,
    extract_przanowski,
    integrability_residual,
    line_restriction,
    line_series,
    recursion_residual,
    recursion_step,
)


class UsageError(ValueError):
    pass


@dataclass
class Check:
    name: str
    max_residual: float
    tolerance: float
    passed: bool
    note: str = ""


@dataclass
class RunReport:
    command: str
    spec: dict
    seed: int
    checks: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, residual, tol, note=""):
        r = float(np.max(residual)) if np.size(residual) else 0.0
        if not np.isfinite(r):
            r = float("inf")
        self.checks.append(Check(name, r, float(tol), bool(r < tol), note))

    def fail(self, name, tol, exc):
        self.checks.append(Check(name, float("inf"), float(tol), False, f"{type(exc).__name__}: {exc}"))

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "spec": self.spec,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "wall_time": self.wall_time,
        }

    def table(self) -> str:
        lines = [f"{'check':<34} {'max residual':>13} {'tolerance':>10}  result"]
        for c in self.checks:
            lines.append(f"{c.name:<34} {c.max_residual:>13.3e} {c.tolerance:>10.1e}  {'pass' if c.passed else 'FAIL'}")
        lines.append(f"overall: {'pass' if self.passed else 'FAIL'} ({self.wall_time:.2f} s)")
        return "\n".join(lines)


def _guarded(report, name, tol, fn, note=""):
    """Run ``fn`` and record its residual; an exception counts as a failed check."""
    try:
        report.add(name, fn(), tol, note)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        report.fail(name, tol, exc)


def _chunked(at: Point4, jobs: int):
    """Split a 1-D batch of points into ``jobs`` contiguous chunks."""
    n = at.shape[0]
    cuts = np.array_split(np.arange(n), max(1, min(jobs, n)))
    return [at[idx] for idx in cuts if len(idx)]


def _map_points(fn, at: Point4, jobs: int):
    """Evaluate ``fn`` on chunks of ``at`` (threads when jobs > 1) and concatenate along the last axis."""
    parts = _chunked(at, jobs)
    if len(parts) == 1:
        return fn(parts[0])
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        out = list(pool.map(fn, parts))
    return np.concatenate([np.asarray(o) for o in out], axis=-1)


# -- suites ------------------------------------------------------------------------


def _background_check(report, spec, at, tol, jobs):
    _guarded(report, "prz", tol, lambda: _map_points(lambda p: prz_residual(spec, p).relative, at, jobs))


def suite_verify(report, spec, args):
    at = spec.sample(args.samples, args.seed)
    _background_check(report, spec, at, args.tol, args.jobs)
    tol8 = max(args.tol, 1e-8)

    def curv(p):
        c = curvature_at(spec, p)
        scalar = np.abs(c.scalar - 12 * spec.lam) / abs(12 * spec.lam)
        return np.stack([c.einstein_residual, c.weyl_norm, c.phi_norm, scalar])

    try:
        vals = _map_points(curv, at, args.jobs)
        report.add("einstein", vals[0], tol8)
        report.add("weyl", vals[1], tol8)
        report.add("phi", vals[2], tol8)
        report.add("scalar_curvature", vals[3], args.tol)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        for name in ("einstein", "weyl", "phi", "scalar_curvature"):
            report.fail(name, tol8, exc)
    _guarded(report, "lax", tol8, lambda: _map_points(lambda p: _lax_residual(spec, p), at, args.jobs))


def _lax_scale(spec, at):
    """Size of the Lax-field coefficients (at least 1), used to normalise commutator residuals."""
    bg = Background.of(spec, at, 2)
    coeffs = np.stack([bg.Kwwb.value, bg.Kwzb.value, bg.Kzwb.value, bg.Q.value])
    return np.maximum(1.0, np.max(np.abs(coeffs), axis=0) / np.abs(bg.tilde_k.value))


def _lax_residual(spec, at):
    """Largest commutator coefficient relative to the Lax-field scale."""
    decomp, leftover = commutator_decomposition(spec, at)
    scale = _lax_scale(spec, at)
    worst = np.maximum(decomp.scale(), np.max(np.abs(leftover), axis=0))
    return worst / scale


def _appendix_residual(spec, at):
    """Closed-form A, B, C1, C2, C3 against the direct commutator.

    Relative to the larger of the coefficients and the Lax-field scale, since on
    solutions every coefficient vanishes.
    """
    direct, _ = commutator_decomposition(spec, at)
    closed = appendix_a_coefficients(spec, at)
    d = np.abs(direct.as_array() - closed.as_array())
    d = d.reshape((-1,) + d.shape[2:]).max(axis=0)
    return d / np.maximum(direct.scale(), _lax_scale(spec, at))


def suite_lax(report, spec, args):
    at = spec.sample(args.samples, args.seed)
    _background_check(report, spec, at, args.tol, args.jobs)
    tol8 = max(args.tol, 1e-8)
    _guarded(report, "lax", tol8, lambda: _map_points(lambda p: _lax_residual(spec, p), at, args.jobs))
    pert = spec.perturbed(1e-2)
    _guarded(report, "lax_appendix_solution", max(args.tol, 1e-10),
             lambda: _map_points(lambda p: _appendix_residual(spec, p), at, args.jobs))
    _guarded(report, "lax_appendix_perturbed", max(args.tol, 1e-10),
             lambda: _map_points(lambda p: _appendix_residual(pert, p), at, args.jobs))
    # the perturbed K must be detected: the check passes when the commutator is large
    _guarded(report, "lax_detects_perturbation", 1.0,
             lambda: 1e-5 / np.min(_map_points(lambda p: _lax_residual(pert, p), at, args.jobs)),
             "residual is 1e-5 / min commutator on K + 1e-2 w wb")


def _family_for(spec, name):
    """The requested line family; file specs default to the S4/H4 family of their sign."""
    if name is None:
        name = spec.name if spec.name in ("s4", "h4", "cp2", "bergmann") else ("h4" if spec.eps > 0 else "s4")
    try:
        return builtin_family(name)
    except KeyError as exc:
        raise UsageError(str(exc)) from None


def suite_extract(report, spec, args):
    family = _family_for(spec, args.family)
    at = spec.sample(args.samples, args.seed)
    _background_check(report, spec, at, args.tol, args.jobs)
    tol10 = max(args.tol, 1e-10)

    def run(p):
        res = extract_przanowski(family, spec.lam, p)
        target = np.real(spec.k_jet(p, 0).value)
        return np.stack([np.abs(res.K - target), res.transverse])

    try:
        vals = _map_points(run, at, args.jobs)
        report.add("extraction", vals[0], tol10, f"family {family.name}")
        report.add("transverse_contact", vals[1], max(args.tol, 1e-12))
    except (ArithmeticError, ValueError, TwistorError) as exc:
        report.fail("extraction", tol10, exc)
    rng = np.random.default_rng(args.seed)
    moduli = family.from_coords(tuple(rng.uniform(-0.5, 0.5, (4, args.samples)) + 1j * rng.uniform(-0.5, 0.5, (4, args.samples))))
    xi = rng.uniform(-1, 1, (2, args.samples)) + 1j * rng.uniform(-1, 1, (2, args.samples))
    _guarded(report, "line_restriction", max(args.tol, 1e-12), lambda: line_restriction(family, moduli, xi[0], xi[1]))


def suite_recursion(report, spec, args):
    if spec.name in ("cp2", "bergmann"):
        raise UsageError("the recursion suite uses the S4/H4 line series; pass --manifold s4, h4 or a file spec")
    at = spec.sample(args.samples, args.seed)
    _background_check(report, spec, at, args.tol, args.jobs)
    lower, upper = line_series(spec)
    _guarded(report, "recursion_relations", max(args.tol, 1e-9),
             lambda: _map_points(lambda p: recursion_residual(spec, p, lower, upper), at, args.jobs),
             "calibrated series psi_0 = w, psi_{-1} = c wb zb")
    tol8 = max(args.tol, 1e-8)
    _guarded(report, "integrability", tol8,
             lambda: _map_points(lambda p: np.abs(integrability_residual(spec, p, upper)), at, args.jobs))

    def step():
        corner = (0.45 + 0.1j, 0.3 - 0.2j, 0.45 - 0.1j, 0.3 + 0.2j)
        if spec.name == "s4" or spec.eps < 0:
            corner = tuple(2 * c for c in corner)
        res = recursion_step(spec, lower, corner, (0.02 + 0.01j, -0.015 + 0.02j), 11, "up")
        exact = np.asarray(res.points.w)
        got = res.normalised(exact[0, 0])
        return np.abs(got - exact)

    _guarded(report, "recursion_step", 1e-6, step)


def suite_perturb(report, spec, args):
    at = spec.sample(args.samples, args.seed)
    _background_check(report, spec, at, args.tol, args.jobs)
    tol8 = max(args.tol, 1e-8)

    def gauge(p):
        out = []
        for dw, dz in (("w", "z"), ("w*z", "1"), ("z", "z*z")):
            dk = gauge_kernel_element(spec, p, dw, dz, order=2)
            bg = Background.of(spec, p, 2)
            out.append(np.abs(lin_prz_apply(spec, p, dk)) / np.maximum(np.abs(bg.tilde_k.value), 1.0))
        return np.max(out, axis=0)

    _guarded(report, "gauge_kernel", tol8, lambda: _map_points(gauge, at, args.jobs))

    def fd(p):
        """Central difference of the Przanowski expression along delta K = w z wb zb."""
        delta_src = "w*z*wb*zb"
        dk = spec.k_jet(p, 2) * 0.0 + _jet_of(delta_src, p, spec)
        lin = lin_prz_apply(spec, p, dk)
        t = 1e-5
        plus = prz_residual(spec.with_k(f"({spec.source}) + {t!r}*({delta_src})"), p).residual
        minus = prz_residual(spec.with_k(f"({spec.source}) - {t!r}*({delta_src})"), p).residual
        return np.abs((plus - minus) / (2 * t) - lin) / np.maximum(np.abs(lin), 1.0)

    _guarded(report, "linearisation_fd", 1e-6, lambda: _map_points(fd, at, args.jobs))
    if spec.name not in ("cp2", "bergmann"):
        lower, upper = line_series(spec)
        pts = at[: min(10, at.shape[0])]
        nodes = 64

        def series(x):
            return upper.jet(pts, 0, spec.params).value + lower.jet(pts, 0).value / x

        def contour():
            got0 = contour_extract(series, args.contour_radius, nodes, power=0)
            got1 = contour_extract(series, args.contour_radius, nodes, power=-1)
            return np.maximum(np.abs(got0 - upper.jet(pts, 0, spec.params).value),
                              np.abs(got1 - lower.jet(pts, 0).value))

        _guarded(report, "contour_coefficients", max(args.tol, 1e-12), contour)


def _jet_of(src, at, spec):
    from .expr import eval_jet

    return eval_jet(parse(src), at, 2, spec.params)


def suite_solve(report, spec, args):
    family = args.family or spec.name
    if family == "cp2-slice":
        family = "cp2"
    if args.manifold is None and family in ("h4", "s4", "cp2"):
        spec = slv.study_spec("cp2-slice" if family == "cp2" else family)
    at = spec.sample(min(args.samples, 50), args.seed)
    _background_check(report, spec, at, args.tol, args.jobs)
    try:
        grid = slv.GridSpec(spec, n=args.grid)
    except slv.SolverError as exc:
        raise UsageError(str(exc)) from None
    ref = grid.reference()
    try:
        start = slv.perturbed_start(grid, args.noise, args.seed)
        sol, rep = slv.newton_solve(grid, start, tol=args.newton_tol, reference=ref)
        report.add("newton_residual", rep.residuals[-1], args.newton_tol, f"{rep.iterations} iterations")
        report.add("deviation", rep.deviation, 5e-4, "max |K - closed form| at interior nodes")
        if args.out:
            stem = Path(args.out).with_suffix("")
            slv.write_solution_csv(f"{stem}.csv", grid, sol)
            slv.write_report_json(f"{stem}.newton.json", rep)
    except (slv.SolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
        report.fail("newton_residual", args.newton_tol, exc)


def suite_report(report, spec, args):
    suite_verify(report, spec, args)
    seen = {c.name for c in report.checks}
    sub = RunReport("lax", report.spec, report.seed)
    suite_lax(sub, spec, args)
    report.checks += [c for c in sub.checks if c.name not in seen]
    if spec.name in ("s4", "h4", "cp2", "bergmann"):
        sub = RunReport("extract", report.spec, report.seed)
        suite_extract(sub, spec, args)
        report.checks += [c for c in sub.checks if c.name != "prz"]
    if spec.name not in ("cp2", "bergmann"):
        sub = RunReport("recursion", report.spec, report.seed)
        suite_recursion(sub, spec, args)
        report.checks += [c for c in sub.checks if c.name != "prz"]
    sub = RunReport("perturb", report.spec, report.seed)
    suite_perturb(sub, spec, args)
    report.checks += [c for c in sub.checks if c.name != "prz"]


SUITES = {
    "verify": suite_verify,
    "lax": suite_lax,
    "extract": suite_extract,
    "recursion": suite_recursion,
    "perturb": suite_perturb,
    "solve": suite_solve,
    "report": suite_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="przanowski", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUITES:
        s = sub.add_parser(name)
        s.add_argument("--manifold", default=None, help="builtin (s4, h4, cp2, bergmann) or file:<path.json>")
        s.add_argument("--family", default=None, help="line family (extract) or solver family (h4, s4, cp2-slice)")
        s.add_argument("--samples", type=int, default=200)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--tol", type=float, default=1e-9)
        s.add_argument("--grid", type=int, default=17)
        s.add_argument("--noise", type=float, default=1e-5)
        s.add_argument("--newton-tol", type=float, default=1e-10)
        s.add_argument("--contour-radius", type=float, default=1.0)
        s.add_argument("--order", type=int, default=4, help="jet order of the background (3 or 4)")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--out", default=None, help="report JSON path (solve also writes <stem>.csv)")
    return p


def _resolve_spec(args):
    ref = args.manifold
    if ref is None:
        fam = args.family or "h4"
        ref = {"cp2-slice": "cp2"}.get(fam, fam)
    return load_manifold(ref)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.samples < 1 or args.jobs < 1 or args.grid < 3 or args.order not in (3, 4):
        parser.error("--samples, --jobs must be positive, --grid >= 3 and --order in {3, 4}")
    t0 = time.perf_counter()
    try:
        spec = _resolve_spec(args)
        report = RunReport(args.command, spec.to_json(), args.seed)
        SUITES[args.command](report, spec, args)
    except (SpecError, UsageError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    report.wall_time = time.perf_counter() - t0
    text = json.dumps(report.to_json(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(report.table())
    for c in report.checks:
        if not c.passed:
            print(f"failed check: {c.name}" + (f" ({c.note})" if c.note else ""), file=sys.stderr)
    return 0 if report.passed else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
