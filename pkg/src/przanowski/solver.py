"""Newton solver for Przanowski's equation on a symmetry-reduced grid.

Functions of rho = w wb and sigma = z zb only are discretised on a box of
(rho, sigma) with second-order central differences.  Each interior node's
differences form an order-2 jet of K(rho, sigma), which is lifted through
the chain rule to a four-variable jet so that the full equation is evaluated,
never a hand-reduced version of it.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .expr import evaluate
from .geometry import Background
from .jets import Jet, Point4
from .manifolds import ManifoldSpec, builtin
from .operators import lin_prz_jet, prz_terms


class SolverError(ArithmeticError):
    pass


class DomainError(SolverError):
    pass


class ReductionError(SolverError):
    """The lifted residual has an imaginary part on the real slice."""


class NewtonError(SolverError):
    def __init__(self, message, residuals):
        super().__init__(f"{message}; residual trace {['%.3e' % r for r in residuals]}")
        self.residuals = list(residuals)


# -- grid ------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """n x n nodes on [rho0, rho1] x [sigma0, sigma1] for the manifold ``spec``."""

    spec: ManifoldSpec
    box: tuple = ((0.05, 0.25), (0.05, 0.25))
    n: int = 17
    margin: float = 0.1

    def __post_init__(self):
        (r0, r1), (s0, s1) = self.box
        if self.n < 3:
            raise DomainError("the grid needs at least 3 nodes per axis")
        if not (0 < r0 < r1 and 0 < s0 < s1):
            raise DomainError("the box must lie in rho, sigma > 0 (the coordinate axes are excluded)")
        m = domain_margin(self.spec, *self.mesh())
        if np.min(m) < self.margin:
            raise DomainError(f"box leaves the valid domain of {self.spec.name} (margin {np.min(m):.3g} < {self.margin})")

    @property
    def lam(self) -> float:
        return self.spec.lam

    @property
    def eps(self) -> int:
        return self.spec.eps

    @property
    def h(self) -> tuple:
        (r0, r1), (s0, s1) = self.box
        return ((r1 - r0) / (self.n - 1), (s1 - s0) / (self.n - 1))

    def axes(self):
        (r0, r1), (s0, s1) = self.box
        return np.linspace(r0, r1, self.n), np.linspace(s0, s1, self.n)

    def mesh(self):
        r, s = self.axes()
        return np.meshgrid(r, s, indexing="ij")

    def reference(self) -> np.ndarray:
        """The closed-form K of the spec on the grid (real values)."""
        return reference_values(self.spec, *self.mesh())


def domain_margin(spec: ManifoldSpec, rho, sigma) -> np.ndarray:
    """Distance-like margin from the singular sets of the built-in closed forms."""
    eps = spec.eps
    rho, sigma = np.asarray(rho, dtype=float), np.asarray(sigma, dtype=float)
    if spec.name in ("s4", "h4"):
        return 1.0 - eps * rho * (1.0 + sigma)
    if spec.name in ("cp2", "bergmann"):
        return np.minimum(np.abs(1.0 - eps * rho - eps * sigma), np.abs(sigma - eps))
    vals = reference_values(spec, rho, sigma)
    return np.where(np.isfinite(vals), np.inf, -np.inf)


def reference_values(spec: ManifoldSpec, rho, sigma) -> np.ndarray:
    at = Point4.real_slice(np.sqrt(rho), np.sqrt(sigma), spec.lam)
    v = evaluate(spec.k_expr, at, spec.params)
    return np.real(v)


@dataclass
class GridField:
    values: np.ndarray
    boundary: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.boundary is None:
            b = np.zeros(self.values.shape, dtype=bool)
            b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = True
            self.boundary = b
        if not np.all(np.isfinite(self.values)):
            raise SolverError("grid field holds non-finite values")

    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1]


# -- lifting ---------------------------------------------------------------------


def lift_reduced_jet(reduced, rho, sigma, lam: float) -> Jet:
    """The order-2 jet in (w, z, wb, zb) of K(w wb, z zb) at w = sqrt(rho), z = sqrt(sigma).

    ``reduced`` holds (K, K_r, K_s, K_rr, K_rs, K_ss) on its leading axis.
    """
    rho = np.asarray(rho, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(rho <= 0) or np.any(sigma <= 0):
        raise DomainError("lifting needs rho, sigma > 0")
    K, Kr, Ks, Krr, Krs, Kss = (np.asarray(c) for c in reduced)
    at = Point4.real_slice(np.sqrt(rho), np.sqrt(sigma), lam)
    w, z, wb, zb = (Jet.variable(at, d, 2) for d in range(4))
    dr = w * wb - rho
    ds = z * zb - sigma
    return K + Kr * dr + Ks * ds + 0.5 * Krr * (dr * dr) + Krs * (dr * ds) + 0.5 * Kss * (ds * ds)


def _differences(K: np.ndarray, h) -> np.ndarray:
    hr, hs = h
    c = K[1:-1, 1:-1]
    Kr = (K[2:, 1:-1] - K[:-2, 1:-1]) / (2 * hr)
    Ks = (K[1:-1, 2:] - K[1:-1, :-2]) / (2 * hs)
    Krr = (K[2:, 1:-1] - 2 * c + K[:-2, 1:-1]) / hr**2
    Kss = (K[1:-1, 2:] - 2 * c + K[1:-1, :-2]) / hs**2
    Krs = (K[2:, 2:] - K[2:, :-2] - K[:-2, 2:] + K[:-2, :-2]) / (4 * hr * hs)
    return np.stack([c, Kr, Ks, Krr, Krs, Kss])


def _interior_mesh(grid: GridSpec):
    r, s = grid.mesh()
    return r[1:-1, 1:-1], s[1:-1, 1:-1]


def _background(grid: GridSpec, K: np.ndarray) -> Background:
    r, s = _interior_mesh(grid)
    return Background(lift_reduced_jet(_differences(K, grid.h), r, s, grid.lam), grid.lam)


def grid_residual(field: GridField, grid: GridSpec, imag_tol: float = 1e-12) -> np.ndarray:
    """Przanowski's equation at the interior nodes, shape (n-2, n-2), real."""
    bg = _background(grid, field.values)
    mixed, diag, first = (t.value for t in prz_terms(bg))
    res = mixed + diag + first
    scale = np.maximum(np.max(np.abs(np.stack([mixed, diag, first])), axis=0), 1.0)
    if np.any(np.abs(res.imag) > imag_tol * scale):
        raise ReductionError(f"lifted residual is not real (max imaginary part {np.max(np.abs(res.imag)):.3e})")
    return res.real


_OFFSETS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)]


def _stencil_unit(offset, h) -> np.ndarray:
    """Reduced-derivative weights of a unit value at ``offset`` from the centre node."""
    di, dj = offset
    hr, hs = h
    v = np.zeros(6)
    if offset == (0, 0):
        v[0] = 1.0
        v[3] = -2.0 / hr**2
        v[5] = -2.0 / hs**2
    elif dj == 0:
        v[1] = di / (2 * hr)
        v[3] = 1.0 / hr**2
    elif di == 0:
        v[2] = dj / (2 * hs)
        v[5] = 1.0 / hs**2
    else:
        v[4] = di * dj / (4 * hr * hs)
    return v


def grid_jacobian(field: GridField, grid: GridSpec) -> np.ndarray:
    """d residual / d interior values, assembled from the linearised equation applied to lifted stencil jets."""
    bg = _background(grid, field.values)
    r, s = _interior_mesh(grid)
    m = grid.n - 2
    N = m * m
    J = np.zeros((N, N))
    idx = np.arange(N).reshape(m, m)
    for off in _OFFSETS:
        unit = _stencil_unit(off, grid.h)
        reduced = unit.reshape((6, 1, 1)) * np.ones((1, m, m))
        delta = lift_reduced_jet(reduced, r, s, grid.lam)
        col = lin_prz_jet(bg, delta).value.real  # (m, m)
        di, dj = off
        i0, i1 = max(0, -di), m - max(0, di)
        j0, j1 = max(0, -dj), m - max(0, dj)
        rows = idx[i0:i1, j0:j1]
        cols = idx[i0 + di:i1 + di, j0 + dj:j1 + dj]
        J[rows.ravel(), cols.ravel()] += col[i0:i1, j0:j1].ravel()
    return J


# -- Newton ------------------------------------------------------------------------


@dataclass
class NewtonReport:
    iterations: int
    residuals: list
    halvings: list
    deviation: float = float("nan")
    order_estimate: float = float("nan")
    quadratic_ratios: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def newton_solve(grid: GridSpec, initial: GridField, tol: float = 1e-11, max_iter: int = 20,
                 reference: np.ndarray = None):
    """Damped Newton for the interior values; the boundary keeps the initial (Dirichlet) data.

    Each step is tried at full length and halved while the max residual grows,
    at most 6 times.  The linear systems are solved by dense LU.
    """
    K = initial.values.copy()
    trace, halvings = [], []
    r = grid_residual(GridField(K), grid)
    trace.append(float(np.max(np.abs(r))))
    it = 0
    while trace[-1] >= tol:
        if it >= max_iter:
            raise NewtonError(f"no convergence in {max_iter} iterations", trace)
        J = grid_jacobian(GridField(K), grid)
        try:
            step = np.linalg.solve(J, -r.ravel())
        except np.linalg.LinAlgError:
            raise NewtonError("singular Jacobian", trace) from None
        step = step.reshape(r.shape)
        t, tries = 1.0, 0
        while True:
            trial = K.copy()
            trial[1:-1, 1:-1] += t * step
            try:
                r_new = grid_residual(GridField(trial), grid)
                val = float(np.max(np.abs(r_new)))
            except (SolverError, FloatingPointError, ArithmeticError):
                val = np.inf
            if val < trace[-1] or tries == 6:
                break
            t *= 0.5
            tries += 1
        if not np.isfinite(val):
            raise NewtonError("step left the domain", trace)
        if val >= trace[-1]:
            raise NewtonError("stagnated (no decrease after 6 halvings)", trace)
        K, r = trial, r_new
        trace.append(val)
        halvings.append(tries)
        it += 1
    ratios = [trace[i + 1] / trace[i] ** 2 for i in range(len(trace) - 1) if trace[i] > 0]
    report = NewtonReport(it, trace, halvings, quadratic_ratios=ratios)
    if reference is not None:
        report.deviation = float(np.max(np.abs(K[1:-1, 1:-1] - reference[1:-1, 1:-1])))
    return GridField(K), report


def perturbed_start(grid: GridSpec, noise: float = 1e-2, seed: int = 0) -> GridField:
    """Exact values plus seeded uniform noise in [-noise, noise] at the interior nodes."""
    K = grid.reference()
    rng = np.random.default_rng(seed)
    K[1:-1, 1:-1] += rng.uniform(-noise, noise, size=(grid.n - 2, grid.n - 2))
    return GridField(K)


# -- convergence study -------------------------------------------------------------


FAMILIES = {"h4": "h4", "s4": "s4", "cp2-slice": "cp2"}


def study_spec(family: str) -> ManifoldSpec:
    try:
        return builtin(FAMILIES[family])
    except KeyError:
        raise ValueError(f"unknown study family {family!r}; choose from {sorted(FAMILIES)}") from None


def _fit_order(hs, errs) -> float:
    hs, errs = np.asarray(hs, dtype=float), np.asarray(errs, dtype=float)
    if len(hs) < 2 or np.any(errs <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def convergence_study(family, grids=(9, 17, 33), box=((0.05, 0.25), (0.05, 0.25)), tol: float = 1e-8):
    """Per grid: exact-data residual, Newton deviation from the closed form, and fitted orders.

    Newton starts from the closed form, so it converges to the discrete solution
    nearest to it.  The default tolerance sits above the rounding floor of the
    finest grid, which grows like 1/h^2.
    """
    if list(grids) != sorted(grids) or any((b - 1) % (a - 1) for a, b in zip(grids, grids[1:])):
        raise ValueError("grids must be nested (n_{k+1} - 1 a multiple of n_k - 1)")
    spec = family if isinstance(family, ManifoldSpec) else study_spec(family)
    rows = []
    t0 = time.perf_counter()
    for n in grids:
        grid = GridSpec(spec, box, n)
        ref = grid.reference()
        exact_res = float(np.max(np.abs(grid_residual(GridField(ref), grid))))
        _, rep = newton_solve(grid, GridField(ref), tol=tol, reference=ref)
        rows.append({
            "n": n,
            "h": grid.h[0],
            "exact_residual": exact_res,
            "deviation": rep.deviation,
            "iterations": rep.iterations,
        })
    hs = [r["h"] for r in rows]
    table = {
        "family": spec.name,
        "rows": rows,
        "deviation_order": _fit_order(hs, [r["deviation"] for r in rows]),
        "residual_order": _fit_order(hs, [r["exact_residual"] for r in rows]),
        "seconds": time.perf_counter() - t0,
    }
    return table


def write_solution_csv(path, grid: GridSpec, field: GridField):
    r, s = grid.mesh()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["rho", "sigma", "K_value"])
        for a, b, k in zip(r.ravel(), s.ravel(), field.values.ravel()):
            out.writerow([repr(float(a)), repr(float(b)), repr(float(k))])


def write_report_json(path, report: NewtonReport):
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)


__all__ = [
    "SolverError",
    "DomainError",
    "ReductionError",
    "NewtonError",
    "GridSpec",
    "GridField",
    "NewtonReport",
    "domain_margin",
    "reference_values",
    "lift_reduced_jet",
    "grid_residual",
    "grid_jacobian",
    "newton_solve",
    "perturbed_start",
    "convergence_study",
    "study_spec",
    "write_solution_csv",
    "write_report_json",
]
