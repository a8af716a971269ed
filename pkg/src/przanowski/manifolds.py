"""Manifold specifications: a Przanowski function, its cosmological constant and a sample box."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .expr import Ast, eval_jet, parse, print_canonical
from .jets import Jet, Point4

S4H4_K = "(2/lam)*ln(w*wb/(1 - eps*w*wb*(1+z*zb)))"
CP2_K = "-(1/lam)*ln((1 - eps*w*wb - eps*z*zb)*(z*zb - eps))"


class SpecError(ValueError):
    """A manifold specification failed validation; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Box:
    re: tuple
    im: tuple

    def sample(self, rng, n):
        return rng.uniform(*self.re, n) + 1j * rng.uniform(*self.im, n)

    def contains(self, values) -> np.ndarray:
        v = np.asarray(values)
        return (
            (self.re[0] <= v.real) & (v.real <= self.re[1])
            & (self.im[0] <= v.imag) & (v.imag <= self.im[1])
        )


@dataclass(frozen=True)
class ManifoldSpec:
    """A candidate metric: the Przanowski function ``k_expr`` at cosmological constant ``lam``."""

    name: str
    lam: float
    k_expr: Ast
    domain: dict
    reality: bool = True
    eps: int = field(default=None)
    source: str = ""

    def __post_init__(self):
        lam = float(self.lam)
        if lam == 0.0 or not np.isfinite(lam):
            raise SpecError("lambda", "must be finite and non-zero")
        sign = 1 if lam > 0 else -1
        if self.eps is None:
            object.__setattr__(self, "eps", sign)
        elif int(self.eps) != sign:
            raise SpecError("eps", f"eps={self.eps} does not match the sign of lambda={lam}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "eps", int(self.eps))
        needed = ("w", "z") if self.reality else ("w", "z", "wb", "zb")
        for name in needed:
            if name not in self.domain:
                raise SpecError(f"domain.{name}", "missing sample box")
        if not self.source:
            object.__setattr__(self, "source", print_canonical(self.k_expr))

    @property
    def params(self) -> dict:
        return {"lam": self.lam, "eps": float(self.eps)}

    def k_jet(self, at: Point4, order: int) -> Jet:
        return eval_jet(self.k_expr, at, order, self.params)

    def with_k(self, source: str, name: str = None) -> "ManifoldSpec":
        """The same spec with a different Przanowski function (e.g. a perturbation)."""
        return ManifoldSpec(name or self.name, self.lam, parse(source), self.domain, self.reality, self.eps, source)

    def perturbed(self, amplitude: float, term: str = "w*wb") -> "ManifoldSpec":
        src = f"({self.source}) + {float(amplitude)!r}*({term})"
        return self.with_k(src, name=f"{self.name}+{amplitude:g}*{term}")

    def point(self, w, z, wb=None, zb=None) -> Point4:
        if wb is None:
            return Point4.real_slice(w, z, self.lam)
        return Point4(w, z, wb, zb, self.lam)

    def sample(self, n: int, seed=0) -> Point4:
        """``n`` seeded points in the sample box (real slice when ``reality``)."""
        rng = np.random.default_rng(seed)
        w = self.domain["w"].sample(rng, n)
        z = self.domain["z"].sample(rng, n)
        if self.reality:
            return Point4.real_slice(w, z, self.lam)
        wb = self.domain["wb"].sample(rng, n)
        zb = self.domain["zb"].sample(rng, n)
        return Point4(w, z, wb, zb, self.lam)

    def to_json(self) -> dict:
        dom = {k: {"re": list(b.re), "im": list(b.im)} for k, b in self.domain.items()}
        return {
            "name": self.name,
            "lambda": self.lam,
            "eps": self.eps,
            "K": self.source,
            "domain": dom,
            "reality": self.reality,
        }


def _box(b) -> Box:
    return Box(tuple(float(x) for x in b[0]), tuple(float(x) for x in b[1]))


# Boxes keep clear of w = 0 (where K_w vanishes) and of the zero sets of the ln
# arguments; for bergmann the real region is |w|^2 + |z|^2 > 1, |z| < 1.
BUILTINS = {
    "s4": dict(lam=-1.0, K=S4H4_K, domain={"w": [(0.2, 1.0), (0.2, 1.0)], "z": [(-1.0, 1.0), (-1.0, 1.0)]}),
    "h4": dict(lam=1.0, K=S4H4_K, domain={"w": [(0.15, 0.5), (0.15, 0.5)], "z": [(-0.5, 0.5), (-0.5, 0.5)]}),
    "cp2": dict(lam=-1.0, K=CP2_K, domain={"w": [(0.2, 1.0), (0.2, 1.0)], "z": [(-1.0, 1.0), (-1.0, 1.0)]}),
    "bergmann": dict(lam=1.0, K=CP2_K, domain={"w": [(0.75, 0.95), (0.75, 0.95)], "z": [(-0.5, 0.5), (-0.5, 0.5)]}),
}


def builtin(name: str, lam: float = None) -> ManifoldSpec:
    try:
        entry = BUILTINS[name]
    except KeyError:
        raise SpecError("manifold", f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None
    lam = entry["lam"] if lam is None else float(lam)
    if np.sign(lam) != np.sign(entry["lam"]):
        raise SpecError("lambda", f"{name} needs lambda with sign {int(np.sign(entry['lam']))}")
    domain = {k: _box(v) for k, v in entry["domain"].items()}
    return ManifoldSpec(name, lam, parse(entry["K"]), domain, True, None, entry["K"])


def spec_from_dict(data: dict, origin: str = "<dict>") -> ManifoldSpec:
    if not isinstance(data, dict):
        raise SpecError("$", "manifold file must hold a JSON object")
    for key in ("lambda", "K", "domain"):
        if key not in data:
            raise SpecError(key, "required field missing")
    lam = data["lambda"]
    if not isinstance(lam, (int, float)) or isinstance(lam, bool):
        raise SpecError("lambda", "must be a number")
    if lam == 0:
        raise SpecError("lambda", "must be non-zero")
    eps = data.get("eps")
    if eps is not None and eps not in (-1, 1):
        raise SpecError("eps", "must be +1 or -1")
    if not isinstance(data["K"], str):
        raise SpecError("K", "must be an expression string")
    try:
        ast = parse(data["K"])
    except ValueError as exc:
        raise SpecError("K", str(exc)) from None
    reality = data.get("reality", True)
    if not isinstance(reality, bool):
        raise SpecError("reality", "must be a boolean")
    dom_in = data["domain"]
    if not isinstance(dom_in, dict):
        raise SpecError("domain", "must be an object mapping variables to boxes")
    domain = {}
    for var, b in dom_in.items():
        path = f"domain.{var}"
        if var not in ("w", "z", "wb", "zb"):
            raise SpecError(path, "unknown variable")
        try:
            if isinstance(b, dict):
                re_, im_ = b["re"], b["im"]
            elif len(b) == 2 and all(isinstance(x, (list, tuple)) for x in b):
                re_, im_ = b
            else:
                re_ = im_ = b
            box = Box(tuple(map(float, re_)), tuple(map(float, im_)))
        except (KeyError, TypeError, ValueError):
            raise SpecError(path, "expected [lo, hi], [[re_lo, re_hi], [im_lo, im_hi]] or {re, im}") from None
        if len(box.re) != 2 or len(box.im) != 2 or box.re[0] > box.re[1] or box.im[0] > box.im[1]:
            raise SpecError(path, "box bounds must be ordered [lo, hi] pairs")
        domain[var] = box
    name = data.get("name", Path(origin).stem)
    return ManifoldSpec(str(name), float(lam), ast, domain, reality, eps, data["K"])


def load_manifold(ref: str) -> ManifoldSpec:
    """A builtin name (s4, h4, cp2, bergmann) or a JSON file, optionally prefixed ``file:``."""
    if ref in BUILTINS:
        return builtin(ref)
    path = ref[5:] if ref.startswith("file:") else ref
    p = Path(path)
    if not p.is_file():
        raise SpecError("manifold", f"{ref!r} is neither a builtin nor a readable file")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError("$", f"invalid JSON: {exc}") from None
    return spec_from_dict(data, origin=str(p))
