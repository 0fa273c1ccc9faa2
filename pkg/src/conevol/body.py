"""Smooth strictly convex bodies described by their support functions.

A body is stored as real harmonic coefficients of its support function ``h``.
Everything else (curvature, boundary map, cone-volume density) is derived on
the quadrature grid at construction time.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import sphere
from .sphere import SphereGrid

MARGIN_THRESHOLD = 1e-8


class NotConvexError(ValueError):
    """The support data does not describe a strictly convex body."""

    def __init__(self, margin: float, message: str | None = None):
        self.margin = margin
        super().__init__(message or f"convexity margin {margin:.3e} is below {MARGIN_THRESHOLD:g}")


class OriginNotInteriorError(ValueError):
    """Raised when an operation needs h > 0 and the support function is not positive."""


@dataclass(frozen=True)
class HarmonicCoeffs:
    n: int
    L: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (sphere.basis_size(self.n, self.L),):
            raise ValueError(
                f"degree {self.L} on S^{self.n} needs {sphere.basis_size(self.n, self.L)} coefficients, got {values.shape}"
            )
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """Support function plus cached grid geometry.

    ``grad`` and ``hess`` are frame components; ``X`` is the inverse Gauss map
    ``grad h + h x`` in ambient coordinates; ``curvature_form`` is the
    symmetric matrix ``hess + h Id`` whose determinant is ``1/K``.
    """

    coeffs: HarmonicCoeffs
    grid: SphereGrid
    h: np.ndarray = field(repr=False)
    grad: np.ndarray = field(repr=False)
    hess: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    curvature_form: np.ndarray = field(repr=False)
    radii_product: np.ndarray = field(repr=False)
    margin: float = 0.0
    label: str = ""
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.coeffs.n

    @property
    def L(self) -> int:
        return self.coeffs.L

    @property
    def curvature(self) -> np.ndarray:
        return 1.0 / self.radii_product

    @property
    def density(self) -> np.ndarray:
        """h/K, the cone-volume density against the surface measure (up to 1/(n+1))."""
        return self.h * self.radii_product

    @property
    def grad_ambient(self) -> np.ndarray:
        return self.grid.to_ambient(self.grad)

    def with_label(self, label: str, **meta) -> "ConvexBody":
        return from_coeffs(self.coeffs, self.grid, label=label, meta={**self.meta, **meta})

    def require_origin_interior(self):
        hmin = float(self.h.min())
        if hmin <= 0.0:
            raise OriginNotInteriorError(f"support function reaches {hmin:.3e}; the origin is not interior")


def _geometry(coeffs: HarmonicCoeffs, grid: SphereGrid):
    H = sphere.harmonics(grid, coeffs.L)
    d = H.derivatives(coeffs.values)
    h = d.value
    A = d.hessian + h[:, None, None] * np.eye(grid.n)
    X = grid.to_ambient(d.gradient) + h[:, None] * grid.nodes
    if grid.n == 1:
        eig_min = A[:, 0, 0]
        det = A[:, 0, 0]
    else:
        eig_min = np.linalg.eigvalsh(A)[:, 0]
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    return h, d.gradient, d.hessian, X, A, det, float(eig_min.min())


def convexity_margin(coeffs: HarmonicCoeffs, grid: SphereGrid | None = None) -> float:
    """Smallest eigenvalue of hess h + h Id over the grid nodes."""
    grid = grid or sphere.default_grid(coeffs.n, coeffs.L)
    return _geometry(coeffs, grid)[-1]


def from_coeffs(coeffs, grid: SphereGrid | None = None, *, n: int | None = None, label: str = "",
                meta: dict | None = None, check: bool = True) -> ConvexBody:
    """Build a body from harmonic coefficients; rejects non-convex support data."""
    if not isinstance(coeffs, HarmonicCoeffs):
        values = np.asarray(coeffs, dtype=float)
        if n is None:
            if grid is None:
                raise ValueError("dimension is ambiguous: pass n or a grid")
            n = grid.n
        coeffs = HarmonicCoeffs(n, sphere.degree_of(n, values.size), values)
    grid = grid or sphere.default_grid(coeffs.n, coeffs.L)
    if grid.n != coeffs.n:
        raise ValueError(f"coefficients live on S^{coeffs.n} but the grid is on S^{grid.n}")
    h, grad, hess, X, A, det, margin = _geometry(coeffs, grid)
    if check and not margin > MARGIN_THRESHOLD:
        raise NotConvexError(margin)
    return ConvexBody(coeffs, grid, h, grad, hess, X, A, det, margin, label, dict(meta or {}))


def from_samples(h, grid: SphereGrid, L: int, **kw) -> ConvexBody:
    return from_coeffs(HarmonicCoeffs(grid.n, L, sphere.analyze(h, grid, L)), grid, **kw)


def _grid_for(n, L, grid):
    return grid if grid is not None else sphere.default_grid(n, L)


# -- constructors -------------------------------------------------------------


def make_ball(r: float = 1.0, n: int = 2, L: int = sphere.DEFAULT_DEGREE, grid=None) -> ConvexBody:
    g = _grid_for(n, L, grid)
    values = np.zeros(sphere.basis_size(n, L))
    values[0] = r * math.sqrt(sphere.AREA[n])
    return from_coeffs(HarmonicCoeffs(n, L, values), g, label=f"ball(r={r:g})", meta={"family": "ball", "r": r})


def make_translated_ball(c, n: int | None = None, L: int = sphere.DEFAULT_DEGREE, grid=None,
                         r: float = 1.0) -> ConvexBody:
    """Ball of radius ``r`` centred at ``c``: h(x) = r + <c, x>."""
    c = np.asarray(c, dtype=float)
    n = c.size - 1 if n is None else n
    if c.size != n + 1:
        raise ValueError(f"offset must have {n + 1} components")
    g = _grid_for(n, L, grid)
    values = sphere.linear_coeffs(n, L, c)
    values[0] = r * math.sqrt(sphere.AREA[n])
    return from_coeffs(HarmonicCoeffs(n, L, values), g, label=f"translated_ball(|c|={np.linalg.norm(c):g})",
                        meta={"family": "translated_ball", "c": c.tolist(), "r": r})


def ellipsoid_support(nodes: np.ndarray, semiaxes) -> np.ndarray:
    a = np.asarray(semiaxes, dtype=float)
    return np.sqrt(np.sum((a * nodes) ** 2, axis=1))


def make_ellipsoid(semiaxes, L: int = sphere.DEFAULT_DEGREE, grid=None) -> ConvexBody:
    """Axis-aligned ellipsoid, support function projected to degree L."""
    a = np.asarray(semiaxes, dtype=float)
    n = a.size - 1
    g = _grid_for(n, L, grid)
    return from_samples(ellipsoid_support(g.nodes, a), g, L,
                        label="ellipsoid(" + ",".join(f"{v:g}" for v in a) + ")",
                        meta={"family": "ellipsoid", "semiaxes": a.tolist()})


def perturbation_coeffs(terms, n: int, L: int, base: float = 1.0) -> np.ndarray:
    """Coefficients of ``base + sum amp * Y_lm`` (orthonormal harmonics)."""
    values = np.zeros(sphere.basis_size(n, L))
    values[0] = base * math.sqrt(sphere.AREA[n])
    for l, m, amp in terms:
        if l > L:
            raise ValueError(f"perturbation degree {l} exceeds L={L}")
        values[sphere.harmonic_index(n, int(l), int(m))] += amp
    return values


def critical_scale(terms, n: int, L: int, grid=None, tol: float = 1e-12) -> float:
    """Largest t such that ``1 + t * perturbation`` keeps a positive margin, by bisection."""
    g = _grid_for(n, L, grid)

    def ok(t):
        c = HarmonicCoeffs(n, L, perturbation_coeffs([(l, m, t * a) for l, m, a in terms], n, L))
        h, *_, margin = _geometry(c, g)
        return margin > 0.0 and h.min() > 0.0

    lo, hi = 0.0, 1.0
    while ok(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            return math.inf
    while hi - lo > tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def make_perturbed_ball(terms, n: int = 2, L: int = sphere.DEFAULT_DEGREE, grid=None,
                        clamp: bool = False) -> ConvexBody:
    """Unit ball plus harmonic perturbations ``[(l, m, amplitude), ...]``.

    With ``clamp=True`` the amplitudes are scaled down, if needed, to half the
    scale at which the body would stop being convex (or stop containing the
    origin).  The applied factor is recorded in ``meta``.
    """
    g = _grid_for(n, L, grid)
    terms = [(int(l), int(m), float(a)) for l, m, a in terms]
    factor = 1.0
    if clamp and terms:
        crit = critical_scale(terms, n, L, g)
        if crit < 2.0:
            factor = 0.5 * crit
    applied = [(l, m, a * factor) for l, m, a in terms]
    desc = "+".join(f"{a:.3g}Y{l},{m}" for l, m, a in applied) or "0"
    return from_coeffs(HarmonicCoeffs(n, L, perturbation_coeffs(applied, n, L)), g,
                       label=f"perturbed_ball(1+{desc})",
                       meta={"family": "perturbed_ball", "terms": [list(t) for t in applied],
                             "clamped": factor < 1.0, "clamp_factor": factor})


def translate(body: ConvexBody, t) -> ConvexBody:
    """K + t, support h + <t, x>."""
    values = body.coeffs.values + sphere.linear_coeffs(body.n, body.L, t)
    return from_coeffs(HarmonicCoeffs(body.n, body.L, values), body.grid, label=body.label + "+t", meta=body.meta)


def rotate(body: ConvexBody, R) -> ConvexBody:
    """R K, support x -> h(R^T x)."""
    R = np.asarray(R, dtype=float)
    g = body.grid
    H = sphere.harmonics(g, body.L)
    h = H.evaluate(body.coeffs.values, g.nodes @ R)
    return from_samples(h, g, body.L, label=body.label + "@R", meta=body.meta)


def regrid(body: ConvexBody, grid: SphereGrid) -> ConvexBody:
    """Same support coefficients evaluated on another grid."""
    return from_coeffs(body.coeffs, grid, label=body.label, meta=body.meta)


# -- derived quantities -------------------------------------------------------


def gauss_curvature(body: ConvexBody) -> np.ndarray:
    if not body.margin > MARGIN_THRESHOLD:
        raise NotConvexError(body.margin)
    return body.curvature


def cone_volume_density(body: ConvexBody) -> np.ndarray:
    body.require_origin_interior()
    return body.density


def centroid(body: ConvexBody) -> np.ndarray:
    """c(K): the cone-volume weighted mean of the boundary map."""
    body.require_origin_interior()
    g = body.grid
    dV = body.density
    return g.integrate(body.X * dV[:, None]) / g.integrate(dV)


def centered_support(body: ConvexBody, c=None) -> np.ndarray:
    """h - <c, x>, the support function of K - c (c defaults to the centroid)."""
    c = centroid(body) if c is None else np.asarray(c, dtype=float)
    return body.h - body.grid.nodes @ c


def normalize(body: ConvexBody) -> ConvexBody:
    """(K - c(K)) scaled so that its support function has mean 1."""
    c = centroid(body)
    values = body.coeffs.values - sphere.linear_coeffs(body.n, body.L, c)
    values = values / (values[0] / math.sqrt(sphere.AREA[body.n]))
    return from_coeffs(HarmonicCoeffs(body.n, body.L, values), body.grid,
                       label=f"normalized({body.label})", meta=body.meta)


def normalize_residual(body: ConvexBody) -> dict:
    """How far ``normalize`` is from idempotent: |c(K-bar)| and delta_H(K-bar, normalize(K-bar)).

    The centroid of the normalised body need not vanish (for a translated ball
    it is ``-(n+2) c / (n+1)^2`` after scaling), so this is reported, not asserted.
    """
    nb = normalize(body)
    return {"centroid_norm": float(np.linalg.norm(centroid(nb))), "deltaH": deltaH(nb, normalize(nb))}


def _same_grid(b1: ConvexBody, b2: ConvexBody):
    if b1.n != b2.n or not b1.grid.same_as(b2.grid):
        raise ValueError("bodies live on different grids")


def delta2(b1: ConvexBody, b2: ConvexBody) -> float:
    """Root mean square of the support difference."""
    _same_grid(b1, b2)
    return float(math.sqrt(b1.grid.mean((b1.h - b2.h) ** 2)))


def deltaH(b1: ConvexBody, b2: ConvexBody) -> float:
    """Hausdorff distance, sup of the support difference over the nodes."""
    _same_grid(b1, b2)
    return float(np.max(np.abs(b1.h - b2.h)))


def width(h: np.ndarray, grid: SphereGrid) -> np.ndarray:
    return h + h[grid.antipode]


def diameter(body: ConvexBody) -> float:
    return float(np.max(width(body.h, body.grid)))


def union_diameter(b1: ConvexBody, b2: ConvexBody) -> float:
    """Diameter of K1 u K2 (the support of the convex hull is the pointwise max)."""
    _same_grid(b1, b2)
    return float(np.max(width(np.maximum(b1.h, b2.h), b1.grid)))


@dataclass
class BodySummary:
    volume: float
    cone_volume_total: float
    centroid: np.ndarray
    density_min: float
    density_max: float
    eps: float
    mean_support: float
    centered_max: float
    centered_min: float
    margin: float

    def as_dict(self):
        d = dict(self.__dict__)
        d["centroid"] = [float(v) for v in self.centroid]
        return d


def summarize(body: ConvexBody) -> BodySummary:
    body.require_origin_interior()
    g = body.grid
    dens = body.density
    total = float(g.integrate(dens))
    c = centroid(body)
    ht = centered_support(body, c)
    m, M = float(dens.min()), float(dens.max())
    return BodySummary(
        volume=total / (body.n + 1),
        cone_volume_total=total,
        centroid=c,
        density_min=m,
        density_max=M,
        eps=M / m - 1.0,
        mean_support=float(g.mean(body.h)),
        centered_max=float(ht.max()),
        centered_min=float(ht.min()),
        margin=body.margin,
    )


# -- serialization ------------------------------------------------------------

BODY_SCHEMA = "conevol.body/1"


def body_to_dict(body: ConvexBody) -> dict:
    return {
        "schema": BODY_SCHEMA,
        "dimension": body.n,
        "degree": body.L,
        "resolution": list(body.grid.resolution),
        "label": body.label,
        "meta": body.meta,
        "coefficients": [float(v) for v in body.coeffs.values],
    }


def body_from_dict(d: dict) -> ConvexBody:
    if d.get("schema") != BODY_SCHEMA:
        raise ValueError(f"unsupported body schema {d.get('schema')!r}")
    n, L = int(d["dimension"]), int(d["degree"])
    coeffs = HarmonicCoeffs(n, L, np.array(d["coefficients"], dtype=float))
    res = d.get("resolution")
    grid = sphere._cached_grid(n, tuple(res)) if res else sphere.default_grid(n, L)
    return from_coeffs(coeffs, grid, label=d.get("label", ""), meta=d.get("meta") or {})


def dumps(body: ConvexBody) -> str:
    return json.dumps(body_to_dict(body), indent=1, sort_keys=True)


def loads(text: str) -> ConvexBody:
    return body_from_dict(json.loads(text))
