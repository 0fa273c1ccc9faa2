"""Damped fixed-point solver for h^(1-p) / K = f on S^1 and S^2.

The unknown is ``u = log h``.  One step is

    u <- u - dt * P r,    r = log(h^(1-p) / (f K)),

followed by projection of ``h = exp(u)`` back to degree ``L``.  ``P`` is the
inverse of the linearisation of ``r`` at the unit ball, which is diagonal in
the harmonic basis with entries ``n + 1 - p - l(l + n - 1)``.  These never vanish
for ``-(n+1) < p < 1``.  Without ``P`` the step is a backward heat equation
in the high degrees.  Step sizes shrink when the sup norm of ``r`` does not
decrease or the convexity margin drops below the guard; if no step size works,
the backtracking is retried with eigenvalues floored in magnitude.  The
degree-2 eigenvalue -(n+1) - p vanishes as p -> -(n+1), so runs there can
creep; a run stops as "stagnated" when the residual falls by less than
``stagnation_drop`` over ``stagnation_window`` iterations.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import body as bodies
from . import sphere
from .body import ConvexBody, HarmonicCoeffs

log = logging.getLogger(__name__)

DEFAULT_TOL = {1: 1e-9, 2: 1e-8}
GUARD_MARGIN = 1e-6


@dataclass
class SolverConfig:
    p: float
    init: ConvexBody
    f: np.ndarray | None = None
    dt0: float = 1.0
    shrink: float = 0.5
    grow: float = 2.0
    tol: float | None = None
    max_iter: int = 5_000
    guard: float = GUARD_MARGIN
    min_dt: float = 1e-6
    floors: tuple = (1.0, 10.0)
    stagnation_window: int = 200
    stagnation_drop: float = 0.01

    def __post_init__(self):
        n = self.init.n
        if not (-(n + 1) < self.p < 1):
            raise ValueError(f"p={self.p} must lie strictly inside (-{n + 1}, 1)")
        if self.f is None:
            self.f = np.ones(self.init.grid.size)
        self.f = np.asarray(self.f, dtype=float)
        if self.f.shape != (self.init.grid.size,):
            raise ValueError("target density must be sampled on the initial body's grid")
        if not np.all(self.f > 0):
            raise ValueError("target density must be positive")
        if not (0.0 < self.dt0 <= 1.0):
            raise ValueError("dt0 must lie in (0, 1]")
        if self.tol is None:
            self.tol = DEFAULT_TOL[n]

    def echo(self) -> dict:
        return {
            "p": self.p, "dt0": self.dt0, "shrink": self.shrink, "grow": self.grow, "tol": self.tol,
            "max_iter": self.max_iter, "guard": self.guard, "min_dt": self.min_dt, "floors": list(self.floors),
            "stagnation_window": self.stagnation_window, "stagnation_drop": self.stagnation_drop,
            "dimension": self.init.n, "degree": self.init.L,
            "f_sup_deviation": float(np.max(np.abs(self.f - 1.0))),
            "init": self.init.label,
        }


@dataclass
class SolverResult:
    body: ConvexBody
    iterations: int
    history: list[float]
    converged: bool
    reason: str = ""
    config: dict = field(default_factory=dict)

    @property
    def final_residual(self) -> float:
        return self.history[-1]

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "converged": self.converged,
            "reason": self.reason,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "history": self.history,
            "body": bodies.body_to_dict(self.body),
        }


def residual(body: ConvexBody, f, p: float) -> np.ndarray:
    """log(h^(1-p) / K) - log f at the nodes."""
    f = np.broadcast_to(np.asarray(f, dtype=float), body.h.shape)
    if body.h.min() <= 0:
        raise ValueError("support function must be positive")
    if f.min() <= 0:
        raise ValueError("target density must be positive")
    return (1.0 - p) * np.log(body.h) + np.log(body.radii_product) - np.log(f)


def ball_linearization(n: int, L: int, p: float) -> np.ndarray:
    """Per-coefficient eigenvalues of the linearised residual at the unit ball."""
    l = sphere.degrees(n, L)
    return (n + 1 - p) - l * (l + n - 1)


def solve(config: SolverConfig) -> SolverResult:
    body = config.init
    g, n, L, p = body.grid, body.n, body.L, config.p
    H = sphere.harmonics(g, L)
    mu = ball_linearization(n, L, p)
    # fallbacks: same signs, eigenvalues floored in magnitude
    precs = [mu] + [np.sign(mu) * np.maximum(np.abs(mu), fl) for fl in config.floors]
    logf = np.log(config.f)

    def res(b):
        return (1.0 - p) * np.log(b.h) + np.log(b.radii_product) - logf

    def attempt(prec, rc, rnorm, dt):
        step = H.synthesize(rc / prec)
        why = "stalled"
        while dt >= config.min_dt:
            h_new = body.h * np.exp(-dt * step)
            trial = bodies.from_coeffs(HarmonicCoeffs(n, L, H.analyze(h_new)), g,
                                       label=body.label, meta=body.meta, check=False)
            if trial.margin < config.guard or trial.h.min() <= 0:
                why = "lost convexity"
            else:
                r_new = res(trial)
                n_new = float(np.max(np.abs(r_new)))
                if n_new < rnorm:
                    return trial, r_new, n_new, dt, ""
                why = "stalled"
            dt *= config.shrink
        return None, None, None, dt, why

    r = res(body)
    rnorm = float(np.max(np.abs(r)))
    history = [rnorm]
    dt = config.dt0
    it = 0
    reason = ""
    w = config.stagnation_window
    while rnorm > config.tol:
        if it >= config.max_iter:
            reason = "max iterations exceeded"
            break
        if w and it >= w and history[-1] > (1.0 - config.stagnation_drop) * history[-1 - w]:
            reason = "stagnated"
            break
        rc = H.analyze(r)
        for prec in precs:
            trial, r_new, n_new, new_dt, why = attempt(prec, rc, rnorm, dt)
            if trial is not None:
                break
        if trial is None:
            reason = why
            break
        body, r, rnorm = trial, r_new, n_new
        it += 1
        history.append(rnorm)
        dt = min(config.dt0, new_dt * config.grow)
        if it % 500 == 0:
            log.debug("iteration %d residual %.3e dt %.2e", it, rnorm, dt)
    converged = rnorm <= config.tol
    return SolverResult(body, it, history, converged, "" if converged else reason, config.echo())


# -- probes ------------------------------------------------------------------------


def unit_ball(n, L, grid=None):
    return bodies.make_ball(1.0, n, L, grid=grid)


def sup_normalized_harmonic(grid: sphere.SphereGrid, L: int, l: int, m: int) -> np.ndarray:
    """Samples of Y_lm scaled to unit sup norm on the grid."""
    e = np.zeros(sphere.basis_size(grid.n, L))
    e[sphere.harmonic_index(grid.n, l, m)] = 1.0
    y = sphere.harmonics(grid, L).synthesize(e)
    return y / np.max(np.abs(y))


def default_inits(n: int, L: int, grid=None) -> list[ConvexBody]:
    """Ball, translated ball and a harmonic perturbation."""
    c = np.zeros(n + 1)
    c[0] = 0.15
    return [
        unit_ball(n, L, grid),
        bodies.make_translated_ball(c, n, L, grid=grid),
        bodies.make_perturbed_ball([(2, 0, 0.1), (3, 1 if n == 2 else 3, 0.05)], n, L, grid=grid),
    ]


@dataclass
class ProbeReport:
    p: float
    f_sup_deviation: float
    results: list[SolverResult]
    distances: list[tuple[int, int, float]]
    max_distance: float
    uniqueness_consistent: bool
    all_converged: bool

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "f_sup_deviation": self.f_sup_deviation,
            "all_converged": self.all_converged,
            "uniqueness_consistent": self.uniqueness_consistent,
            "max_pairwise_deltaH": self.max_distance,
            "pairwise_deltaH": [{"i": i, "j": j, "deltaH": d} for i, j, d in self.distances],
            "starts": [
                {"init": r.config.get("init"), "converged": r.converged, "iterations": r.iterations,
                 "final_residual": r.final_residual, "reason": r.reason}
                for r in self.results
            ],
        }


def uniqueness_probe(f, p: float, inits, **solver_kw) -> ProbeReport:
    """Solve from several starts and compare the converged bodies pairwise."""
    inits = list(inits)
    if len(inits) < 3:
        raise ValueError("a uniqueness probe needs at least three starting bodies")
    results = [solve(SolverConfig(p=p, init=b, f=f, **solver_kw)) for b in inits]
    ok = [r for r in results if r.converged]
    dists = []
    for (i, a), (j, b) in itertools.combinations(enumerate(results), 2):
        d = bodies.deltaH(a.body, b.body) if a.converged and b.converged else math.nan
        dists.append((i, j, d))
    finite = [d for *_, d in dists if not math.isnan(d)]
    dmax = max(finite) if finite else math.nan
    tol = results[0].config["tol"]
    all_conv = len(ok) == len(results)
    f_dev = float(np.max(np.abs(np.asarray(f) - 1.0))) if f is not None else 0.0
    return ProbeReport(p, f_dev, results, dists, dmax, all_conv and dmax <= 10.0 * tol, all_conv)


@dataclass
class SweepRow:
    p: float
    perturbation: str
    converged: bool
    iterations: int
    final_residual: float
    deltaH_to_ball: float
    reason: str = ""


def self_similar_sweep(p_grid, perturbations: dict, n: int = 2, L: int = sphere.DEFAULT_DEGREE,
                       grid=None, **solver_kw) -> list[SweepRow]:
    """Solve K = h^(1-p) from perturbed balls for every (p, perturbation) cell."""
    grid = grid if grid is not None else sphere.default_grid(n, L)
    ball = unit_ball(n, L, grid)
    rows = []
    for p in p_grid:
        for name, terms in perturbations.items():
            try:
                init = bodies.make_perturbed_ball(terms, n, L, grid=grid)
                res = solve(SolverConfig(p=p, init=init, **solver_kw))
                rows.append(SweepRow(p, name, res.converged, res.iterations, res.final_residual,
                                     bodies.deltaH(res.body, ball), res.reason))
            except ValueError as exc:
                rows.append(SweepRow(p, name, False, 0, math.nan, math.nan, str(exc)))
    return rows
