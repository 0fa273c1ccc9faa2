"""Seeded generation of body corpora and their on-disk layout.

A corpus directory holds one ``<id>.json`` body file per body and a
``manifest.json`` listing every body with its family, parameters and
convexity margin.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import body as bodies
from . import sphere

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "conevol.manifest/1"


class CorpusError(Exception):
    """A corpus directory is missing or holds an unreadable body file."""


def default_families(n: int) -> list[dict]:
    """Mixed 50-body corpus used by the acceptance suite."""
    return [
        {"family": "ball", "count": 3, "radius": [0.7, 1.4]},
        {"family": "translated_ball", "count": 10, "offset": [0.0, 0.5]},
        {"family": "ellipsoid", "count": 10, "semiaxis": [0.8, 1.5]},
        {"family": "perturbed_ball", "count": 12, "terms": 3, "max_degree": 6, "amplitude": [0.05, 0.4]},
        {"family": "perturbed_ball", "count": 15, "terms": 2, "max_degree": 4, "amplitude": [0.002, 0.03]},
    ]


def _uniform(rng, bounds):
    lo, hi = bounds
    return float(rng.uniform(lo, hi))


def _draw(spec: dict, rng: np.random.Generator, n: int, L: int, grid) -> list[bodies.ConvexBody]:
    fam = spec["family"]
    values = spec.get("values")
    count = len(values) if values is not None else int(spec.get("count", 0))
    out = []
    for k in range(count):
        v = values[k] if values is not None else None
        if fam == "ball":
            r = float(v) if v is not None else _uniform(rng, spec.get("radius", [0.7, 1.4]))
            out.append(bodies.make_ball(r, n, L, grid=grid))
        elif fam == "translated_ball":
            if v is not None:
                c = np.asarray(v, dtype=float)
            else:
                d = rng.standard_normal(n + 1)
                c = d / np.linalg.norm(d) * _uniform(rng, spec.get("offset", [0.0, 0.5]))
            out.append(bodies.make_translated_ball(c, n, L, grid=grid))
        elif fam == "ellipsoid":
            if v is not None:
                a = np.atleast_1d(np.asarray(v, dtype=float))
                if a.size == 1:  # a single value fixes the first semi-axis, the rest are 1
                    a = np.concatenate([a, np.ones(n)])
            else:
                a = np.array([_uniform(rng, spec.get("semiaxis", [0.8, 1.5])) for _ in range(n + 1)])
            out.append(bodies.make_ellipsoid(a, L, grid=grid))
        elif fam == "perturbed_ball":
            if v is not None:
                terms = [tuple(t) for t in v]
            else:
                terms = []
                for _ in range(int(spec.get("terms", 3))):
                    l = int(rng.integers(1, int(spec.get("max_degree", 6)) + 1))
                    m = int(rng.integers(-l, l + 1)) if n == 2 else int(rng.choice([-l, l]))
                    amp = _uniform(rng, spec.get("amplitude", [0.05, 0.4])) * rng.choice([-1.0, 1.0])
                    terms.append((l, m, amp))
            out.append(bodies.make_perturbed_ball(terms, n, L, grid=grid, clamp=True))
        else:
            raise ValueError(f"unknown body family {fam!r}")
    return out


@dataclass
class CorpusSpec:
    dimension: int = 2
    degree: int = sphere.DEFAULT_DEGREE
    seed: int = 42
    families: list | None = None

    def resolved_families(self):
        return default_families(self.dimension) if self.families is None else self.families


def generate(spec: CorpusSpec) -> list[tuple[str, bodies.ConvexBody]]:
    rng = np.random.default_rng(spec.seed)
    grid = sphere.default_grid(spec.dimension, spec.degree)
    items = []
    for fam in spec.resolved_families():
        for b in _draw(fam, rng, spec.dimension, spec.degree, grid):
            items.append((f"{len(items):03d}_{fam['family']}", b))
    return items


def write_corpus(items, directory: Path, spec: CorpusSpec) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for bid, b in items:
        fname = f"{bid}.json"
        (directory / fname).write_text(bodies.dumps(b) + "\n")
        entries.append({
            "id": bid,
            "file": fname,
            "family": b.meta.get("family", ""),
            "label": b.label,
            "params": {k: v for k, v in b.meta.items() if k != "family"},
            "margin": b.margin,
            "clamped": bool(b.meta.get("clamped", False)),
        })
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "dimension": spec.dimension,
        "degree": spec.degree,
        "seed": spec.seed,
        "families": spec.resolved_families(),
        "bodies": entries,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def manifest_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_corpus(directory: Path) -> list[tuple[str, bodies.ConvexBody]]:
    """Read every body listed in the manifest; raises :class:`CorpusError` naming a bad file."""
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise CorpusError(f"no corpus manifest at {mpath}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise CorpusError(f"corrupt manifest {mpath}: {exc}") from exc
    items = []
    for entry in manifest.get("bodies", []):
        path = directory / entry["file"]
        try:
            b = bodies.loads(path.read_text())
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CorpusError(f"cannot load body file {path}: {exc}") from exc
        items.append((entry["id"], b))
    return items
