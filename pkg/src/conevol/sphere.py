"""Quadrature grids, real harmonic transforms and covariant derivatives on S^1 and S^2.

Fields on a grid are plain numpy arrays indexed by node:

* scalar field: shape ``(N,)``
* tangent field: frame components, shape ``(N, n)``
* ambient vector field: shape ``(N, n + 1)``
* symmetric tensor field: frame components, shape ``(N, n, n)``

Harmonic coefficients are stored flat.  On S^1 the index of ``cos(l t)`` is
``2l - 1`` and of ``sin(l t)`` is ``2l`` (index 0 is the constant).  On S^2 the
real harmonic ``Y_lm`` sits at ``l*l + l + m``; ``m > 0`` carries ``cos(m phi)``,
``m < 0`` carries ``sin(|m| phi)``.  Both bases are orthonormal with respect to
the surface measure and carry no Condon-Shortley phase.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_DEGREE = 32

AREA = {1: 2.0 * math.pi, 2: 4.0 * math.pi}


class BandLimitWarning(UserWarning):
    """Raised (as a warning) when a sampled field is not resolved at the requested degree."""


def basis_size(n: int, L: int) -> int:
    _check_dim(n)
    return 2 * L + 1 if n == 1 else (L + 1) ** 2


def harmonic_index(n: int, l: int, m: int) -> int:
    """Flat index of the (degree, order) basis element."""
    if abs(m) > l or (n == 1 and l > 0 and abs(m) != l):
        raise ValueError(f"invalid order {m} for degree {l} on S^{n}")
    if n == 1:
        if l == 0:
            return 0
        return 2 * l - 1 if m > 0 else 2 * l
    return l * l + l + m


def degrees(n: int, L: int) -> np.ndarray:
    """Degree of each flat coefficient slot."""
    if n == 1:
        return np.concatenate([[0], np.repeat(np.arange(1, L + 1), 2)])
    return np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])


def _check_dim(n):
    if n not in (1, 2):
        raise ValueError(f"only S^1 and S^2 are supported, got n={n}")


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Antipodally symmetric quadrature grid on S^n.

    For n=1 the nodes are equally spaced angles.  For n=2 they are
    Gauss-Legendre latitudes (in cos of the polar angle) times equally spaced
    longitudes, stored latitude-major.
    """

    n: int
    resolution: tuple[int, ...]
    nodes: np.ndarray
    weights: np.ndarray
    frame: np.ndarray
    colat: np.ndarray = field(repr=False)
    lon: np.ndarray = field(repr=False)
    lat_weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def area(self) -> float:
        return AREA[self.n]

    @property
    def capacity(self) -> int:
        """Largest degree L whose transform pair is exact on this grid."""
        if self.n == 1:
            return (self.resolution[0] - 1) // 2
        nlat, nlon = self.resolution
        return min(nlat - 1, (nlon - 1) // 2)

    @cached_property
    def antipode(self) -> np.ndarray:
        if self.n == 1:
            N = self.resolution[0]
            return (np.arange(N) + N // 2) % N
        nlat, nlon = self.resolution
        i, j = np.divmod(np.arange(self.size), nlon)
        return (nlat - 1 - i) * nlon + (j + nlon // 2) % nlon

    @property
    def key(self) -> tuple:
        return (self.n, self.resolution)

    def integrate(self, f) -> float | np.ndarray:
        """Quadrature of a field against the surface measure.

        Extra trailing axes (vector or matrix valued fields) are integrated
        componentwise.
        """
        f = np.asarray(f, dtype=float)
        if f.shape[:1] != (self.size,):
            raise ValueError(f"field with leading shape {f.shape[:1]} does not live on a grid of {self.size} nodes")
        w = self.weights.reshape((-1,) + (1,) * (f.ndim - 1))
        return np.sum(w * f, axis=0)

    def mean(self, f):
        return self.integrate(f) / self.area

    def same_as(self, other: "SphereGrid") -> bool:
        return self is other or self.key == other.key

    def to_ambient(self, tangent: np.ndarray) -> np.ndarray:
        """Frame components ``(N, n)`` to ambient vectors ``(N, n+1)``."""
        return np.einsum("ka,kai->ki", tangent, self.frame)

    def to_frame(self, ambient: np.ndarray) -> np.ndarray:
        return np.einsum("ki,kai->ka", ambient, self.frame)


def build_grid(n: int, resolution, degree: int | None = None) -> SphereGrid:
    """Build a quadrature grid.

    ``resolution`` is a node count for n=1 and ``(nlat, nlon)`` for n=2.
    If ``degree`` is given the grid must be able to resolve it exactly.
    """
    _check_dim(n)
    if n == 1:
        N = int(np.atleast_1d(resolution)[0])
        if N < 2 or N % 2:
            raise ValueError(f"circle grids need an even node count >= 2, got {N}")
        t = 2.0 * np.pi * np.arange(N) / N
        c, s = np.cos(t), np.sin(t)
        nodes = np.stack([c, s], axis=1)
        frame = np.stack([-s, c], axis=1)[:, None, :]
        weights = np.full(N, 2.0 * np.pi / N)
        grid = SphereGrid(1, (N,), nodes, weights, frame, t, t, weights)
    else:
        nlat, nlon = (int(r) for r in resolution)
        if nlat < 1 or nlon < 2 or nlon % 2:
            raise ValueError(f"sphere grids need nlat >= 1 and an even nlon >= 2, got {nlat}x{nlon}")
        z, wz = np.polynomial.legendre.leggauss(nlat)
        # enforce exact mirror symmetry so antipodal pairs are bitwise antipodal
        z = 0.5 * (z - z[::-1])
        wz = 0.5 * (wz + wz[::-1])
        # descending z: colatitude increases with the latitude index
        z, wz = z[::-1].copy(), wz[::-1].copy()
        theta = np.arccos(z)
        st = np.sqrt((1.0 - z) * (1.0 + z))
        phi = 2.0 * np.pi * np.arange(nlon) / nlon
        cp, sp = np.cos(phi), np.sin(phi)
        Z, CP = np.meshgrid(z, cp, indexing="ij")
        ST, SP = np.meshgrid(st, sp, indexing="ij")
        nodes = np.stack([ST * CP, ST * SP, Z], axis=-1).reshape(-1, 3)
        e_theta = np.stack([Z * CP, Z * SP, -ST], axis=-1).reshape(-1, 3)
        e_phi = np.stack([-SP, CP, np.zeros_like(CP)], axis=-1).reshape(-1, 3)
        frame = np.stack([e_theta, e_phi], axis=1)
        weights = np.outer(wz, np.full(nlon, 2.0 * np.pi / nlon)).ravel()
        grid = SphereGrid(2, (nlat, nlon), nodes, weights, frame, theta, phi, wz)
    if degree is not None and degree > grid.capacity:
        raise ValueError(
            f"grid {grid.resolution} resolves degree <= {grid.capacity}, "
            f"below the Nyquist requirement for degree {degree}"
        )
    return grid


def default_resolution(n: int, L: int) -> tuple[int, ...]:
    """Oversampled resolution used throughout: products of three degree-L fields integrate exactly."""
    _check_dim(n)
    if n == 1:
        return (4 * (L + 1),)
    nlat = 3 * L // 2 + 3
    if nlat % 2 == 0:
        nlat += 1  # odd count puts a latitude on the equator
    return (nlat, 2 * nlat)


def default_grid(n: int, L: int = DEFAULT_DEGREE) -> SphereGrid:
    return _cached_grid(n, default_resolution(n, L))


_GRIDS: dict = {}
_TRANSFORMS: dict = {}


def _cached_grid(n, resolution):
    key = (n, tuple(resolution))
    if key not in _GRIDS:
        _GRIDS[key] = build_grid(n, resolution)
    return _GRIDS[key]


def _legendre(theta: np.ndarray, L: int):
    """Fully normalized associated Legendre functions and their theta derivatives.

    Returns three arrays of shape ``(len(theta), L+1, L+1)`` indexed by
    ``[node, m, l]`` (zero where l < m).  Normalization: the l,m=0 function
    squared integrates to 1 over S^2.
    """
    x = np.cos(theta)
    s = np.sin(theta)
    K = theta.shape[0]
    P = np.zeros((K, L + 1, L + 1))
    dP = np.zeros_like(P)
    pmm = np.full(K, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(L + 1):
        if m > 0:
            pmm = math.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
        P[:, m, m] = pmm
        if m + 1 <= L:
            P[:, m, m + 1] = math.sqrt(2 * m + 3) * x * pmm
        for l in range(m + 2, L + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[:, m, l] = a * (x * P[:, m, l - 1] - b * P[:, m, l - 2])
    inv_s = 1.0 / s
    for m in range(L + 1):
        for l in range(m, L + 1):
            e = math.sqrt((2.0 * l + 1.0) / (2.0 * l - 1.0) * (l * l - m * m)) if l > m else 0.0
            lower = P[:, m, l - 1] if l > m else 0.0
            dP[:, m, l] = (l * x * P[:, m, l] - e * lower) * inv_s
    ll = np.arange(L + 1)
    mm = np.arange(L + 1)
    lam = (ll * (ll + 1))[None, None, :] - (mm**2)[None, :, None] * (inv_s**2)[:, None, None]
    d2P = -(x * inv_s)[:, None, None] * dP - lam * P
    mask = (ll[None, :] >= mm[:, None])[None]
    return P * mask, dP * mask, d2P * mask


def _trig(phi: np.ndarray, L: int):
    m = np.arange(L + 1)
    arg = np.outer(phi, m)
    return np.cos(arg), np.sin(arg)


@dataclass
class Derivatives:
    """Spectral derivatives of a scalar field up to second order."""

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    band_residual: float = 0.0

    @property
    def laplacian(self) -> np.ndarray:
        return np.trace(self.hessian, axis1=1, axis2=2)


class Harmonics:
    """Dense real-harmonic transform pair of degree ``L`` on a fixed grid."""

    def __init__(self, grid: SphereGrid, L: int):
        if L < 0:
            raise ValueError("degree must be non-negative")
        if L > grid.capacity:
            raise ValueError(
                f"degree {L} exceeds grid capacity {grid.capacity} for resolution {grid.resolution}"
            )
        self.grid = grid
        self.n = grid.n
        self.L = L
        self.size = basis_size(grid.n, L)
        if self.n == 1:
            t = grid.colat
            k = np.arange(1, L + 1)
            c, s = np.cos(np.outer(t, k)), np.sin(np.outer(t, k))
            B = np.empty((grid.size, self.size))
            dB = np.empty_like(B)
            d2B = np.empty_like(B)
            B[:, 0] = 1.0 / math.sqrt(2.0 * math.pi)
            dB[:, 0] = d2B[:, 0] = 0.0
            r = 1.0 / math.sqrt(math.pi)
            B[:, 1::2], B[:, 2::2] = r * c, r * s
            dB[:, 1::2], dB[:, 2::2] = -r * k * s, r * k * c
            d2B[:, 1::2], d2B[:, 2::2] = -r * k**2 * c, -r * k**2 * s
            self._B, self._dB, self._d2B = B, dB, d2B
        else:
            nlat, nlon = grid.resolution
            self._P, self._dP, self._d2P = _legendre(grid.colat, L)
            self._cos, self._sin = _trig(grid.lon, L)
            self._m = np.arange(L + 1)
            st = np.sin(grid.colat)
            self._inv_s = 1.0 / st
            self._cot = np.cos(grid.colat) / st
            ls = np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])
            ms = np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])
            self._l_idx = ls
            self._m_idx = ms

    # -- coefficient layout helpers (S^2) -------------------------------
    def _split(self, coeffs):
        """Flat coefficients to cos/sin blocks indexed [m, l], sqrt(2) folded in."""
        L = self.L
        A = np.zeros((L + 1, L + 1))
        S = np.zeros((L + 1, L + 1))
        ls, ms = self._l_idx, self._m_idx
        pos = ms >= 0
        scale = np.where(ms == 0, 1.0, math.sqrt(2.0))
        A[ms[pos], ls[pos]] = coeffs[pos] * scale[pos]
        neg = ~pos
        S[-ms[neg], ls[neg]] = coeffs[neg] * scale[neg]
        return A, S

    def _merge(self, A, S):
        ls, ms = self._l_idx, self._m_idx
        out = np.empty(self.size)
        pos = ms >= 0
        scale = np.where(ms == 0, 1.0, math.sqrt(2.0))
        out[pos] = A[ms[pos], ls[pos]] * scale[pos]
        neg = ~pos
        out[neg] = S[-ms[neg], ls[neg]] * scale[neg]
        return out

    def _check_coeffs(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.size,):
            raise ValueError(f"expected {self.size} coefficients for degree {self.L}, got shape {coeffs.shape}")
        return coeffs

    def _check_field(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape != (self.grid.size,):
            raise ValueError(f"field of shape {f.shape} does not match grid of {self.grid.size} nodes")
        return f

    # -- transforms --------------------------------------------------------
    def synthesize(self, coeffs) -> np.ndarray:
        coeffs = self._check_coeffs(coeffs)
        if self.n == 1:
            return self._B @ coeffs
        A, S = self._split(coeffs)
        Gc = np.einsum("iml,ml->im", self._P, A)
        Gs = np.einsum("iml,ml->im", self._P, S)
        return (Gc @ self._cos.T + Gs @ self._sin.T).ravel()

    def analyze(self, f) -> np.ndarray:
        f = self._check_field(f)
        g = self.grid
        if self.n == 1:
            return self._B.T @ (g.weights * f)
        nlat, nlon = g.resolution
        F = f.reshape(nlat, nlon) * (2.0 * np.pi / nlon)
        Fc = F @ self._cos
        Fs = F @ self._sin
        wl = g.lat_weights[:, None, None]
        A = np.einsum("iml,im->ml", wl * self._P, Fc)
        S = np.einsum("iml,im->ml", wl * self._P, Fs)
        return self._merge(A, S)

    def band_residual(self, f) -> float:
        """Sup-norm of what the degree-L projection misses, relative to the field."""
        f = self._check_field(f)
        scale = max(np.max(np.abs(f)), 1e-300)
        return float(np.max(np.abs(self.synthesize(self.analyze(f)) - f)) / scale)

    def evaluate(self, coeffs, points) -> np.ndarray:
        """Evaluate an expansion at arbitrary unit vectors ``points`` of shape ``(K, n+1)``."""
        coeffs = self._check_coeffs(coeffs)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.n == 1:
            t = np.arctan2(points[:, 1], points[:, 0])
            k = np.arange(1, self.L + 1)
            r = 1.0 / math.sqrt(math.pi)
            B = np.empty((len(t), self.size))
            B[:, 0] = 1.0 / math.sqrt(2.0 * math.pi)
            B[:, 1::2] = r * np.cos(np.outer(t, k))
            B[:, 2::2] = r * np.sin(np.outer(t, k))
            return B @ coeffs
        z = np.clip(points[:, 2], -1.0, 1.0)
        theta = np.arccos(z)
        phi = np.arctan2(points[:, 1], points[:, 0])
        P = _legendre_values(theta, self.L)
        c, s = _trig(phi, self.L)
        A, S = self._split(coeffs)
        Gc = np.einsum("iml,ml->im", P, A)
        Gs = np.einsum("iml,ml->im", P, S)
        return np.sum(Gc * c + Gs * s, axis=1)

    def derivatives(self, coeffs) -> Derivatives:
        """Value, frame gradient and covariant Hessian of an expansion at the nodes."""
        coeffs = self._check_coeffs(coeffs)
        N = self.grid.size
        if self.n == 1:
            val = self._B @ coeffs
            grad = (self._dB @ coeffs)[:, None]
            hess = (self._d2B @ coeffs)[:, None, None]
            return Derivatives(val, grad, hess)
        nlat, nlon = self.grid.resolution
        A, S = self._split(coeffs)
        m = self._m
        C, Sn = self._cos, self._sin
        P, dP, d2P = self._P, self._dP, self._d2P

        def block(Pm, Ac, As, dphi=0):
            Gc = np.einsum("iml,ml->im", Pm, Ac)
            Gs = np.einsum("iml,ml->im", Pm, As)
            if dphi == 0:
                return Gc @ C.T + Gs @ Sn.T
            if dphi == 1:
                return (Gs * m) @ C.T - (Gc * m) @ Sn.T
            return -((Gc * m**2) @ C.T + (Gs * m**2) @ Sn.T)

        f = block(P, A, S)
        f_t = block(dP, A, S)
        f_tt = block(d2P, A, S)
        f_p = block(P, A, S, 1)
        f_tp = block(dP, A, S, 1)
        f_pp = block(P, A, S, 2)
        inv_s = self._inv_s[:, None]
        cot = self._cot[:, None]
        grad = np.stack([f_t, f_p * inv_s], axis=-1).reshape(N, 2)
        h_tt = f_tt
        h_tp = (f_tp - cot * f_p) * inv_s
        h_pp = f_pp * inv_s**2 + cot * f_t
        hess = np.stack([np.stack([h_tt, h_tp], -1), np.stack([h_tp, h_pp], -1)], -2).reshape(N, 2, 2)
        return Derivatives(f.ravel(), grad, hess)


def _legendre_values(theta, L):
    """Values only, for evaluation at arbitrary points (poles allowed)."""
    x = np.cos(theta)
    s = np.sin(theta)
    K = theta.shape[0]
    P = np.zeros((K, L + 1, L + 1))
    pmm = np.full(K, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(L + 1):
        if m > 0:
            pmm = math.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
        P[:, m, m] = pmm
        if m + 1 <= L:
            P[:, m, m + 1] = math.sqrt(2 * m + 3) * x * pmm
        for l in range(m + 2, L + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[:, m, l] = a * (x * P[:, m, l - 1] - b * P[:, m, l - 2])
    return P


def harmonics(grid: SphereGrid, L: int) -> Harmonics:
    """Cached transform for ``(grid, L)``."""
    key = (grid.key, L)
    if key not in _TRANSFORMS:
        _TRANSFORMS[key] = Harmonics(grid, L)
    return _TRANSFORMS[key]


# -- functional API ---------------------------------------------------------


def integrate(f, grid: SphereGrid):
    return grid.integrate(f)


def analyze(f, grid: SphereGrid, L: int) -> np.ndarray:
    return harmonics(grid, L).analyze(f)


def synthesize(coeffs, grid: SphereGrid, L: int | None = None) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if L is None:
        L = degree_of(grid.n, coeffs.size)
    return harmonics(grid, L).synthesize(coeffs)


def degree_of(n: int, count: int) -> int:
    L = (count - 1) // 2 if n == 1 else math.isqrt(count) - 1
    if basis_size(n, L) != count:
        raise ValueError(f"{count} coefficients is not a complete real harmonic basis on S^{n}")
    return L


def differentiate(f, grid: SphereGrid, L: int | None = None, band_tol: float = 1e-10) -> Derivatives:
    """Spectral first and second covariant derivatives of a sampled field.

    The field is projected to degree ``L`` (two thirds of the grid capacity by
    default; at full capacity the projection nearly interpolates the nodes and
    hides aliasing).  When the projection misses more than ``band_tol``
    (relative sup norm) a :class:`BandLimitWarning` is issued and the residual
    is kept on the result.
    """
    H = harmonics(grid, 2 * grid.capacity // 3 if L is None else L)
    coeffs = H.analyze(f)
    out = H.derivatives(coeffs)
    resid = float(np.max(np.abs(out.value - f)) / max(np.max(np.abs(f)), 1e-300))
    out.band_residual = resid
    if resid > band_tol:
        warnings.warn(
            f"field is not band-limited at degree {H.L}: relative projection residual {resid:.2e}",
            BandLimitWarning,
            stacklevel=2,
        )
    return out


def gradient(f, grid: SphereGrid, L: int | None = None) -> np.ndarray:
    return differentiate(f, grid, L).gradient


def covariant_hessian(f, grid: SphereGrid, L: int | None = None) -> np.ndarray:
    return differentiate(f, grid, L).hessian


def laplace_beltrami(f, grid: SphereGrid, L: int | None = None) -> np.ndarray:
    return differentiate(f, grid, L).laplacian


def linear_coeffs(n: int, L: int, c) -> np.ndarray:
    """Exact coefficients of x -> <c, x> (degree-one harmonics only)."""
    c = np.asarray(c, dtype=float)
    out = np.zeros(basis_size(n, L))
    if L < 1:
        raise ValueError("linear functions need degree >= 1")
    if n == 1:
        out[1], out[2] = math.sqrt(math.pi) * c[0], math.sqrt(math.pi) * c[1]
    else:
        k = math.sqrt(4.0 * math.pi / 3.0)
        out[3], out[1], out[2] = k * c[0], k * c[1], k * c[2]
    return out


def linear_function(grid: SphereGrid, c) -> np.ndarray:
    """Samples of x -> <c, x>."""
    return grid.nodes @ np.asarray(c, dtype=float)
