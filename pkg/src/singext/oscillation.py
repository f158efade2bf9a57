"""Truncated mean oscillation and its sharp variant on the half-space.

Both are evaluated on a deterministic cell-centered stencil inside the ball
B(x', x_{m+1}): points of a regular grid of spacing x_{m+1}/resolution.  The
stencil is a fixed discrete measure, so the truncation and sharp-comparison
inequalities hold exactly (to roundoff) whenever both sides share it.

Evaluators are duck-typed: anything exposing `manifold` and
`values_at(points) -> (..., nu)` works, not just BoundaryMap.
"""

from typing import NamedTuple

import numpy as np

from .errors import ConfigError


class HalfSpacePoint(NamedTuple):
    """Point (x', x_{m+1}) of the open upper half-space."""

    x_prime: tuple
    height: float


def _as_point(x) -> tuple[np.ndarray, float]:
    if isinstance(x, HalfSpacePoint):
        xp, h = np.atleast_1d(np.asarray(x.x_prime, dtype=float)), float(x.height)
    else:
        xp, h = np.atleast_1d(np.asarray(x[0], dtype=float)), float(x[1])
    if h <= 0:
        raise ConfigError("half-space points need positive height")
    return xp, h


_STENCILS: dict = {}


def unit_ball_stencil(m: int, resolution: int) -> np.ndarray:
    """Cell centers of spacing 1/resolution strictly inside the unit ball, (P, m)."""
    key = (m, resolution)
    if key not in _STENCILS:
        s = resolution
        axis = (np.arange(-s, s) + 0.5) / s
        if m == 1:
            pts = axis[:, None]
        else:
            gx, gy = np.meshgrid(axis, axis, indexing="ij")
            pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
            pts = pts[np.sum(pts**2, axis=-1) < 1.0]
        _STENCILS[key] = pts
    return _STENCILS[key]


def stencil_values(u, x_prime: np.ndarray, height: float,
                   resolution: int) -> np.ndarray:
    """Values of u on the ball stencil around (x', height), shape (P, nu)."""
    offs = unit_ball_stencil(len(x_prime), resolution)
    pts = x_prime[None, :] + height * offs
    return u.values_at(pts if len(x_prime) > 1 else pts[:, 0])


def _pair_dist(vals: np.ndarray) -> np.ndarray:
    gram = np.clip(vals @ vals.T, -1.0, 1.0)
    d = np.arccos(gram)
    np.fill_diagonal(d, 0.0)
    return d


def mo(u, x, delta: float, p: float, resolution: int) -> float:
    """Truncated mean oscillation: pair average of (d(u(y),u(z)) - delta)_+^p."""
    if delta < 0 or p < 1:
        raise ConfigError("need delta >= 0 and p >= 1")
    xp, h = _as_point(x)
    d = _pair_dist(stencil_values(u, xp, h, resolution))
    return float(np.mean(np.clip(d - delta, 0.0, None) ** p))


def mo_sharp(u, x, delta: float, p: float, resolution: int) -> float:
    """Sharp variant: inf over stencil anchors z of the y-average.

    The inf ranges over stencil points only (a subset of the continuum inf
    domain), which overestimates the sharp oscillation; that direction only
    strengthens the comparison mo <= 2^p mo_sharp(delta/2).
    """
    if delta < 0 or p < 1:
        raise ConfigError("need delta >= 0 and p >= 1")
    xp, h = _as_point(x)
    d = _pair_dist(stencil_values(u, xp, h, resolution))
    return float(np.min(np.mean(np.clip(d - delta, 0.0, None) ** p, axis=0)))


def mo_batch(u, x_primes: np.ndarray, heights: np.ndarray, delta: float,
             p: float, resolution: int, chunk: int = 256) -> np.ndarray:
    """mo at many half-space points; x_primes (B, m), heights (B,)."""
    x_primes = np.atleast_2d(np.asarray(x_primes, dtype=float))
    heights = np.asarray(heights, dtype=float)
    if np.any(heights <= 0):
        raise ConfigError("half-space points need positive height")
    m = x_primes.shape[1]
    offs = unit_ball_stencil(m, resolution)
    out = np.empty(len(heights))
    for lo in range(0, len(heights), chunk):
        hi = min(lo + chunk, len(heights))
        pts = (x_primes[lo:hi, None, :]
               + heights[lo:hi, None, None] * offs[None, :, :])
        vals = u.values_at(pts if m > 1 else pts[..., 0])
        gram = np.clip(np.einsum("bpv,bqv->bpq", vals, vals), -1.0, 1.0)
        d = np.arccos(gram)
        idx = np.arange(d.shape[1])
        d[:, idx, idx] = 0.0
        out[lo:hi] = np.mean(np.clip(d - delta, 0.0, None) ** p, axis=(1, 2))
    return out
