"""Extension by averaging of a boundary map to the half-space, and its gradient.

The mollifier is the polynomial bump (1 - |z|^2)^3, normalized to unit mass.
C^2 smoothness is all the estimates use (one derivative of the bump), and it
avoids evaluating an exponential bump near the support edge.  Discrete stencil
weights are renormalized to sum to exactly 1, and the gradient kernels are
mean-centered (their continuum integrals vanish), so constant maps yield the
far value and a zero gradient exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .oscillation import _as_point, unit_ball_stencil


def bump(z: np.ndarray) -> np.ndarray:
    """Radial profile (1 - |z|^2)^3 on the unit ball (unnormalized here)."""
    r2 = np.sum(np.atleast_2d(z) ** 2, axis=-1)
    return np.where(r2 < 1.0, (1.0 - r2) ** 3, 0.0)


def bump_gradient(z: np.ndarray) -> np.ndarray:
    """Gradient of the unnormalized profile: -6 z (1 - |z|^2)^2."""
    z = np.atleast_2d(z)
    r2 = np.sum(z**2, axis=-1)
    fac = np.where(r2 < 1.0, -6.0 * (1.0 - r2) ** 2, 0.0)
    return z * fac[:, None]


# analytic normalizers of (1-|z|^2)^3: 32/35 on [-1,1], pi/4 on the unit disk
_MASS = {1: 32.0 / 35.0, 2: np.pi / 4.0}


@dataclass(frozen=True)
class Mollifier:
    """Discretized averaging kernel on the unit ball stencil."""

    m: int
    resolution: int

    @property
    def support_radius(self) -> float:
        return 1.0

    def normalizer(self) -> float:
        return 1.0 / _MASS[self.m]

    def stencil(self) -> np.ndarray:
        return unit_ball_stencil(self.m, self.resolution)

    def weights(self) -> np.ndarray:
        """Averaging weights; sum to 1 exactly by construction."""
        z = self.stencil()
        w = bump(z)
        return w / np.sum(w)

    def gradient_kernels(self) -> tuple[np.ndarray, np.ndarray]:
        """(horizontal kernels (m, P), vertical kernel (P,)), mean-centered.

        Horizontal row k discretizes D_k(phi); the vertical kernel discretizes
        m*phi + z . D(phi) = div(z phi).  Both integrate to zero in the
        continuum; centering makes that exact on the stencil.
        """
        z = self.stencil()
        h = (1.0 / self.resolution) ** self.m
        c = self.normalizer()
        g = (bump_gradient(z) * c * h).T
        g = g - np.mean(g, axis=1, keepdims=True)
        gv = (self.m * bump(z) + np.sum(z * bump_gradient(z), axis=-1)) * c * h
        gv = gv - np.mean(gv)
        return g, gv

    def unit_mass_defect(self) -> float:
        """|discrete integral of phi - 1| under the module's quadrature."""
        return abs(float(np.sum(self.weights())) - 1.0)


def _stencil_points(x_primes, heights, stencil):
    pts = (x_primes[:, None, :] + heights[:, None, None] * (-stencil)[None, :, :])
    return pts


def extend_batch(u, x_primes: np.ndarray, heights: np.ndarray,
                 resolution: int) -> np.ndarray:
    """V at many half-space points: integral of u(x' - t z) phi(z) dz."""
    x_primes = np.atleast_2d(np.asarray(x_primes, dtype=float))
    heights = np.asarray(heights, dtype=float)
    if np.any(heights <= 0):
        raise ConfigError("half-space points need positive height")
    m = x_primes.shape[1]
    moll = Mollifier(m, resolution)
    z, w = moll.stencil(), moll.weights()
    pts = _stencil_points(x_primes, heights, z)
    vals = u.values_at(pts if m > 1 else pts[..., 0])
    return np.einsum("p,bpv->bv", w, vals)


def gradient_batch(u, x_primes: np.ndarray, heights: np.ndarray,
                   resolution: int):
    """(V, DV, |DV|) at many points; DV has shape (B, m+1, nu).

    The gradient comes from the analytic kernels (differentiation under the
    integral); finite differences are kept as a test oracle only.
    """
    x_primes = np.atleast_2d(np.asarray(x_primes, dtype=float))
    heights = np.asarray(heights, dtype=float)
    if np.any(heights <= 0):
        raise ConfigError("half-space points need positive height")
    m = x_primes.shape[1]
    moll = Mollifier(m, resolution)
    z, w = moll.stencil(), moll.weights()
    g, gv = moll.gradient_kernels()
    pts = _stencil_points(x_primes, heights, z)
    vals = u.values_at(pts if m > 1 else pts[..., 0])
    v = np.einsum("p,bpv->bv", w, vals)
    inv_t = 1.0 / heights
    dv = np.empty((len(heights), m + 1, vals.shape[-1]))
    for k in range(m):
        dv[:, k, :] = np.einsum("p,bpv->bv", g[k], vals) * inv_t[:, None]
    dv[:, m, :] = -np.einsum("p,bpv->bv", gv, vals) * inv_t[:, None]
    norms = np.linalg.svd(dv, compute_uv=False)[:, 0]
    return v, dv, norms


def extend_convolution(u, x, resolution: int) -> np.ndarray:
    """V at a single half-space point."""
    xp, h = _as_point(x)
    return extend_batch(u, xp[None, :], np.array([h]), resolution)[0]


def gradient_convolution(u, x, resolution: int):
    """(DV, |DV|) at a single half-space point; |DV| is the spectral norm."""
    xp, h = _as_point(x)
    _, dv, norms = gradient_batch(u, xp[None, :], np.array([h]), resolution)
    return dv[0], float(norms[0])


def gradient_fd(u, x, resolution: int, step_factor: float = 0.01):
    """Central finite-difference gradient of V; the oracle path."""
    xp, h = _as_point(x)
    m = len(xp)
    step = h * step_factor
    rows = []
    for k in range(m):
        e = np.zeros(m)
        e[k] = step
        vp = extend_batch(u, (xp + e)[None, :], np.array([h]), resolution)[0]
        vm = extend_batch(u, (xp - e)[None, :], np.array([h]), resolution)[0]
        rows.append((vp - vm) / (2.0 * step))
    vp = extend_batch(u, xp[None, :], np.array([h + step]), resolution)[0]
    vm = extend_batch(u, xp[None, :], np.array([h - step]), resolution)[0]
    rows.append((vp - vm) / (2.0 * step))
    dv = np.stack(rows)
    return dv, float(np.linalg.norm(dv, ord=2))
