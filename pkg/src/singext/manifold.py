"""Embedded round-sphere targets: geodesic distance, nearest-point retraction."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidPointError, RetractionError

UNIT_NORM_TOL = 1e-12


@dataclass(frozen=True)
class TargetManifold:
    """Round unit sphere S^1 in R^2 or S^2 in R^3.

    `tube_radius` is the half-width of the tube on which the radial retraction
    x -> x/|x| is smooth; any value in (0, 1) works for spheres.
    """

    kind: str
    ambient_dim: int
    tube_radius: float = 0.5
    diameter: float = np.pi

    def __post_init__(self):
        if self.kind not in ("s1", "s2"):
            raise ConfigError(f"unknown target manifold {self.kind!r}")
        if not 0.0 < self.tube_radius < 1.0:
            raise ConfigError("tube_radius must lie in (0, 1)")

    @staticmethod
    def from_name(name: str, tube_radius: float = 0.5) -> "TargetManifold":
        dims = {"s1": 2, "s2": 3}
        if name not in dims:
            raise ConfigError(f"target must be 's1' or 's2', got {name!r}")
        return TargetManifold(kind=name, ambient_dim=dims[name],
                              tube_radius=tube_radius)

    def check_on_manifold(self, points: np.ndarray) -> None:
        """Raise unless every row is a unit vector within UNIT_NORM_TOL."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        err = np.abs(np.linalg.norm(pts, axis=-1) - 1.0)
        if np.any(err > UNIT_NORM_TOL):
            raise InvalidPointError(
                f"point off {self.kind} by {float(err.max()):.3e} (> {UNIT_NORM_TOL})"
            )

    def geodesic_distance(self, a, b):
        """Great-circle distance arccos(a.b), clamped to [0, pi].

        Accepts single points or stacked arrays of matching shape.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        self.check_on_manifold(a)
        self.check_on_manifold(b)
        dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
        return np.arccos(dot)

    def retract(self, x, return_flag: bool = False):
        """Radial projection x/|x|; flags inputs outside the tube.

        With `return_flag`, returns (point, outside_tube_flag). Callers that
        treat the flag as an error recover the tube-domain semantics.
        """
        x = np.asarray(x, dtype=float)
        norms = np.linalg.norm(x, axis=-1)
        if np.any(norms == 0.0):
            raise RetractionError("retraction undefined at the origin")
        out = x / norms[..., None]
        if return_flag:
            flag = np.abs(norms - 1.0) > self.tube_radius
            return out, flag
        return out

    def distance_to(self, x):
        """Ambient distance to the sphere, ||x| - 1|."""
        return np.abs(np.linalg.norm(np.asarray(x, dtype=float), axis=-1) - 1.0)
