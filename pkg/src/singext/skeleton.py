"""Skeleton functionals, the ratio choice, and good/bad cube classification.

The scale families are truncated to a finite k-range derived per scale factor
tau: the smallest band must reach below `trace_height_min` and the tallest
band must exceed `band_top` (the averaged extension is used directly above).
Monte-Carlo averages over (tau, h) draw tau log-uniformly (matching the
d tau/tau measure of the face estimates) and an independent uniform shift per
scale; estimates are multiplied by ln(lambda) so they approximate the full
d tau/tau integrals.
"""

import warnings
from dataclasses import dataclass, field as dfield

import numpy as np

from .convolution import extend_batch, gradient_batch
from .cubes import CubeFamilyParams, CubeId, enumerate_window, sample_boundary
from .errors import ConfigError, SelectionFailureError
from .oscillation import mo_batch
from .rng import substream


@dataclass(frozen=True)
class CalibrationConstants:
    """Calibrated stand-ins for the existential constants of the estimates."""

    b_lambda: float = 0.02     # ratio = exp(b_lambda * gap potential)
    eta: float = 0.4           # truncation calibration in (0, 1)
    c_mu: float = 1.0          # good-cube threshold coefficient
    selection_budget: int = 200
    lambda_max: float = 256.0

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ConfigError("eta must lie in (0, 1)")
        if self.b_lambda <= 0 or self.c_mu <= 0:
            raise ConfigError("b_lambda and c_mu must be positive")


@dataclass(frozen=True)
class SelectionGrid:
    """Desk-scale truncation and sampling parameters for skeleton work."""

    window_margin: float = 0.25
    density: float = 8.0            # boundary samples per unit length
    conv_resolution: int = 48
    mo_resolution: int = 8
    trace_height_min: float = 2.0 ** -6
    band_top: float = 4.0
    grid_n: int = 0                 # 0: skip the edge-resolution check
    h_candidates: int = 8
    tau_grid: int = 16


def choose_lambda(gap: float, consts: CalibrationConstants) -> float:
    """lam = max(2, exp(b_lambda * gap)), capped loudly at lambda_max."""
    if gap < 0:
        raise ConfigError("gap potential must be nonnegative")
    exponent = consts.b_lambda * gap
    if exponent > np.log(consts.lambda_max):
        warnings.warn(
            f"lambda capped at {consts.lambda_max:g} "
            f"(exp({exponent:.3g}) requested); run is non-conforming",
            RuntimeWarning, stacklevel=2)
        return float(consts.lambda_max)
    return float(max(2.0, np.exp(exponent)))


def k_range_for_tau(lam: float, tau: float, grid: SelectionGrid):
    """Scale range so the bands cover [trace_height_min, band_top]."""
    ln = np.log(lam)
    k_max = int(np.ceil(np.log(tau / ((lam - 1.0) * grid.trace_height_min)) / ln
                        - 1e-12))
    while tau * lam ** (-k_max) / (lam - 1.0) > grid.trace_height_min:
        k_max += 1
    if grid.grid_n:
        min_edge = tau * lam ** (-k_max)
        if min_edge < 2.0 / (grid.grid_n - 1):
            raise ConfigError(
                f"boundary grid too coarse: smallest cube edge {min_edge:.3g} "
                f"< 2 grid cells; increase grid_n")
    k_min = int(np.floor(1.0 - np.log(grid.band_top * (lam - 1.0) / tau) / ln
                         + 1e-12))
    while tau * lam ** (-(k_min - 1)) / (lam - 1.0) < grid.band_top:
        k_min -= 1
    return min(k_min, k_max), k_max


def _window(m: int, margin: float) -> np.ndarray:
    return np.array([[-margin, 1.0 + margin]] * m)


def _family(m, lam, tau, h, k_min, k_max) -> CubeFamilyParams:
    return CubeFamilyParams(m=m, lam=lam, tau=tau, h=h,
                            k_min=k_min, k_max=k_max)


def _scale_samples(params: CubeFamilyParams, k: int, window, density):
    """Concatenated boundary samples of all scale-k cubes in the window."""
    single = _family(params.m, params.lam, params.tau,
                     {k: params.shift(k)}, k, k)
    ids = enumerate_window(single, window)
    if not ids:
        return [], np.zeros((0, params.m + 1)), np.zeros(0, dtype=int), None
    blocks, offsets, masks = [], [0], []
    for cid in ids:
        bs = sample_boundary(single, cid, density)
        blocks.append(bs.points)
        offsets.append(offsets[-1] + len(bs.points))
        masks.append(bs)
    pts = np.concatenate(blocks)
    return ids, pts, np.asarray(offsets[:-1]), masks


def _segment_max(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return np.maximum.reduceat(values, offsets)


def skeleton_sup_mo(u, params: CubeFamilyParams, cid: CubeId, delta: float,
                    p: float, density: float, resolution: int) -> float:
    """Max of the truncated mean oscillation over the cube-boundary lattice."""
    bs = sample_boundary(params, cid, density)
    vals = mo_batch(u, bs.points[:, :-1], bs.points[:, -1], delta, p,
                    resolution)
    return float(np.max(vals))


def _draw(seed: int, index: int, lam: float, m: int, k_min: int, k_max: int,
          per_scale_h: bool):
    rng = substream(seed, index)
    tau = float(np.exp(rng.uniform(0.0, np.log(lam))))
    if per_scale_h:
        hs = {k: rng.uniform(size=m) for k in range(k_min - 2, k_max + 3)}
    else:
        h = rng.uniform(size=m)
        hs = {k: h for k in range(k_min - 2, k_max + 3)}
    return tau, hs


def _face_sums(u, lam, delta, p, draws, grid: SelectionGrid, seed,
               per_scale_h=True):
    """Per-draw longitudinal and transversal sums of sup MO over faces."""
    m = u.m
    window = _window(m, grid.window_margin)
    longs, transs = np.zeros(draws), np.zeros(draws)
    for d in range(draws):
        k_lo, k_hi = k_range_for_tau(lam, 1.0, grid)  # widest range, tau drawn next
        tau, hs = _draw(seed, d, lam, m, k_lo, k_hi, per_scale_h)
        k_min, k_max = k_range_for_tau(lam, tau, grid)
        params = _family(m, lam, tau, hs, k_min, k_max)
        for k in params.scales():
            ids, pts, offsets, masks = _scale_samples(params, k, window,
                                                      grid.density)
            if not ids:
                continue
            vals = mo_batch(u, pts[:, :-1], pts[:, -1], delta, p,
                            grid.mo_resolution)
            pos = 0
            for cid, bs in zip(ids, masks):
                n = len(bs.points)
                seg = vals[pos:pos + n]
                longs[d] += float(np.max(seg[bs.bottom]))
                transs[d] += float(np.max(seg[bs.lateral]))
                pos += n
    return longs, transs


def longitudinal_functional(u, lam, delta, p, mc_draws, grid: SelectionGrid,
                            seed: int, per_scale_h: bool = True):
    """Estimate (and standard error) of the longitudinal face functional.

    ln(lam) times the Monte-Carlo mean of sum_k sum_{bottom faces} sup MO,
    truncated to the window and scale range.
    """
    if lam < 2:
        raise ConfigError("lam must be >= 2")
    longs, _ = _face_sums(u, lam, delta, p, mc_draws, grid, seed, per_scale_h)
    scale = np.log(lam)
    err = scale * float(np.std(longs)) / np.sqrt(mc_draws)
    return scale * float(np.mean(longs)), err


def transversal_functional(u, lam, delta, p, mc_draws, grid: SelectionGrid,
                           seed: int, per_scale_h: bool = True):
    """Transversal counterpart: lateral faces; compare against the
    delta/2-truncated energy."""
    if lam < 2:
        raise ConfigError("lam must be >= 2")
    _, transs = _face_sums(u, lam, delta, p, mc_draws, grid, seed, per_scale_h)
    scale = np.log(lam)
    err = scale * float(np.std(transs)) / np.sqrt(mc_draws)
    return scale * float(np.mean(transs)), err


def combined_functional(u, lam, delta, p, mc_draws, grid: SelectionGrid,
                        seed: int, per_scale_h: bool = True):
    """Combined face functional on shared draws.

    Returns (longitudinal, transversal, combined) estimates; the third is the
    sum of the first two by construction, which realizes the additivity of
    the face-family partition exactly on shared samples.
    """
    longs, transs = _face_sums(u, lam, delta, p, mc_draws, grid, seed,
                               per_scale_h)
    scale = np.log(lam)
    return (scale * float(np.mean(longs)), scale * float(np.mean(transs)),
            scale * float(np.mean(longs + transs)))


def counting_functional(u, lam, delta, mc_draws, grid: SelectionGrid,
                        seed: int, per_scale_h: bool = True):
    """Average count of cubes whose sampled skeleton strays from the target.

    ln(lam) times the Monte-Carlo mean of #{Q : sup over boundary samples of
    dist(V, N) >= delta}; nonincreasing in delta on fixed draws.
    """
    if lam < 2 or delta <= 0:
        raise ConfigError("need lam >= 2 and delta > 0")
    m = u.m
    window = _window(m, grid.window_margin)
    counts = np.zeros(mc_draws)
    for d in range(mc_draws):
        k_lo, k_hi = k_range_for_tau(lam, 1.0, grid)
        tau, hs = _draw(seed, d, lam, m, k_lo, k_hi, per_scale_h)
        k_min, k_max = k_range_for_tau(lam, tau, grid)
        params = _family(m, lam, tau, hs, k_min, k_max)
        for k in params.scales():
            ids, pts, offsets, _ = _scale_samples(params, k, window,
                                                  grid.density)
            if not ids:
                continue
            v = extend_batch(u, pts[:, :-1], pts[:, -1], grid.conv_resolution)
            dist = u.manifold.distance_to(v)
            sups = _segment_max(dist, offsets)
            counts[d] += float(np.sum(sups >= delta))
    scale = np.log(lam)
    err = scale * float(np.std(counts)) / np.sqrt(mc_draws)
    return scale * float(np.mean(counts)), err


@dataclass
class SkeletonSelection:
    """A concrete (tau, {h_k}) choice with its achieved oscillation budget."""

    lam: float
    tau: float
    h_by_scale: dict
    k_min: int
    k_max: int
    oscillation_budget: float
    distance_ok: bool
    per_cube_sup: dict = dfield(default_factory=dict)
    candidates_tried: int = 0

    def params(self, m: int) -> CubeFamilyParams:
        return _family(m, self.lam, self.tau, self.h_by_scale,
                       self.k_min, self.k_max)


def _scale_stats(u, m, lam, tau, h_k, k, window, grid: SelectionGrid):
    """Per-cube sups of dist(V, N) and x_{m+1}^{m+1} |DV|^{m+1} at scale k."""
    params = _family(m, lam, tau, {k: h_k}, k, k)
    ids, pts, offsets, _ = _scale_samples(params, k, window, grid.density)
    if not ids:
        return [], np.zeros(0), np.zeros(0)
    v, _, norms = gradient_batch(u, pts[:, :-1], pts[:, -1],
                                 grid.conv_resolution)
    dist = u.manifold.distance_to(v)
    scaled = (pts[:, -1] * norms) ** (m + 1)
    return ids, _segment_max(dist, offsets), _segment_max(scaled, offsets)


def select_tau_h(u, lam: float, delta_n: float, consts: CalibrationConstants,
                 grid: SelectionGrid, seed: int) -> SkeletonSelection:
    """Search for (tau, {h_k}) with the skeleton inside the half-tube and a
    small scaled-gradient budget.

    tau candidates: a deterministic log-grid over (1, lam), then log-uniform
    draws, up to the selection budget.  Per scale, the best of
    `h_candidates` shifts is kept; a scale with no shift keeping every
    sampled skeleton point within delta_n/2 of the target rejects the
    candidate.  The search stops early once the log-grid is exhausted and a
    feasible candidate exists (or immediately on a zero budget).
    """
    if lam < 2:
        raise ConfigError("lam must be >= 2")
    m = u.m
    window = _window(m, grid.window_margin)
    G = min(grid.tau_grid, consts.selection_budget)
    ln = np.log(lam)
    tau_grid = list(np.exp(ln * (np.arange(1, G + 1)) / (G + 1.0)))
    best = None
    tried = 0
    for ci in range(consts.selection_budget):
        if ci < len(tau_grid):
            tau = float(tau_grid[ci])
        else:
            tau = float(np.exp(substream(seed, 10_000 + ci).uniform(0.0, ln)))
        tried += 1
        k_min, k_max = k_range_for_tau(lam, tau, grid)
        h_by_scale, sups_all = {}, {}
        total = 0.0
        feasible = True
        for k in range(k_min, k_max + 1):
            best_k = None
            for hi in range(grid.h_candidates):
                rng = substream(seed, 20_000 + 1009 * ci + 31 * (k - k_min) + hi)
                h = rng.uniform(size=m)
                ids, dist_sups, xdv_sups = _scale_stats(
                    u, m, lam, tau, h, k, window, grid)
                if len(ids) and float(np.max(dist_sups)) > delta_n / 2.0:
                    continue
                contr = float(np.sum(xdv_sups))
                if best_k is None or contr < best_k[1]:
                    best_k = (h, contr, dict(zip(ids, xdv_sups)))
            if best_k is None:
                feasible = False
                break
            h_by_scale[k] = best_k[0]
            total += best_k[1]
            sups_all.update(best_k[2])
        if not feasible:
            continue
        if best is None or total < best.oscillation_budget:
            best = SkeletonSelection(
                lam=lam, tau=tau, h_by_scale=h_by_scale, k_min=k_min,
                k_max=k_max, oscillation_budget=total, distance_ok=True,
                per_cube_sup=sups_all, candidates_tried=tried)
        if best is not None and best.oscillation_budget == 0.0:
            break
        if best is not None and ci >= len(tau_grid) - 1:
            break
    if best is None:
        raise SelectionFailureError(
            f"no (tau, h) candidate kept the skeleton within delta_N/2 after "
            f"{tried} draws; increase b_lambda (larger lambda) or delta_n")
    best.candidates_tried = tried
    return best


@dataclass
class CubeClassification:
    good: list
    bad: list
    mu: float
    per_cube_sup: dict


def classify_cubes(u, selection: SkeletonSelection,
                   consts: CalibrationConstants,
                   delta_n: float) -> CubeClassification:
    """Split cubes by the scaled skeleton gradient threshold mu."""
    m = u.m
    mu = (delta_n / (2.0 * consts.c_mu * (selection.lam - 1.0))) ** (m + 1)
    sups = selection.per_cube_sup
    if not sups:
        raise ConfigError("selection carries no per-cube sups")
    good = sorted(cid for cid, s in sups.items() if s <= mu)
    bad = sorted(cid for cid, s in sups.items() if s > mu)
    return CubeClassification(good=good, bad=bad, mu=mu, per_cube_sup=sups)
