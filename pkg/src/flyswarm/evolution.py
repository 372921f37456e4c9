"""Parisian evolutionary core.

Each individual ("fly") is a single 3-D point; the population as a whole
is the scene description. One generation, in order:

1. evaluate the raw fitness of every fly against the current frame,
2. flag useless flies and apply fitness sharing,
3. keep the best ``selection_ratio`` of the population (elitist,
   deterministic, ties to the lower index),
4. refill the vacated slots with barycentric crossover, Gaussian
   mutation and fresh immigrants,
5. increment the generation counter.

The fitness of a fly is the product of the Sobel gradient norms at its
two projections divided by the (epsilon-shifted) sum of squared
differences between the projection neighborhoods: flies on a textured
surface project onto matching, gradient-rich windows and score high;
flies in front of or behind a surface compare unrelated windows; flies
over uniform regions are killed by the gradient product.

The population is stored as structure-of-arrays so a full generation at
population 5000 stays well inside a real-time budget; ``Fly`` records
are views for inspection and small-scale use.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .imaging import GradientMap, Image, neighborhood_ssd, sobel_norm_map
from .stereo_geometry import (
    StereoRig,
    project,
    project_many,
    sample_point,
    sample_points,
    search_volume,
    visible_many,
)
from .warning import WarningParams, flag_useless

MUTATION_RESAMPLE_LIMIT = 8

# Fraction of each search-volume axis used for the default mutation sigma.
# Mutation is the local refinement operator here (immigration does the
# global exploring); a small sigma is what lets mutants of a converged
# fly stay inside the sub-pixel disparity band of a surface. Wider
# defaults measurably slow the reaction to scene changes.
DEFAULT_SIGMA_FRACTION = 0.001


@dataclass
class Fly:
    """One individual: a world point plus its last evaluation results."""

    position: np.ndarray
    raw_fitness: float = 0.0
    shared_fitness: float = 0.0
    penalized: bool = False

    @classmethod
    def at(cls, x: float, y: float, z: float) -> "Fly":
        return cls(np.array([x, y, z], dtype=np.float64))


@dataclass
class EvolutionParams:
    """All rates and tolerances of the evolutionary loop.

    The offspring mix (crossover/mutation/immigration fractions) applies
    to the replaced part of the population and must sum to 1.
    ``mutation_sigma`` is per-axis in metres; None derives it as 0.1% of
    each search-volume bounding-box extent.
    """

    population_size: int = 5000
    selection_ratio: float = 0.40
    mutation_fraction: float = 0.40
    crossover_fraction: float = 0.50
    immigration_fraction: float = 0.10
    mutation_sigma: tuple[float, float, float] | None = None
    neighborhood_radius: int = 2
    sharing_cell_px: int = 8
    sharing_exponent: float = 1.0
    fitness_epsilon: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError(f"population_size must be >= 2, got {self.population_size}")
        for name in ("selection_ratio", "mutation_fraction", "crossover_fraction", "immigration_fraction"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        total = self.mutation_fraction + self.crossover_fraction + self.immigration_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"offspring fractions must sum to 1, got {total}")
        if self.fitness_epsilon <= 0:
            raise ValueError(f"fitness_epsilon must be > 0, got {self.fitness_epsilon}")
        if self.neighborhood_radius < 0 or self.sharing_cell_px < 1:
            raise ValueError("neighborhood_radius must be >= 0 and sharing_cell_px >= 1")


class Population:
    """Fixed-size swarm stored as parallel arrays."""

    def __init__(self, positions: np.ndarray, generation_index: int = 0):
        positions = np.asarray(positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError(f"positions must be (N, 3), got {positions.shape}")
        n = positions.shape[0]
        self.positions = positions.copy()
        self.raw_fitness = np.zeros(n, dtype=np.float64)
        self.shared_fitness = np.zeros(n, dtype=np.float64)
        self.penalized = np.zeros(n, dtype=bool)
        self.generation_index = generation_index

    @classmethod
    def initialize(cls, rig: StereoRig, params: EvolutionParams, rng: np.random.Generator) -> "Population":
        """Uniform random flies over the field-of-view intersection."""
        pts = sample_points(rig, rng, params.population_size, margin=params.neighborhood_radius)
        return cls(pts)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def fly(self, i: int) -> Fly:
        return Fly(
            self.positions[i].copy(),
            float(self.raw_fitness[i]),
            float(self.shared_fitness[i]),
            bool(self.penalized[i]),
        )


class StereoFrame:
    """One stereo pair with everything the fitness needs precomputed.

    Gradient maps and flattened float planes are built once per frame so
    the per-generation cost is pure arithmetic and gathers.
    """

    def __init__(self, left: Image, right: Image):
        if (left.width, left.height, left.channels) != (right.width, right.height, right.channels):
            raise ValueError("left/right images must share dimensions and channel count")
        self.left = left
        self.right = right
        self.grad_left = sobel_norm_map(left)
        self.grad_right = sobel_norm_map(right)
        n_px = left.width * left.height
        self._left_flat = left.planes().reshape(n_px, left.channels)
        self._right_flat = right.planes().reshape(n_px, right.channels)
        self._grad_left_flat = self.grad_left.norms.reshape(n_px)
        self._grad_right_flat = self.grad_right.norms.reshape(n_px)


def evaluate_fitness(
    fly: Fly,
    left: Image,
    right: Image,
    grad_left: GradientMap,
    grad_right: GradientMap,
    rig: StereoRig,
    params: EvolutionParams,
) -> float:
    """Stereo photo-consistency score of a single fly; 0 if not visible."""
    n = params.neighborhood_radius
    proj = project(rig, fly.position, margin=n)
    if not proj.visible:
        return 0.0
    xl = int(np.rint(proj.left_px[0]))
    yl = int(np.rint(proj.left_px[1]))
    xr = int(np.rint(proj.right_px[0]))
    yr = int(np.rint(proj.right_px[1]))
    numerator = grad_left.norms[yl, xl] * grad_right.norms[yr, xr]
    ssd = neighborhood_ssd(left, right, (xl, yl), (xr, yr), n)
    return float(numerator / (params.fitness_epsilon + ssd))


def _evaluate_block(positions: np.ndarray, frame: StereoFrame, rig: StereoRig, params: EvolutionParams) -> np.ndarray:
    n = params.neighborhood_radius
    w, h = frame.left.width, frame.left.height
    if w < 2 * n + 1 or h < 2 * n + 1:
        return np.zeros(positions.shape[0], dtype=np.float64)
    u_left, u_right, v = project_many(rig, positions)
    vis = visible_many(rig, u_left, u_right, v, positions[:, 2], margin=n)

    # clip before the int cast: invisible flies can project arbitrarily
    # far outside the raster and their indices are replaced anyway
    iu_l = np.where(vis, np.rint(np.clip(u_left, 0, w - 1)).astype(np.int64), n)
    iu_r = np.where(vis, np.rint(np.clip(u_right, 0, w - 1)).astype(np.int64), n)
    iv = np.where(vis, np.rint(np.clip(v, 0, h - 1)).astype(np.int64), n)

    centre_l = iv * w + iu_l
    centre_r = iv * w + iu_r
    span = np.arange(-n, n + 1, dtype=np.int64)
    window = (span[:, None] * w + span[None, :]).ravel()

    win_l = frame._left_flat[centre_l[:, None] + window[None, :]]
    win_r = frame._right_flat[centre_r[:, None] + window[None, :]]
    diff = win_l - win_r
    ssd = np.einsum("nkc,nkc->n", diff, diff)

    numerator = frame._grad_left_flat[centre_l] * frame._grad_right_flat[centre_r]
    return np.where(vis, numerator / (params.fitness_epsilon + ssd), 0.0)


def evaluate_population(
    population: Population,
    frame: StereoFrame,
    rig: StereoRig,
    params: EvolutionParams,
    threads: int = 1,
) -> None:
    """Raw fitness for every fly. Per-fly work is independent, so the
    optional thread fan-out cannot change the result."""
    pos = population.positions
    n = len(population)
    if threads > 1 and n >= 2 * threads:
        edges = np.linspace(0, n, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda se: _evaluate_block(pos[se[0] : se[1]], frame, rig, params),
                    zip(edges[:-1], edges[1:]),
                )
            )
        population.raw_fitness[:] = np.concatenate(parts)
    else:
        population.raw_fitness[:] = _evaluate_block(pos, frame, rig, params)


def apply_sharing(population: Population, rig: StereoRig, params: EvolutionParams) -> None:
    """Divide raw fitness by the occupancy of the fly's left-image cell.

    Crowding is measured on a ``sharing_cell_px`` grid over the rounded
    left projections; penalized flies are then forced to 0 so selection
    eliminates them.
    """
    u_left, _, v = project_many(rig, population.positions)
    cell = params.sharing_cell_px
    bound = float(1 << 40)  # keeps the int cast defined for wild projections
    cx = np.rint(np.clip(u_left, -bound, bound)).astype(np.int64) // cell
    cy = np.rint(np.clip(v, -bound, bound)).astype(np.int64) // cell
    cx = np.clip(cx, -(1 << 30), 1 << 30)
    cy = np.clip(cy, -(1 << 30), 1 << 30)
    key = (cx + (1 << 30)) * (1 << 31) + (cy + (1 << 30))
    _, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    occupancy = counts[inverse].astype(np.float64)
    if params.sharing_exponent != 1.0:
        occupancy = occupancy**params.sharing_exponent
    population.shared_fitness[:] = population.raw_fitness / occupancy
    population.shared_fitness[population.penalized] = 0.0


def survivor_count(ratio: float, population_size: int) -> int:
    """ceil(ratio * N), guarding against float round-up (0.4 * 5000 = 2000)."""
    k = math.ceil(ratio * population_size - 1e-9)
    return min(max(k, 1), population_size)


def select(population: Population, params: EvolutionParams) -> np.ndarray:
    """Indices of the elite by shared fitness, ascending index order."""
    k = survivor_count(params.selection_ratio, len(population))
    order = np.argsort(-population.shared_fitness, kind="stable")
    return np.sort(order[:k])


def _position_of(individual) -> np.ndarray:
    pos = individual.position if isinstance(individual, Fly) else individual
    return np.asarray(pos, dtype=np.float64)


def crossover(parent1, parent2, lam: float) -> np.ndarray:
    """Barycentric offspring lam * p1 + (1 - lam) * p2, lam in [0, 1]."""
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    p1 = _position_of(parent1)
    p2 = _position_of(parent2)
    return lam * p1 + (1.0 - lam) * p2


def resolve_mutation_sigma(params: EvolutionParams, rig: StereoRig) -> np.ndarray:
    if params.mutation_sigma is not None:
        sigma = np.asarray(params.mutation_sigma, dtype=np.float64)
        if sigma.shape != (3,) or np.any(sigma < 0):
            raise ValueError("mutation_sigma must be three non-negative values")
        return sigma
    lo, hi = search_volume(rig, params.neighborhood_radius).bounding_box()
    return DEFAULT_SIGMA_FRACTION * (hi - lo)


def mutate(parent, rig: StereoRig, params: EvolutionParams, rng: np.random.Generator) -> np.ndarray:
    """Add per-axis Gaussian noise; retry on leaving the volume, then clamp."""
    vol = search_volume(rig, params.neighborhood_radius)
    sigma = resolve_mutation_sigma(params, rig)
    pos = _position_of(parent)
    cand = pos + rng.normal(0.0, sigma)
    for _ in range(MUTATION_RESAMPLE_LIMIT):
        if vol.contains(cand[None, :])[0]:
            return cand
        cand = pos + rng.normal(0.0, sigma)
    if vol.contains(cand[None, :])[0]:
        return cand
    return vol.clamp(cand[None, :])[0]


def _mutate_batch(
    parents: np.ndarray, rig: StereoRig, params: EvolutionParams, rng: np.random.Generator
) -> np.ndarray:
    vol = search_volume(rig, params.neighborhood_radius)
    sigma = resolve_mutation_sigma(params, rig)
    out = parents + rng.normal(0.0, sigma, size=parents.shape)
    bad = ~vol.contains(out)
    for _ in range(MUTATION_RESAMPLE_LIMIT):
        if not bad.any():
            break
        idx = np.flatnonzero(bad)
        out[idx] = parents[idx] + rng.normal(0.0, sigma, size=(idx.size, 3))
        bad[idx] = ~vol.contains(out[idx])
    if bad.any():
        out[bad] = vol.clamp(out[bad])
    return out


def immigrate(rig: StereoRig, rng: np.random.Generator, margin: int = 2) -> np.ndarray:
    """Fresh random individual; keeps exploring as the scene changes."""
    return sample_point(rig, rng, margin=margin)


def _offspring_counts(params: EvolutionParams, slots: int) -> tuple[int, int, int]:
    n_cross = int(round(params.crossover_fraction * slots))
    n_mut = int(round(params.mutation_fraction * slots))
    n_imm = slots - n_cross - n_mut
    if n_imm < 0:
        n_mut += n_imm
        n_imm = 0
        if n_mut < 0:
            n_cross += n_mut
            n_mut = 0
    return n_cross, n_mut, n_imm


def select_and_refill(
    population: Population, rig: StereoRig, params: EvolutionParams, rng: np.random.Generator
) -> None:
    """Selection plus offspring phases; bumps the generation counter."""
    survivors = select(population, params)
    _refill(population, survivors, rig, params, rng)
    population.generation_index += 1


def _refill(
    population: Population,
    survivors: np.ndarray,
    rig: StereoRig,
    params: EvolutionParams,
    rng: np.random.Generator,
) -> None:
    n = len(population)
    s = survivors.size
    slots = n - s
    surv_pos = population.positions[survivors]
    surv_raw = population.raw_fitness[survivors]
    surv_shared = population.shared_fitness[survivors]
    surv_pen = population.penalized[survivors]

    n_cross, n_mut, n_imm = _offspring_counts(params, slots)
    if s < 2:
        # cannot draw two distinct parents
        n_mut += n_cross
        n_cross = 0

    children = np.empty((slots, 3), dtype=np.float64)
    if n_cross:
        i = rng.integers(0, s, size=n_cross)
        j = (i + 1 + rng.integers(0, s - 1, size=n_cross)) % s  # uniform over the others
        lam = rng.random(n_cross)[:, None]
        children[:n_cross] = lam * surv_pos[i] + (1.0 - lam) * surv_pos[j]
    if n_mut:
        parents = surv_pos[rng.integers(0, s, size=n_mut)]
        children[n_cross : n_cross + n_mut] = _mutate_batch(parents, rig, params, rng)
    if n_imm:
        children[n_cross + n_mut :] = sample_points(rig, rng, n_imm, margin=params.neighborhood_radius)

    population.positions[:s] = surv_pos
    population.positions[s:] = children
    population.raw_fitness[:s] = surv_raw
    population.raw_fitness[s:] = 0.0
    population.shared_fitness[:s] = surv_shared
    population.shared_fitness[s:] = 0.0
    population.penalized[:s] = surv_pen
    population.penalized[s:] = False


def evaluate_and_share(
    population: Population,
    frame: StereoFrame,
    rig: StereoRig,
    params: EvolutionParams,
    warning_params: WarningParams | None = None,
    threads: int = 1,
) -> None:
    """Evaluation phase: raw fitness, penalization flags, sharing."""
    wp = warning_params if warning_params is not None else WarningParams()
    evaluate_population(population, frame, rig, params, threads=threads)
    flag_useless(population, rig, wp)
    apply_sharing(population, rig, params)


def step_generation(
    population: Population,
    frame: StereoFrame,
    rig: StereoRig,
    params: EvolutionParams,
    rng: np.random.Generator,
    warning_params: WarningParams | None = None,
    threads: int = 1,
) -> None:
    """One full generation against the given frame. Size-preserving and
    deterministic for a fixed seed."""
    evaluate_and_share(population, frame, rig, params, warning_params, threads=threads)
    select_and_refill(population, rig, params, rng)
