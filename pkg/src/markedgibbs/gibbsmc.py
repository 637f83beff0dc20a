"""Finite-volume Gibbs specifications, exact rejection sampling, grand-canonical
MCMC, estimators, and DLR/locality checks.

Samplers never emit coinciding positions (collisions regenerate), chains are
reproducible given a seed, and the specification weight of a finite-range
potential depends only on the range collar of the boundary, bit-exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AcceptanceTooLow, RegionOutOfBounds, RequiresFiniteRange
from .lpintegrate import philox_rng
from .model import (Box, FiniteConfiguration, MarkedPoint, ModelSpec,
                    canonicalize, restrict)
from .potential import (boltzmann_factor_batch, cross_phi_matrix,
                        pair_phi_matrix)


@dataclass(frozen=True)
class BoundaryCondition:
    """A fixed exterior configuration for a region."""

    exterior: FiniteConfiguration = FiniteConfiguration()

    def validate_for(self, region: Box):
        for p in self.exterior:
            if region.contains_point(p.position):
                raise RegionOutOfBounds("boundary point inside the active region")


EMPTY_BOUNDARY = BoundaryCondition()


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    sweeps: int = 10000
    burn_in: int = 1000
    thinning: int = 1
    p_birth: float = 0.3
    p_death: float = 0.3
    p_move: float = 0.3
    p_mark: float = 0.1
    move_step: float | None = None  # default: 10% of the smallest box side

    def __post_init__(self):
        probs = (self.p_birth, self.p_death, self.p_move, self.p_mark)
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("proposal probabilities must be nonnegative and sum to 1")


@dataclass
class ChainStats:
    sweeps: int
    burn_in: int
    thinning: int
    sample_count: int
    attempts: dict[str, int]
    accepts: dict[str, int]
    mean_count: float
    rho_hat: float
    rho_hat_se: float
    tau_int: float
    mean_energy: float
    mean_energy_se: float
    pair_histogram_edges: tuple[float, ...]
    pair_histogram_counts: tuple[float, ...]

    @property
    def acceptance(self) -> dict[str, float]:
        return {k: (self.accepts[k] / self.attempts[k] if self.attempts[k] else 0.0)
                for k in self.attempts}

    def to_dict(self) -> dict:
        return {
            "sweeps": self.sweeps, "burn_in": self.burn_in,
            "thinning": self.thinning, "sample_count": self.sample_count,
            "attempts": dict(self.attempts), "accepts": dict(self.accepts),
            "acceptance": self.acceptance,
            "mean_count": self.mean_count,
            "rho_hat": self.rho_hat, "rho_hat_se": self.rho_hat_se,
            "tau_int": self.tau_int,
            "mean_energy": self.mean_energy, "mean_energy_se": self.mean_energy_se,
            "pair_histogram_edges": list(self.pair_histogram_edges),
            "pair_histogram_counts": list(self.pair_histogram_counts),
        }


# ---------------------------------------------------------------------------
# marked Poisson sampling


def _draw_points(model: ModelSpec, region: Box, n: int,
                 rng: np.random.Generator) -> FiniteConfiguration:
    lo = np.asarray(region.lower)
    hi = np.asarray(region.upper)
    while True:
        pos = lo + rng.random((n, region.dimension)) * (hi - lo)
        marks = model.marks.sample(rng, n)
        pts = [MarkedPoint(tuple(p), float(m)) for p, m in zip(pos, marks)]
        if len({p.position for p in pts}) == n:
            return canonicalize(pts)


def poisson_sample(model: ModelSpec, region: Box,
                   rng: np.random.Generator) -> FiniteConfiguration:
    """One draw from the marked Poisson law on the region."""
    n = int(rng.poisson(model.z * model.mass(region)))
    return _draw_points(model, region, n, rng)


# ---------------------------------------------------------------------------
# specification weight and energies


def _config_energy_arrays(model: ModelSpec, positions: np.ndarray,
                          marks: np.ndarray) -> float:
    """Pair energy of one configuration given as arrays (may be +inf)."""
    n = positions.shape[0]
    if n < 2:
        return 0.0
    phi_m = pair_phi_matrix(model.potential, positions[None], marks[None])[0]
    iu, ju = np.triu_indices(n, 1)
    vals = phi_m[iu, ju]
    if np.any(np.isinf(vals)):
        return math.inf
    return float(np.sum(vals))


def _interaction_sum(model: ModelSpec, positions: np.ndarray, marks: np.ndarray,
                     bpos: np.ndarray, bmarks: np.ndarray) -> float:
    if positions.shape[0] == 0 or bpos.shape[0] == 0:
        return 0.0
    cross = cross_phi_matrix(model.potential, positions[None], marks[None],
                             bpos, bmarks)[0]
    if np.any(np.isinf(cross)):
        return math.inf
    return float(np.sum(cross))


def specification_weight(candidate: FiniteConfiguration,
                         boundary: BoundaryCondition, model: ModelSpec,
                         region: Box) -> float:
    """Unnormalized conditional density exp(-beta E_region(boundary + candidate)).

    For finite-range potentials only boundary points within the range collar
    contribute; farther points add exact zeros, so the weight is bit-identical
    under any perturbation outside the collar.
    """
    for p in candidate:
        if not region.contains_point(p.position):
            raise RegionOutOfBounds("candidate point outside the region")
    boundary.validate_for(region)
    e_local = _config_energy_arrays(model, candidate.positions_array(),
                                    candidate.marks_array())
    if math.isinf(e_local):
        return 0.0
    w = _interaction_sum(model, candidate.positions_array(), candidate.marks_array(),
                         boundary.exterior.positions_array(),
                         boundary.exterior.marks_array())
    if math.isinf(w):
        return 0.0
    return math.exp(-model.beta * (e_local + w))


# ---------------------------------------------------------------------------
# exact rejection sampling


def _boundary_inflation(model: ModelSpec, region: Box,
                        boundary: BoundaryCondition) -> float:
    """Stability constant B' covering both the pair energy and the boundary term.

    The pair bound phi >= -2B gives -W(point, boundary) <= 2B * (number of
    boundary points that can interact), which is the collar count for
    finite-range potentials.
    """
    b = model.potential.stability_B
    ext = boundary.exterior
    if len(ext) == 0 or b == 0.0:
        return b
    rng_r = model.potential.range_R
    if rng_r is None:
        near = len(ext)
    else:
        collar = region.expand(rng_r)
        near = sum(1 for p in ext if collar.contains_point(p.position))
    return b * (1.0 + 2.0 * near)


def rejection_sample(model: ModelSpec, region: Box,
                     boundary: BoundaryCondition, rng: np.random.Generator,
                     acceptance_floor: float = 1e-6,
                     max_proposals: int = 1_000_000) -> FiniteConfiguration:
    """Exact draw from the finite-volume specification.

    Proposes from the marked Poisson law at inflated activity z*e^{beta B'} and
    accepts with probability exp(-beta E_region) * exp(-beta B' n) <= 1, so the
    output law is exactly the specification.
    """
    boundary.validate_for(region)
    b_prime = _boundary_inflation(model, region, boundary)
    z_prop = model.z * math.exp(model.beta * b_prime)
    lam = z_prop * model.mass(region)
    if math.exp(-lam) < acceptance_floor:
        raise AcceptanceTooLow(
            f"guaranteed acceptance exp(-{lam:.3g}) below floor {acceptance_floor}")
    for _ in range(max_proposals):
        n = int(rng.poisson(lam))
        cand = _draw_points(model, region, n, rng)
        weight = specification_weight(cand, boundary, model, region)
        if rng.random() < weight * math.exp(-model.beta * b_prime * n):
            return cand
    raise AcceptanceTooLow("no acceptance within the proposal budget")


def rejection_sample_batch(model: ModelSpec, region: Box,
                           boundary: BoundaryCondition, count: int,
                           rng: np.random.Generator,
                           acceptance_floor: float = 1e-6
                           ) -> list[FiniteConfiguration]:
    """Vectorized exact draws; energies are evaluated in same-size groups."""
    boundary.validate_for(region)
    b_prime = _boundary_inflation(model, region, boundary)
    z_prop = model.z * math.exp(model.beta * b_prime)
    lam = z_prop * model.mass(region)
    if math.exp(-lam) < acceptance_floor:
        raise AcceptanceTooLow(
            f"guaranteed acceptance exp(-{lam:.3g}) below floor {acceptance_floor}")
    beta = model.beta
    lo = np.asarray(region.lower)
    hi = np.asarray(region.upper)
    d = region.dimension
    bpos = boundary.exterior.positions_array()
    bmarks = boundary.exterior.marks_array()
    out: list[FiniteConfiguration] = []
    while len(out) < count:
        batch = max(1024, int(1.5 * (count - len(out))))
        ns = rng.poisson(lam, size=batch)
        us = rng.random(batch)
        accepted: list[FiniteConfiguration | None] = [None] * batch
        for n in np.unique(ns):
            rows = np.where(ns == n)[0]
            k = rows.size
            if n == 0:
                for row in rows:
                    accepted[row] = FiniteConfiguration()
                continue
            pos = lo + rng.random((k, int(n), d)) * (hi - lo)
            marks = model.marks.sample(rng, k * int(n)).reshape(k, int(n))
            weights = np.ones(k)
            if n > 1:
                phi_m = pair_phi_matrix(model.potential, pos, marks)
                bf = boltzmann_factor_batch(phi_m, beta)
                iu, ju = np.triu_indices(int(n), 1)
                weights = bf[:, iu, ju].prod(axis=-1)
            if len(boundary.exterior):
                cross = cross_phi_matrix(model.potential, pos, marks, bpos, bmarks)
                cb = boltzmann_factor_batch(cross, beta)
                weights = weights * cb.reshape(k, -1).prod(axis=-1)
            accept = us[rows] < weights * math.exp(-beta * b_prime * int(n))
            for group_idx in np.where(accept)[0]:
                pts = [MarkedPoint(tuple(pos[group_idx, j]), float(marks[group_idx, j]))
                       for j in range(int(n))]
                if len({p.position for p in pts}) == int(n):
                    accepted[rows[group_idx]] = canonicalize(pts)
        # keep proposal order so the kept prefix stays an i.i.d. sample
        out.extend(cfg for cfg in accepted if cfg is not None)
    return out[:count]


# ---------------------------------------------------------------------------
# grand-canonical MCMC


class _ChainState:
    """Mutable point list with cached arrays for incremental energy updates."""

    def __init__(self, model: ModelSpec, region: Box, boundary: BoundaryCondition):
        self.model = model
        self.region = region
        self.positions: list[np.ndarray] = []
        self.marks: list[float] = []
        self.bpos = boundary.exterior.positions_array()
        self.bmarks = boundary.exterior.marks_array()

    @property
    def n(self) -> int:
        return len(self.positions)

    def point_energy(self, pos: np.ndarray, mark: float,
                     skip: int | None = None) -> float:
        """Interaction of one (new) point with the state and the boundary."""
        model = self.model
        others_pos = [p for i, p in enumerate(self.positions) if i != skip]
        others_mark = [m for i, m in enumerate(self.marks) if i != skip]
        total = 0.0
        if others_pos:
            arr = np.asarray(others_pos)
            mk = np.asarray(others_mark)
            cross = cross_phi_matrix(model.potential, pos[None, None, :],
                                     np.asarray([[mark]]), arr, mk)[0, 0]
            if np.any(np.isinf(cross)):
                return math.inf
            total += float(np.sum(cross))
        if self.bpos.shape[0]:
            cross = cross_phi_matrix(model.potential, pos[None, None, :],
                                     np.asarray([[mark]]), self.bpos, self.bmarks)[0, 0]
            if np.any(np.isinf(cross)):
                return math.inf
            total += float(np.sum(cross))
        return total

    def total_energy(self) -> float:
        if self.n == 0:
            return 0.0
        pos = np.asarray(self.positions)
        marks = np.asarray(self.marks)
        e = _config_energy_arrays(self.model, pos, marks)
        w = _interaction_sum(self.model, pos, marks, self.bpos, self.bmarks)
        return e + w

    def config(self) -> FiniteConfiguration:
        pts = [MarkedPoint(tuple(p), m) for p, m in zip(self.positions, self.marks)]
        return canonicalize(pts)


def _tau_int(series: np.ndarray) -> float:
    """Integrated autocorrelation time by the initial-positive-sequence rule."""
    n = series.size
    if n < 8:
        return 1.0
    x = series - series.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 1.0
    tau = 1.0
    for lag in range(1, n // 2):
        rho = float(np.dot(x[:-lag], x[lag:])) / ((n - lag) * var)
        if rho <= 0:
            break
        tau += 2.0 * rho
    return tau


def mcmc_run(model: ModelSpec, region: Box, boundary: BoundaryCondition,
             sampler: SamplerConfig,
             sample_sink: Callable[[FiniteConfiguration], None] | None = None
             ) -> ChainStats:
    """Metropolis-Hastings chain targeting the finite-volume specification.

    Birth, death, move, and mark-resample proposals with the standard
    grand-canonical acceptance ratios; detailed balance holds w.r.t. the
    specification. Reproducible for a fixed config.
    """
    boundary.validate_for(region)
    rng = philox_rng(sampler.seed)
    state = _ChainState(model, region, boundary)
    beta = model.beta
    mass = model.mass(region)
    lo = np.asarray(region.lower)
    hi = np.asarray(region.upper)
    d = region.dimension
    step = sampler.move_step
    if step is None:
        step = 0.1 * min(model.space.side_lengths)
    attempts = {"birth": 0, "death": 0, "move": 0, "mark": 0}
    accepts = {"birth": 0, "death": 0, "move": 0, "mark": 0}
    counts = []
    energies = []
    pair_bins = np.linspace(0.0, max(u - l for l, u in zip(region.lower, region.upper)),
                            33)
    pair_counts = np.zeros(len(pair_bins) - 1)
    hist_samples = 0
    kept = 0
    current_energy = 0.0

    thresholds = np.cumsum([sampler.p_birth, sampler.p_death, sampler.p_move])
    for sweep in range(sampler.sweeps):
        u = rng.random()
        if u < thresholds[0]:
            kind = "birth"
        elif u < thresholds[1]:
            kind = "death"
        elif u < thresholds[2]:
            kind = "move"
        else:
            kind = "mark"
        attempts[kind] += 1
        n = state.n
        if kind == "birth":
            pos = lo + rng.random(d) * (hi - lo)
            mark = float(model.marks.sample(rng, 1)[0])
            if any(np.array_equal(pos, p) for p in state.positions):
                pass  # exact collision: null proposal
            else:
                delta = state.point_energy(pos, mark)
                ratio = (model.z * mass / (n + 1)) * \
                    (0.0 if math.isinf(delta) else math.exp(-beta * delta))
                if rng.random() < min(1.0, ratio * sampler.p_death / sampler.p_birth):
                    state.positions.append(pos)
                    state.marks.append(mark)
                    accepts[kind] += 1
                    current_energy += delta
        elif kind == "death" and n > 0:
            idx = int(rng.integers(n))
            delta = state.point_energy(state.positions[idx], state.marks[idx],
                                       skip=idx)
            if math.isinf(delta):
                ratio = math.inf
            else:
                ratio = (n / (model.z * mass)) * math.exp(beta * delta)
            if rng.random() < min(1.0, ratio * sampler.p_birth / sampler.p_death):
                state.positions.pop(idx)
                state.marks.pop(idx)
                accepts[kind] += 1
                current_energy = state.total_energy()
        elif kind == "move" and n > 0:
            idx = int(rng.integers(n))
            new_pos = state.positions[idx] + (rng.random(d) - 0.5) * 2.0 * step
            if model.space.boundary == "periodic":
                sides = np.asarray(model.space.side_lengths)
                new_pos = np.mod(new_pos, sides)
            if region.contains_point(tuple(new_pos)):
                old = state.point_energy(state.positions[idx], state.marks[idx],
                                         skip=idx)
                new = state.point_energy(new_pos, state.marks[idx], skip=idx)
                log_ratio = -beta * (new - old) if not math.isinf(new) else -math.inf
                if math.isinf(old) and not math.isinf(new):
                    log_ratio = math.inf
                if math.log(max(rng.random(), 1e-300)) < log_ratio:
                    state.positions[idx] = new_pos
                    accepts[kind] += 1
                    current_energy = state.total_energy()
        elif kind == "mark" and n > 0:
            idx = int(rng.integers(n))
            new_mark = float(model.marks.sample(rng, 1)[0])
            old = state.point_energy(state.positions[idx], state.marks[idx], skip=idx)
            new = state.point_energy(state.positions[idx], new_mark, skip=idx)
            log_ratio = -beta * (new - old) if not math.isinf(new) else -math.inf
            if math.isinf(old) and not math.isinf(new):
                log_ratio = math.inf
            if math.log(max(rng.random(), 1e-300)) < log_ratio:
                state.marks[idx] = new_mark
                accepts[kind] += 1
                current_energy = state.total_energy()

        if sweep >= sampler.burn_in and (sweep - sampler.burn_in) % sampler.thinning == 0:
            counts.append(state.n)
            energies.append(current_energy if state.n else 0.0)
            kept += 1
            if state.n >= 2:
                pos = np.asarray(state.positions)
                dist = model.space.distance_batch(pos[:, None, :], pos[None, :, :])
                iu, ju = np.triu_indices(state.n, 1)
                pair_counts += np.histogram(dist[iu, ju], bins=pair_bins)[0]
            hist_samples += 1
            if sample_sink is not None:
                sample_sink(state.config())

    counts_arr = np.asarray(counts, dtype=float)
    energy_arr = np.asarray(energies, dtype=float)
    tau = _tau_int(counts_arr)
    mean_count = float(counts_arr.mean()) if kept else 0.0
    se_count = (float(counts_arr.std(ddof=1)) / math.sqrt(kept / tau)
                if kept > 1 else 0.0)
    denom = model.z * mass
    tau_e = _tau_int(energy_arr)
    mean_e = float(energy_arr.mean()) if kept else 0.0
    se_e = (float(energy_arr.std(ddof=1)) / math.sqrt(kept / tau_e)
            if kept > 1 else 0.0)
    return ChainStats(
        sweeps=sampler.sweeps, burn_in=sampler.burn_in, thinning=sampler.thinning,
        sample_count=kept, attempts=attempts, accepts=accepts,
        mean_count=mean_count,
        rho_hat=mean_count / denom, rho_hat_se=se_count / denom,
        tau_int=tau, mean_energy=mean_e, mean_energy_se=se_e,
        pair_histogram_edges=tuple(pair_bins.tolist()),
        pair_histogram_counts=tuple(pair_counts.tolist()),
    )


def summarize_samples(samples: Sequence[FiniteConfiguration], model: ModelSpec,
                      region: Box) -> ChainStats:
    """ChainStats-shaped summary for i.i.d. samples (tau = 1)."""
    counts = np.asarray([len(s) for s in samples], dtype=float)
    energies = []
    pair_bins = np.linspace(0.0, max(u - l for l, u in zip(region.lower, region.upper)),
                            33)
    pair_counts = np.zeros(len(pair_bins) - 1)
    for s in samples:
        if len(s) >= 2:
            pos = s.positions_array()
            dist = model.space.distance_batch(pos[:, None, :], pos[None, :, :])
            iu, ju = np.triu_indices(len(s), 1)
            pair_counts += np.histogram(dist[iu, ju], bins=pair_bins)[0]
        e = _config_energy_arrays(model, s.positions_array(), s.marks_array())
        w = _interaction_sum(model, s.positions_array(), s.marks_array(),
                             np.zeros((0, region.dimension)), np.zeros(0))
        energies.append(e + w)
    energies = np.asarray(energies)
    k = counts.size
    denom = model.z * model.mass(region)
    se = float(counts.std(ddof=1)) / math.sqrt(k) if k > 1 else 0.0
    return ChainStats(
        sweeps=k, burn_in=0, thinning=1, sample_count=k,
        attempts={"birth": 0, "death": 0, "move": 0, "mark": 0},
        accepts={"birth": 0, "death": 0, "move": 0, "mark": 0},
        mean_count=float(counts.mean()),
        rho_hat=float(counts.mean()) / denom, rho_hat_se=se / denom,
        tau_int=1.0,
        mean_energy=float(energies.mean()) if k else 0.0,
        mean_energy_se=float(energies.std(ddof=1)) / math.sqrt(k) if k > 1 else 0.0,
        pair_histogram_edges=tuple(pair_bins.tolist()),
        pair_histogram_counts=tuple(pair_counts.tolist()),
    )


# ---------------------------------------------------------------------------
# DLR and locality checks


@dataclass(frozen=True)
class DlrReport:
    n_samples: int
    discrepancies: dict[str, float]
    standard_errors: dict[str, float]
    z_scores: dict[str, float]
    locality_trials: int
    locality_violations: int
    passed: bool

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "discrepancies": dict(self.discrepancies),
                "standard_errors": dict(self.standard_errors),
                "z_scores": dict(self.z_scores),
                "locality_trials": self.locality_trials,
                "locality_violations": self.locality_violations,
                "passed": self.passed}


def dlr_check(model: ModelSpec, inner_region: Box, outer_region: Box,
              functionals: dict[str, Callable[[FiniteConfiguration], float]] | None = None,
              n_samples: int = 20000, seed: int = 0,
              z_threshold: float = 3.0, locality_trials: int = 200) -> DlrReport:
    """Consistency of nested specifications, checked statistically.

    Draws from the outer specification with empty boundary, then resamples the
    inner region conditionally on each draw's own exterior; for every test
    functional the paired difference must vanish within the statistical error.
    Also asserts the structural locality of the weight: boundary changes
    outside the range collar leave it bit-identical.
    """
    if model.potential.range_R is None:
        raise RequiresFiniteRange("the DLR check needs a finite-range potential")
    if not outer_region.contains_box(inner_region):
        raise RegionOutOfBounds("inner region must sit inside the outer region")
    if functionals is None:
        functionals = {
            "inner_count": lambda cfg: float(len(restrict(cfg, inner_region))),
            "total_count": lambda cfg: float(len(cfg)),
        }
    rng = philox_rng(seed, 17)
    draws = rejection_sample_batch(model, outer_region, EMPTY_BOUNDARY,
                                   n_samples, rng)

    # group draws by their exterior-of-inner part so empty exteriors batch up
    exteriors: dict[tuple, list[int]] = {}
    exterior_cfgs: dict[tuple, FiniteConfiguration] = {}
    for i, cfg in enumerate(draws):
        ext = FiniteConfiguration(tuple(
            p for p in cfg.points if not inner_region.contains_point(p.position)))
        key = tuple((p.position, p.mark) for p in ext.points)
        exteriors.setdefault(key, []).append(i)
        exterior_cfgs[key] = ext

    resampled: list[FiniteConfiguration | None] = [None] * len(draws)
    for key, indices in exteriors.items():
        ext = exterior_cfgs[key]
        bc = BoundaryCondition(ext)
        inner_draws = rejection_sample_batch(model, inner_region, bc,
                                             len(indices), rng)
        for idx, inner in zip(indices, inner_draws):
            resampled[idx] = FiniteConfiguration(
                tuple(sorted(ext.points + inner.points, key=lambda p: p.position)))

    disc, ses, zs = {}, {}, {}
    ok = True
    for name, fn in functionals.items():
        diffs = np.asarray([fn(b) - fn(a) for a, b in zip(draws, resampled)])
        mean = float(diffs.mean())
        se = float(diffs.std(ddof=1)) / math.sqrt(diffs.size) if diffs.size > 1 else 0.0
        disc[name] = mean
        ses[name] = se
        zs[name] = abs(mean) / se if se > 0 else 0.0
        if zs[name] > z_threshold:
            ok = False
    violations = collar_locality_trials(model, inner_region,
                                        trials=locality_trials, seed=seed + 1)
    if violations:
        ok = False
    return DlrReport(n_samples=n_samples, discrepancies=disc,
                     standard_errors=ses, z_scores=zs,
                     locality_trials=locality_trials,
                     locality_violations=violations, passed=ok)


def collar_locality_trials(model: ModelSpec, region: Box, trials: int = 1000,
                           seed: int = 0) -> int:
    """Exact locality: perturbing the boundary outside the range collar leaves
    the specification weight bit-identical. Returns the violation count."""
    rng_r = model.potential.range_R
    if rng_r is None:
        raise RequiresFiniteRange("locality check needs a finite-range potential")
    rng = philox_rng(seed, 23)
    space_box = model.space.box
    violations = 0
    for _ in range(trials):
        candidate = poisson_sample(model, region, rng)
        near = []
        collar = region.expand(rng_r).clip_to(space_box)
        for _ in range(int(rng.integers(0, 3))):
            pos = np.asarray(collar.lower) + rng.random(region.dimension) * (
                np.asarray(collar.upper) - np.asarray(collar.lower))
            if not region.contains_point(tuple(pos)):
                near.append(MarkedPoint(tuple(pos), float(model.marks.sample(rng, 1)[0])))
        far = []
        for _ in range(int(rng.integers(1, 4))):
            pos = np.asarray(space_box.lower) + rng.random(region.dimension) * (
                np.asarray(space_box.upper) - np.asarray(space_box.lower))
            if not collar.contains_point(tuple(pos)):
                far.append(MarkedPoint(tuple(pos), float(model.marks.sample(rng, 1)[0])))
        base = specification_weight(candidate, BoundaryCondition(
            canonicalize(near)), model, region)
        perturbed = specification_weight(candidate, BoundaryCondition(
            canonicalize(near + far)), model, region)
        if base != perturbed:
            violations += 1
    return violations


def write_sample_file(path, samples: Sequence[FiniteConfiguration], dimension: int):
    """Line-delimited sample spill: count then per-point coordinates and mark."""
    with open(path, "w") as fh:
        fh.write(f"# markedgibbs-samples v1 d={dimension}\n")
        for cfg in samples:
            fields = [str(len(cfg))]
            for p in cfg.points:
                fields.extend(f"{x!r}" for x in p.position)
                fields.append(f"{p.mark!r}")
            fh.write(" ".join(fields) + "\n")


def read_sample_file(path) -> list[FiniteConfiguration]:
    """Inverse of write_sample_file."""
    out = []
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# markedgibbs-samples v1"):
            raise ValueError("unrecognized sample file header")
        d = int(header.split("d=")[1])
        for line in fh:
            parts = line.split()
            n = int(parts[0])
            pts = []
            for j in range(n):
                base = 1 + j * (d + 1)
                pos = tuple(float(x) for x in parts[base:base + d])
                pts.append(MarkedPoint(pos, float(parts[base + d])))
            out.append(FiniteConfiguration(tuple(pts)))
    return out
