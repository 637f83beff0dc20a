"""Numerical Lebesgue-Poisson integration.

The measure weights n-point components by z^n/n!, so an integral of a
symmetric integrand family f is sum_n (z^n/n!) times the n-fold product
integral over region x marks. Tensor midpoint grids serve low total dimension
(d*n <= 6); above that seeded Monte Carlo is mandatory. All reductions run in
a fixed chunked order so results are bit-reproducible and worker-count
independent; the PRNG is counter-based (Philox).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import NonFiniteIntegrand, SchemeMismatch
from .model import Box, FiniteConfiguration, MarkedPoint, ModelSpec

TENSOR_DIMENSION_CAP = 6
TENSOR_NODE_BUDGET = 1 << 23
_CHUNK = 1 << 18


def philox_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic counter-based generator; extra ints select substreams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed,) + stream)))


@dataclass(frozen=True)
class QuadratureScheme:
    """Node plan for the n-fold position-mark integrals.

    ``points_per_axis`` may be a single count or a tuple indexed by the particle
    number n (the last entry repeats beyond the tuple). ``mark_rule`` "auto"
    resolves per mark kind: exact sums for discrete marks, periodic trapezoid
    for circle marks, Gauss-Legendre for interval marks.
    """

    kind: str  # "tensor_grid" | "monte_carlo"
    points_per_axis: int | tuple[int, ...] | None = None
    samples: int | None = None
    seed: int = 0
    mark_rule: str = "auto"  # "auto" | "exact_discrete" | "trapezoid" | "gauss"
    mark_nodes: int = 16
    mc_fallback_samples: int | None = None

    def __post_init__(self):
        if self.kind not in ("tensor_grid", "monte_carlo"):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "tensor_grid":
            pts = self.points_per_axis
            ok = (isinstance(pts, int) and pts > 0) or (
                isinstance(pts, tuple) and pts and all(p > 0 for p in pts))
            if not ok:
                raise ValueError("tensor_grid needs positive points_per_axis")
        else:
            if not self.samples or self.samples <= 0:
                raise ValueError("monte_carlo needs a positive sample count")
        if self.mark_nodes <= 0:
            raise ValueError("mark node count must be positive")

    @staticmethod
    def tensor(points_per_axis, mark_rule="auto", mark_nodes=16,
               mc_fallback_samples=None, seed=0) -> "QuadratureScheme":
        pts = points_per_axis if isinstance(points_per_axis, int) else tuple(points_per_axis)
        return QuadratureScheme(kind="tensor_grid", points_per_axis=pts,
                                mark_rule=mark_rule, mark_nodes=mark_nodes,
                                mc_fallback_samples=mc_fallback_samples, seed=seed)

    @staticmethod
    def monte_carlo(samples: int, seed: int = 0, mark_rule="auto",
                    mark_nodes=16) -> "QuadratureScheme":
        return QuadratureScheme(kind="monte_carlo", samples=samples, seed=seed,
                                mark_rule=mark_rule, mark_nodes=mark_nodes)

    def grid_points_for(self, n: int) -> int:
        pts = self.points_per_axis
        if isinstance(pts, int):
            return pts
        return pts[min(n - 1, len(pts) - 1)]

    def echo(self) -> dict:
        return {
            "kind": self.kind,
            "points_per_axis": self.points_per_axis,
            "samples": self.samples,
            "seed": self.seed,
            "mark_rule": self.mark_rule,
            "mark_nodes": self.mark_nodes,
            "mc_fallback_samples": self.mc_fallback_samples,
            "generator": "philox",
        }


@dataclass(frozen=True)
class IntegralEstimate:
    """Value with a nonnegative error figure (grid refinement delta or MC s.e.)."""

    value: float
    error: float
    scheme_echo: dict
    terms: tuple[float, ...] = ()
    term_errors: tuple[float, ...] = ()

    def __post_init__(self):
        if self.error < 0:
            raise ValueError("error must be nonnegative")


def resolve_mark_rule(model: ModelSpec, scheme: QuadratureScheme) -> str:
    kind = model.marks.kind
    rule = scheme.mark_rule
    if rule == "auto":
        return {"discrete": "exact_discrete", "circle": "trapezoid",
                "interval": "gauss"}[kind]
    if rule == "exact_discrete" and kind != "discrete":
        raise SchemeMismatch("exact_discrete needs discrete marks")
    if rule == "trapezoid" and kind != "circle":
        raise SchemeMismatch("periodic trapezoid rule needs circle marks")
    if rule == "gauss" and kind == "circle":
        raise SchemeMismatch("use the trapezoid rule for circle marks")
    return rule


def mark_nodes_weights(model: ModelSpec, scheme: QuadratureScheme
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Single-point mark nodes and weights; weights sum to the mark mass."""
    marks = model.marks
    rule = resolve_mark_rule(model, scheme)
    if rule == "exact_discrete":
        return np.asarray(marks.labels), np.asarray(marks.weights, dtype=float)
    if rule == "trapezoid":
        m = scheme.mark_nodes
        return (2.0 * math.pi * np.arange(m) / m,
                np.full(m, marks.total_mass / m))
    nodes, weights = np.polynomial.legendre.leggauss(scheme.mark_nodes)
    half = 0.5 * (marks.upper - marks.lower)
    density = marks.total_mass / (marks.upper - marks.lower)
    return marks.lower + half * (nodes + 1.0), weights * half * density


def _position_nodes(region: Box, per_axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint-rule nodes over the region; weights sum to the volume."""
    d = region.dimension
    axes = []
    for k in range(d):
        lo, hi = region.lower[k], region.upper[k]
        h = (hi - lo) / per_axis
        axes.append(lo + (np.arange(per_axis) + 0.5) * h)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    weights = np.full(mesh.shape[0], region.volume / mesh.shape[0])
    return mesh, weights


@dataclass(frozen=True)
class SlotDomain:
    """Integration domain of one particle slot: a box plus an optional indicator."""

    box: Box
    indicator: Callable[[np.ndarray], np.ndarray] | None = None


def _single_nodes(model, domain: SlotDomain, per_axis: int, scheme
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos, pw = _position_nodes(domain.box, per_axis)
    mv, mw = mark_nodes_weights(model, scheme)
    npos, nmark = pos.shape[0], mv.shape[0]
    positions = np.repeat(pos, nmark, axis=0)
    marks = np.tile(mv, npos)
    weights = np.repeat(pw, nmark) * np.tile(mw, npos)
    if domain.indicator is not None:
        weights = weights * domain.indicator(positions)
    return positions, marks, weights


def product_node_batches(model: ModelSpec, domains: Sequence[SlotDomain],
                         scheme: QuadratureScheme
                         ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (positions (K,n,d), marks (K,n), weights (K,)) chunks for an
    n-fold product integral with one domain per particle slot."""
    n = len(domains)
    d = model.space.dimension
    if n == 0:
        yield np.zeros((1, 0, d)), np.zeros((1, 0)), np.ones(1)
        return
    if scheme.kind == "tensor_grid":
        if d * n > TENSOR_DIMENSION_CAP:
            raise SchemeMismatch(
                f"tensor grid over {d * n} dimensions exceeds the cap "
                f"{TENSOR_DIMENSION_CAP}; use Monte Carlo")
        per_axis = scheme.grid_points_for(n)
        singles = [_single_nodes(model, dom, per_axis, scheme) for dom in domains]
        sizes = [s[0].shape[0] for s in singles]
        total = math.prod(sizes)
        if total > TENSOR_NODE_BUDGET:
            raise SchemeMismatch(
                f"tensor grid would enumerate {total} nodes at order n={n}; "
                "lower points_per_axis for this order or use Monte Carlo")
        for start in range(0, total, _CHUNK):
            stop = min(start + _CHUNK, total)
            flat = np.arange(start, stop)
            idx = np.array(np.unravel_index(flat, sizes)).T  # (K, n)
            positions = np.stack([singles[j][0][idx[:, j]] for j in range(n)], axis=1)
            marks = np.stack([singles[j][1][idx[:, j]] for j in range(n)], axis=1)
            weights = np.ones(stop - start)
            for j in range(n):
                weights = weights * singles[j][2][idx[:, j]]
            yield positions, marks, weights
        return

    # Monte Carlo: iid draws per slot, weight = product of slot masses / samples
    rng = philox_rng(scheme.seed, n)
    total_samples = scheme.samples
    base_mass = math.prod(dom.box.volume for dom in domains) * \
        model.marks.total_mass ** n
    done = 0
    while done < total_samples:
        k = min(_CHUNK, total_samples - done)
        positions = np.empty((k, n, d))
        marks = np.empty((k, n))
        keep = np.ones(k, dtype=bool)
        for j, dom in enumerate(domains):
            lo = np.asarray(dom.box.lower)
            hi = np.asarray(dom.box.upper)
            positions[:, j, :] = lo + rng.random((k, d)) * (hi - lo)
            marks[:, j] = model.marks.sample(rng, k)
            if dom.indicator is not None:
                keep &= dom.indicator(positions[:, j, :]).astype(bool)
        weights = np.where(keep, base_mass / total_samples, 0.0)
        yield positions, marks, weights
        done += k


def marked_point_nodes(model: ModelSpec, region: Box, n: int,
                       scheme: QuadratureScheme
                       ) -> Iterator[tuple[tuple[MarkedPoint, ...], float]]:
    """Stream (n-tuple of MarkedPoint, weight) nodes for the n-fold integral."""
    if n < 1:
        raise ValueError("need n >= 1")
    domains = [SlotDomain(region)] * n
    for positions, marks, weights in product_node_batches(model, domains, scheme):
        for row in range(positions.shape[0]):
            pts = tuple(MarkedPoint(tuple(positions[row, j]), float(marks[row, j]))
                        for j in range(n))
            yield pts, float(weights[row])


def chunked_sum(values_chunks: list[np.ndarray]) -> float:
    """Fixed-order pairwise reduction over chunks (worker-count invariant)."""
    partials = np.array([np.sum(chunk) for chunk in values_chunks])
    return float(np.sum(partials))


def resolve_scheme_for_order(scheme: QuadratureScheme, d: int, n: int
                             ) -> QuadratureScheme:
    """Swap a tensor grid for its Monte Carlo fallback above the dimension cap."""
    if scheme.kind == "tensor_grid" and d * n > TENSOR_DIMENSION_CAP:
        if scheme.mc_fallback_samples is None:
            raise SchemeMismatch(
                f"order n={n} needs {d * n} grid dimensions; set "
                "mc_fallback_samples or use a Monte Carlo scheme")
        return QuadratureScheme.monte_carlo(scheme.mc_fallback_samples,
                                            seed=scheme.seed,
                                            mark_rule=scheme.mark_rule,
                                            mark_nodes=scheme.mark_nodes)
    return scheme


BatchIntegrand = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


def scalar_integrand(fn: Callable[[FiniteConfiguration], float]) -> BatchIntegrand:
    """Adapt a configuration-level function to the batch integrand interface."""
    def batched(n: int, positions: np.ndarray, marks: np.ndarray) -> np.ndarray:
        out = np.empty(positions.shape[0])
        for row in range(positions.shape[0]):
            pts = [MarkedPoint(tuple(positions[row, j]), float(marks[row, j]))
                   for j in range(n)]
            out[row] = fn(FiniteConfiguration(tuple(sorted(pts, key=lambda p: p.position))))
        return out
    return batched


def product_region_integral(model: ModelSpec, domains: Sequence[SlotDomain],
                            integrand: BatchIntegrand, scheme: QuadratureScheme
                            ) -> tuple[float, float]:
    """One n-fold product integral; returns (value, error figure).

    Grid error is the difference against a halved grid; MC error is the
    standard error of the mean.
    """
    n = len(domains)

    def run(sch) -> tuple[float, float, int]:
        sums, sq, count = [], [], 0
        for positions, marks, weights in product_node_batches(model, domains, sch):
            vals = np.asarray(integrand(n, positions, marks), dtype=float)
            if np.any(np.isnan(vals)):
                raise NonFiniteIntegrand("integrand returned NaN")
            contrib = weights * vals
            sums.append(contrib)
            sq.append(contrib * contrib)
            count += contrib.shape[0]
        return chunked_sum(sums), chunked_sum(sq), count

    if scheme.kind == "tensor_grid":
        value, _, _ = run(scheme)
        per_axis = scheme.grid_points_for(n)
        coarse_pts = max(1, per_axis // 2)
        coarse = replace(scheme, points_per_axis=coarse_pts)
        coarse_value, _, _ = run(coarse)
        return value, abs(value - coarse_value)

    value, sumsq, count = run(scheme)
    # value = sum_i v_i with v_i = w_i f_i; s.e.(value) = sqrt(K * Var(v))
    var = max(0.0, sumsq - value * value / count) / max(1, count - 1)
    return value, math.sqrt(var * count)


def lp_integral(f: BatchIntegrand, model: ModelSpec, region: Box, N: int,
                scheme: QuadratureScheme) -> IntegralEstimate:
    """Truncated Lebesgue-Poisson integral sum_{n<=N} (z^n/n!) I_n(f).

    The n = 0 term is the integrand's value on the empty configuration.
    """
    d = model.space.dimension
    empty = np.asarray(f(0, np.zeros((1, 0, d)), np.zeros((1, 0))), dtype=float)
    terms = [float(empty[0])]
    errors = [0.0]
    for n in range(1, N + 1):
        sch = resolve_scheme_for_order(scheme, d, n)
        domains = [SlotDomain(region)] * n
        value, err = product_region_integral(model, domains, f, sch)
        factor = model.z ** n / math.factorial(n)
        terms.append(factor * value)
        errors.append(factor * err)
    return IntegralEstimate(value=float(np.sum(np.asarray(terms))),
                            error=float(np.sum(np.asarray(errors))),
                            scheme_echo=scheme.echo(),
                            terms=tuple(terms), term_errors=tuple(errors))
