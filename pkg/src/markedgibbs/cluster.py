"""Ursell coefficients, tree-graph bounds, convergence certificates, truncated series.

The production Ursell path is an anchored subset recursion (the Moebius
inversion of the cluster decomposition of the Gibbs factor), O(3^n) per
configuration and vectorized over quadrature-node batches. Connected-graph
sums survive only as a small-n oracle. For finite-range potentials, Ursell
values on range-disconnected subsets are exactly zero (every connected graph
carries a zero Mayer factor), and the tables enforce that exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import starcalc
from .combinat import enumerate_connected_graphs, enumerate_trees
from .errors import (InfiniteCBeta, IntegrationFailure, NonFiniteIntegrand,
                     OutsideRadius, OverlappingConfigurations,
                     RequiresFiniteRange, SizeLimit)
from .lpintegrate import (IntegralEstimate, QuadratureScheme, SlotDomain,
                          lp_integral, product_region_integral,
                          resolve_scheme_for_order)
from .model import Box, FiniteConfiguration, MarkedPoint, ModelSpec
from .potential import (boltzmann_factor_batch, check_integrability,
                        cross_phi_matrix, mayer_factor, mayer_factor_batch,
                        pair_phi_matrix)

URSELL_SIZE_CAP = 16
TREE_ZETA_CAP = 8
KBAR_GROUND_CAP = 12


# ---------------------------------------------------------------------------
# batched subset tables


def _combined_arrays(model: ModelSpec, fixed: FiniteConfiguration,
                     positions: np.ndarray, marks: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Put fixed points first, node points after: (K, m+n, d), (K, m+n)."""
    k_rows = positions.shape[0]
    m = len(fixed)
    d = model.space.dimension
    if m:
        fpos = np.broadcast_to(fixed.positions_array(), (k_rows, m, d))
        fmarks = np.broadcast_to(fixed.marks_array(), (k_rows, m))
        positions = np.concatenate([fpos, positions], axis=1)
        marks = np.concatenate([fmarks, marks], axis=1)
    return positions, marks


def _rho_table(bfac: np.ndarray) -> np.ndarray:
    """Subset Boltzmann weights as incremental pair-factor products: (K, 2^M).

    Building by products (not exponentials of energy sums) keeps the exact
    factorization over range-disconnected parts: out-of-range factors are
    exactly 1 and multiplying by 1.0 is the float identity.
    """
    k_rows, m_pts, _ = bfac.shape
    rho = np.empty((k_rows, 1 << m_pts))
    rho[:, 0] = 1.0
    for mask in range(1, 1 << m_pts):
        low_bit = mask & -mask
        low = low_bit.bit_length() - 1
        rest = mask ^ low_bit
        acc = rho[:, rest].copy()
        r = rest
        while r:
            j = (r & -r).bit_length() - 1
            acc *= bfac[:, low, j]
            r &= r - 1
        rho[:, mask] = acc
    return rho


def _adjacency_bits(model: ModelSpec, positions: np.ndarray) -> np.ndarray | None:
    """Per-row range-proximity adjacency as vertex bitmasks, or None if no range."""
    rng = model.potential.range_R
    if rng is None:
        return None
    k_rows, m_pts, _ = positions.shape
    if m_pts == 0:
        return np.zeros((k_rows, 0), dtype=np.int64)
    dist = model.space.distance_batch(positions[:, :, None, :], positions[:, None, :, :])
    close = dist < rng
    idx = np.arange(m_pts)
    close[:, idx, idx] = False
    weights = (1 << idx).astype(np.int64)
    return (close * weights[None, None, :]).sum(axis=2).astype(np.int64)


def _connected_rows(adj_bits: np.ndarray, mask: int) -> np.ndarray:
    """Which batch rows have a connected proximity graph on the given subset."""
    low = (mask & -mask).bit_length() - 1
    comp = np.full(adj_bits.shape[0], 1 << low, dtype=np.int64)
    bits = [b for b in range(adj_bits.shape[1]) if mask >> b & 1]
    for _ in range(len(bits) - 1):
        new = comp.copy()
        for v in bits:
            has = (comp >> v) & 1
            new |= has * adj_bits[:, v]
        new &= mask
        if np.array_equal(new, comp):
            break
        comp = new
    return comp == mask


def _ursell_table_batch(rho: np.ndarray, adj_bits: np.ndarray | None = None
                        ) -> np.ndarray:
    """Ursell values on all subsets from the Boltzmann table: (K, 2^M).

    Anchored recursion: with x0 the lowest index of V,
    k(V) = rho(V) - sum over proper subsets S of V containing x0 of k(S) rho(V\\S).
    """
    k_rows, size = rho.shape
    out = np.zeros((k_rows, size))
    for mask in range(1, size):
        low_bit = mask & -mask
        rest = mask ^ low_bit
        if rest == 0:
            out[:, mask] = rho[:, mask]
            continue
        acc = rho[:, mask].copy()
        u = (rest - 1) & rest
        while True:
            t = u | low_bit
            acc -= out[:, t] * rho[:, mask ^ t]
            if u == 0:
                break
            u = (u - 1) & rest
        if adj_bits is not None:
            acc = np.where(_connected_rows(adj_bits, mask), acc, 0.0)
        out[:, mask] = acc
    return out


def _expstar_batch(psi: np.ndarray) -> np.ndarray:
    """Vectorized star-exponential of a (K, 2^M) table with psi[:, 0] = 0."""
    k_rows, size = psi.shape
    out = np.empty_like(psi)
    out[:, 0] = 1.0
    for mask in range(1, size):
        low_bit = mask & -mask
        rest = mask ^ low_bit
        acc = np.zeros(k_rows)
        u = rest
        while True:
            t = u | low_bit
            acc += psi[:, t] * out[:, mask ^ t]
            if u == 0:
                break
            u = (u - 1) & rest
        out[:, mask] = acc
    return out


def _pair_tables(model: ModelSpec, positions: np.ndarray, marks: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
    phi_m = pair_phi_matrix(model.potential, positions, marks)
    return boltzmann_factor_batch(phi_m, model.beta), phi_m


def ursell_batch(model: ModelSpec, fixed: FiniteConfiguration,
                 positions: np.ndarray, marks: np.ndarray) -> np.ndarray:
    """k(fixed + nodes) for a batch of node tuples: returns (K,)."""
    positions, marks = _combined_arrays(model, fixed, positions, marks)
    m_total = positions.shape[1]
    if m_total == 0:
        return np.zeros(positions.shape[0])
    bfac, _ = _pair_tables(model, positions, marks)
    rho = _rho_table(bfac)
    table = _ursell_table_batch(rho, _adjacency_bits(model, positions))
    return table[:, (1 << m_total) - 1]


def kbar_batch_split(model: ModelSpec, positions: np.ndarray, marks: np.ndarray,
                     fixed_count: int) -> np.ndarray:
    """Two-argument cluster coefficient over combined point arrays.

    The first ``fixed_count`` slots form the anchored argument, the rest the
    varying one; evaluates (exp*(-k) * D_anchor rho) at the varying subset,
    vectorized over the batch.
    """
    k_rows = positions.shape[0]
    m = fixed_count
    m_total = positions.shape[1]
    n = m_total - m
    if m == 0:
        return np.full(k_rows, 1.0 if n == 0 else 0.0)
    bfac, _ = _pair_tables(model, positions, marks)
    rho = _rho_table(bfac)
    kt = _ursell_table_batch(rho, _adjacency_bits(model, positions))
    a_table = _expstar_batch(-kt)
    omega_mask = (1 << m) - 1
    zeta_mask = ((1 << m_total) - 1) ^ omega_mask
    acc = np.zeros(k_rows)
    t = zeta_mask
    while True:
        acc += a_table[:, t] * rho[:, (zeta_mask ^ t) | omega_mask]
        if t == 0:
            break
        t = (t - 1) & zeta_mask
    return acc


def kbar_batch(model: ModelSpec, fixed: FiniteConfiguration,
               positions: np.ndarray, marks: np.ndarray) -> np.ndarray:
    """kbar of a fixed anchor configuration against node batches: (K,)."""
    m = len(fixed)
    if m == 0:
        n = positions.shape[1]
        return np.full(positions.shape[0], 1.0 if n == 0 else 0.0)
    positions, marks = _combined_arrays(model, fixed, positions, marks)
    return kbar_batch_split(model, positions, marks, m)


# ---------------------------------------------------------------------------
# scalar spec surface


@dataclass(frozen=True)
class UrsellTable:
    """Ursell values for every subset of a ground configuration."""

    ground: FiniteConfiguration
    values: np.ndarray

    def value(self, indices: Sequence[int]) -> float:
        mask = 0
        for i in indices:
            mask |= 1 << i
        return float(self.values[mask])

    @property
    def full(self) -> float:
        return float(self.values[-1])

    def as_functional(self) -> starcalc.ConfigFunctional:
        return starcalc.ConfigFunctional(len(self.ground), self.values.copy())


def boltzmann_functional(omega: FiniteConfiguration, model: ModelSpec
                         ) -> starcalc.ConfigFunctional:
    """Subset table of Gibbs factors exp(-beta E) on the ground configuration."""
    n = len(omega)
    if n == 0:
        return starcalc.unit(0)
    pos = omega.positions_array()[None, :, :]
    mks = omega.marks_array()[None, :]
    bfac, _ = _pair_tables(model, pos, mks)
    return starcalc.ConfigFunctional(n, _rho_table(bfac)[0])


def ursell_direct(omega: FiniteConfiguration, model: ModelSpec) -> float:
    """Oracle: sum over connected graphs of Mayer-factor products (n <= 5)."""
    n = len(omega)
    if n > 5:
        raise SizeLimit("direct connected-graph sum is capped at 5 points")
    if n == 0:
        return 0.0
    if n == 1:
        return 1.0
    pts = omega.points
    f = {}
    for i in range(n):
        for j in range(i + 1, n):
            f[(i, j)] = mayer_factor(model.potential.evaluate(pts[i], pts[j]),
                                     model.beta)
    terms = []
    for g in enumerate_connected_graphs(n):
        terms.append(math.prod(f[e] for e in g.edges))
    return math.fsum(terms)


def ursell_table(omega: FiniteConfiguration, model: ModelSpec,
                 size_cap: int = URSELL_SIZE_CAP) -> UrsellTable:
    """Ursell values on all subsets via the anchored subset recursion."""
    n = len(omega)
    if n > size_cap:
        raise SizeLimit(f"ground of {n} points exceeds the cap {size_cap}")
    if n == 0:
        return UrsellTable(omega, np.zeros(1))
    pos = omega.positions_array()[None, :, :]
    mks = omega.marks_array()[None, :]
    bfac, _ = _pair_tables(model, pos, mks)
    rho = _rho_table(bfac)
    table = _ursell_table_batch(rho, _adjacency_bits(model, pos))
    return UrsellTable(omega, table[0])


def _split_disjoint(omega: FiniteConfiguration, zeta: FiniteConfiguration):
    if omega.position_set() & zeta.position_set():
        raise OverlappingConfigurations("fixed and varying points overlap")


def kbar(omega: FiniteConfiguration, zeta: FiniteConfiguration,
         model: ModelSpec) -> float:
    """Two-argument cluster coefficient via its star-calculus definition.

    Computed on the combined ground; the vectorized path `kbar_batch` must
    agree with this and the recursion `kbar_recursive` validates both.
    """
    _split_disjoint(omega, zeta)
    if len(omega) + len(zeta) > KBAR_GROUND_CAP:
        raise SizeLimit(f"combined ground exceeds {KBAR_GROUND_CAP}")
    if len(omega) == 0:
        return 1.0 if len(zeta) == 0 else 0.0
    ground = omega.union(zeta)
    omega_positions = omega.position_set()
    omega_mask = 0
    zeta_mask = 0
    for i, p in enumerate(ground.points):
        if p.position in omega_positions:
            omega_mask |= 1 << i
        else:
            zeta_mask |= 1 << i
    rho = boltzmann_functional(ground, model)
    kfun = starcalc.star_log(rho)
    a = starcalc.star_exp(kfun.scale(-1.0))
    b = starcalc.d_shift(rho, omega_mask)
    return starcalc.star_mul(a, b)(zeta_mask)


def kbar_recursive(omega: FiniteConfiguration, zeta: FiniteConfiguration,
                   model: ModelSpec) -> float:
    """Anchored recursion for the two-argument coefficient (test-only path)."""
    _split_disjoint(omega, zeta)
    points = omega.points + zeta.points
    m = len(omega.points)
    total = len(points)
    beta = model.beta
    pot = model.potential
    bolt = np.zeros((total, total))
    mayer = np.zeros((total, total))
    for i in range(total):
        for j in range(total):
            if i != j:
                v = pot.evaluate(points[i], points[j])
                mayer[i, j] = mayer_factor(v, beta)
                bolt[i, j] = 1.0 + mayer[i, j]

    from functools import lru_cache as _lru

    @_lru(maxsize=None)
    def rec(wmask: int, zmask: int) -> float:
        if wmask == 0:
            return 1.0 if zmask == 0 else 0.0
        x0 = (wmask & -wmask).bit_length() - 1
        rest = wmask ^ (1 << x0)
        w_factor = 1.0
        r = rest
        while r:
            j = (r & -r).bit_length() - 1
            w_factor *= bolt[x0, j]
            r &= r - 1
        acc = 0.0
        u = zmask
        while True:
            prod = 1.0
            r = u
            while r:
                j = (r & -r).bit_length() - 1
                prod *= mayer[x0, j]
                r &= r - 1
            acc += prod * rec(rest | u, zmask ^ u)
            if u == 0:
                break
            u = (u - 1) & zmask
        return w_factor * acc

    wmask = (1 << m) - 1
    zmask = ((1 << total) - 1) ^ wmask
    return rec(wmask, zmask)


# ---------------------------------------------------------------------------
# tree-graph bounds


@lru_cache(maxsize=16)
def _tree_edges(m: int) -> np.ndarray:
    """Edge arrays of every labeled tree on m vertices: (T, m-1, 2)."""
    if m == 1:
        return np.zeros((1, 0, 2), dtype=np.int64)
    trees = []
    for t in enumerate_trees(m):
        trees.append(sorted(t.edges))
    return np.asarray(trees, dtype=np.int64)


def tree_abs_sum_batch(abs_mayer: np.ndarray) -> np.ndarray:
    """sum over labeled trees of the product of |Mayer| edge weights: (K,)."""
    k_rows, m_pts, _ = abs_mayer.shape
    if m_pts == 1:
        return np.ones(k_rows)
    edges = _tree_edges(m_pts)
    out = np.zeros(k_rows)
    block = 4096
    for start in range(0, edges.shape[0], block):
        chunk = edges[start:start + block]
        gathered = abs_mayer[:, chunk[:, :, 0], chunk[:, :, 1]]
        out += gathered.prod(axis=-1).sum(axis=-1)
    return out


def _abs_mayer_matrix(model: ModelSpec, points: Sequence[MarkedPoint]) -> np.ndarray:
    pos = np.asarray([p.position for p in points], dtype=float)[None, :, :]
    mks = np.asarray([p.mark for p in points], dtype=float)[None, :]
    phi_m = pair_phi_matrix(model.potential, pos, mks)
    return np.abs(mayer_factor_batch(phi_m, model.beta))[0]


def tree_bound_q(anchor: MarkedPoint, zeta: FiniteConfiguration,
                 model: ModelSpec) -> float:
    """Single-anchor tree majorant: e^{2 beta B (|zeta|+1)} times the tree sum."""
    if len(zeta) > TREE_ZETA_CAP:
        raise SizeLimit(f"|zeta| exceeds the tree cap {TREE_ZETA_CAP}")
    points = (anchor,) + zeta.points
    m = len(points)
    prefactor = math.exp(2.0 * model.beta * model.potential.stability_B) ** m
    if m == 1:
        return prefactor
    abs_mayer = _abs_mayer_matrix(model, points)
    return prefactor * float(tree_abs_sum_batch(abs_mayer[None, :, :])[0])


def tree_bound_q_multi(omega: FiniteConfiguration, zeta: FiniteConfiguration,
                       model: ModelSpec) -> float:
    """Multi-anchor majorant assembled by the ordered-partition sum over zeta."""
    _split_disjoint(omega, zeta)
    l = len(omega)
    if l == 0:
        return 1.0 if len(zeta) == 0 else 0.0
    if l == 1:
        return tree_bound_q(omega.points[0], zeta, model)
    nz = len(zeta)
    if nz > TREE_ZETA_CAP:
        raise SizeLimit(f"|zeta| exceeds the tree cap {TREE_ZETA_CAP}")

    cache: dict[tuple[int, int], float] = {}

    def q_single(i: int, mask: int) -> float:
        key = (i, mask)
        if key not in cache:
            sub = [zeta.points[j] for j in range(nz) if mask >> j & 1]
            cache[key] = tree_bound_q(omega.points[i], FiniteConfiguration(tuple(sub)),
                                      model)
        return cache[key]

    total = 0.0
    import itertools
    for assignment in itertools.product(range(l), repeat=nz):
        masks = [0] * l
        for j, slot in enumerate(assignment):
            masks[slot] |= 1 << j
        prod = 1.0
        for i in range(l):
            prod *= q_single(i, masks[i])
        total += prod
    return total


def tree_bound_recursive(omega: FiniteConfiguration, zeta: FiniteConfiguration,
                         model: ModelSpec, anchor_policy: str = "first") -> float:
    """Solve the anchored majorant recursion; equals the closed form for any policy.

    ``anchor_policy`` picks the anchor inside the evolving first argument:
    "first" (lowest combined index) or "last" (highest).
    """
    _split_disjoint(omega, zeta)
    total_pts = len(omega) + len(zeta)
    if total_pts > TREE_ZETA_CAP:
        raise SizeLimit(f"|omega|+|zeta| exceeds the cap {TREE_ZETA_CAP}")
    points = omega.points + zeta.points
    e2bb = math.exp(2.0 * model.beta * model.potential.stability_B)
    if total_pts == 0:
        return 1.0
    abs_mayer = _abs_mayer_matrix(model, points) if total_pts > 1 else np.zeros((1, 1))

    def pick(mask: int) -> int:
        if anchor_policy == "first":
            return (mask & -mask).bit_length() - 1
        if anchor_policy == "last":
            return mask.bit_length() - 1
        raise ValueError(f"unknown anchor policy {anchor_policy!r}")

    from functools import lru_cache as _lru

    @_lru(maxsize=None)
    def rec(wmask: int, zmask: int) -> float:
        if wmask == 0:
            return 1.0 if zmask == 0 else 0.0
        x0 = pick(wmask)
        base = wmask ^ (1 << x0)
        acc = 0.0
        u = zmask
        while True:
            prod = 1.0
            r = u
            while r:
                j = (r & -r).bit_length() - 1
                prod *= abs_mayer[x0, j]
                r &= r - 1
            acc += prod * rec(base | u, zmask ^ u)
            if u == 0:
                break
            u = (u - 1) & zmask
        return e2bb * acc

    wmask = (1 << len(omega)) - 1
    zmask = ((1 << total_pts) - 1) ^ wmask
    return rec(wmask, zmask)


# ---------------------------------------------------------------------------
# convergence certificate and truncated series


@dataclass(frozen=True)
class RadiusReport:
    z_star: float
    c_beta: float
    within_radius: bool
    reference_grid_size: int

    def to_dict(self) -> dict:
        return {"z_star": self.z_star, "c_beta": self.c_beta,
                "within_radius": self.within_radius,
                "reference_grid_size": self.reference_grid_size}


def convergence_radius(model: ModelSpec, reference_grid_size: int = 48) -> RadiusReport:
    """Certified activity radius 1/(2e * e^{2 beta B} * C(beta))."""
    report = check_integrability(model.potential, model, reference_grid_size)
    if not report.finite:
        raise InfiniteCBeta("integrability constant is not finite")
    c = report.c_beta
    if c == 0.0:
        z_star = math.inf
    else:
        z_star = 1.0 / (2.0 * math.e *
                        math.exp(2.0 * model.beta * model.potential.stability_B) * c)
    return RadiusReport(z_star=z_star, c_beta=c,
                        within_radius=model.z < z_star,
                        reference_grid_size=reference_grid_size)


def tail_bound(model: ModelSpec, from_order: int,
               c_beta: float | None = None) -> float:
    """Geometric bound on the series mass discarded from the given order on."""
    if c_beta is None:
        c_beta = check_integrability(model.potential, model).c_beta
    if c_beta == 0.0:
        return 0.0
    q = 2.0 * model.z * math.e * c_beta * \
        math.exp(2.0 * model.beta * model.potential.stability_B)
    if q >= 1.0:
        raise OutsideRadius(f"geometric ratio q={q:.4g} >= 1")
    prefactor = model.mass() / c_beta
    return prefactor * q ** from_order / (1.0 - q)


def _default_series_scheme(seed: int = 0) -> QuadratureScheme:
    return QuadratureScheme.tensor((96, 48, 24, 14, 8, 6),
                                   mc_fallback_samples=20000, seed=seed)


def ursell_series_terms(model: ModelSpec, region: Box, N: int,
                        scheme: QuadratureScheme | None = None,
                        absolute: bool = False) -> IntegralEstimate:
    """Truncated series sum_n (z^n/n!) Int k (or |k|) over n region points."""
    scheme = scheme or _default_series_scheme()
    empty = FiniteConfiguration()

    def integrand(n, positions, marks):
        if n == 0:
            return np.zeros(positions.shape[0])
        vals = ursell_batch(model, empty, positions, marks)
        return np.abs(vals) if absolute else vals

    try:
        return lp_integral(integrand, model, region, N, scheme)
    except NonFiniteIntegrand as exc:
        raise IntegrationFailure(f"coefficient integral failed: {exc}") from exc


@dataclass(frozen=True)
class ExpansionReport:
    """Truncated log-partition series with its convergence certificate."""

    truncation_order: int
    coefficients: tuple[float, ...]
    coefficient_errors: tuple[float, ...]
    log_z: float
    integration_error: float
    tail_bound: float
    z_star: float
    c_beta: float
    within_radius: bool
    scheme_echo: dict

    def __post_init__(self):
        if self.tail_bound < 0:
            raise ValueError("tail bound must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "truncation_order": self.truncation_order,
            "coefficients": list(self.coefficients),
            "coefficient_errors": list(self.coefficient_errors),
            "log_z": self.log_z,
            "integration_error": self.integration_error,
            "tail_bound": self.tail_bound,
            "z_star": self.z_star,
            "c_beta": self.c_beta,
            "within_radius": self.within_radius,
            "scheme": self.scheme_echo,
        }


def log_partition_truncated(model: ModelSpec, region: Box, N: int,
                            scheme: QuadratureScheme | None = None,
                            radius_grid: int = 32) -> ExpansionReport:
    """Truncated cluster series for log of the empty-boundary partition function."""
    if N < 1:
        raise ValueError("need N >= 1")
    est = ursell_series_terms(model, region, N, scheme)
    radius = convergence_radius(model, radius_grid)
    if radius.within_radius:
        tail = tail_bound(model, N + 1, c_beta=radius.c_beta)
    else:
        tail = math.inf
    return ExpansionReport(
        truncation_order=N,
        coefficients=est.terms[1:],
        coefficient_errors=est.term_errors[1:],
        log_z=est.value,
        integration_error=est.error,
        tail_bound=tail,
        z_star=radius.z_star,
        c_beta=radius.c_beta,
        within_radius=radius.within_radius,
        scheme_echo=est.scheme_echo,
    )


def partition_direct_truncated(model: ModelSpec, region: Box,
                               boundary: FiniteConfiguration, N: int,
                               scheme: QuadratureScheme | None = None
                               ) -> IntegralEstimate:
    """Direct truncated partition function with a fixed exterior configuration.

    The energy in the exponent is the conditional one: pair energy of the new
    points plus their interaction with the boundary (the boundary's internal
    energy is a constant that the specification normalizes away).
    """
    if N < 0:
        raise ValueError("need N >= 0")
    scheme = scheme or _default_series_scheme()
    pot = model.potential
    beta = model.beta
    bpos = boundary.positions_array()
    bmarks = boundary.marks_array()

    def integrand(n, positions, marks):
        k_rows = positions.shape[0]
        if n == 0:
            return np.ones(k_rows)
        vals = np.ones(k_rows)
        if n > 1:
            phi_m = pair_phi_matrix(pot, positions, marks)
            bf = boltzmann_factor_batch(phi_m, beta)
            iu, ju = np.triu_indices(n, 1)
            vals = bf[:, iu, ju].prod(axis=-1)
        if len(boundary):
            cross = cross_phi_matrix(pot, positions, marks, bpos, bmarks)
            cb = boltzmann_factor_batch(cross, beta)
            vals = vals * cb.reshape(k_rows, -1).prod(axis=-1)
        return vals

    try:
        return lp_integral(integrand, model, region, N, scheme)
    except NonFiniteIntegrand as exc:
        raise IntegrationFailure(f"direct series integral failed: {exc}") from exc


def correlation_truncated(points: FiniteConfiguration, model: ModelSpec,
                          region: Box, N: int,
                          scheme: QuadratureScheme | None = None
                          ) -> IntegralEstimate:
    """Truncated correlation series: sum_n (z^n/n!) Int kbar(points, nodes).

    Follows the normalization without an activity prefactor for the fixed
    points; the n = 0 term is kbar(points, empty).
    """
    for p in points:
        if not region.contains_point(p.position):
            raise ValueError(f"correlation point {p.position} outside the region")
    scheme = scheme or _default_series_scheme()

    def integrand(n, positions, marks):
        return kbar_batch(model, points, positions, marks)

    try:
        return lp_integral(integrand, model, region, N, scheme)
    except NonFiniteIntegrand as exc:
        raise IntegrationFailure(f"correlation integral failed: {exc}") from exc


def averaged_correlation(model: ModelSpec, region: Box, m: int, N: int,
                         scheme: QuadratureScheme | None = None) -> IntegralEstimate:
    """Reference-measure average of the m-point correlation over the region.

    Integrates the fixed points out as extra slots, then divides by the
    region mass to the m-th power; for m = 1 this equals the expected count
    divided by z times the mass.
    """
    scheme = scheme or _default_series_scheme()
    d = model.space.dimension
    terms = []
    errors = []
    for n in range(0, N + 1):
        sch = resolve_scheme_for_order(scheme, d, m + n)
        domains = [SlotDomain(region)] * (m + n)

        def integrand(total, positions, marks):
            return kbar_batch_split(model, positions, marks, m)

        value, err = product_region_integral(model, domains, integrand, sch)
        factor = model.z ** n / math.factorial(n)
        terms.append(factor * value)
        errors.append(factor * err)
    norm = model.mass(region) ** m
    return IntegralEstimate(value=float(np.sum(np.asarray(terms))) / norm,
                            error=float(np.sum(np.asarray(errors))) / norm,
                            scheme_echo=scheme.echo(),
                            terms=tuple(t / norm for t in terms),
                            term_errors=tuple(e / norm for e in errors))


def correlation_tail_bound(model: ModelSpec, from_order: int,
                           c_beta: float | None = None) -> float:
    """Bound on the discarded mass of a 1-point correlation series.

    Combines the tree majorant of the two-argument coefficient with the
    integral tree bound and the tree-count factorial estimate:
    term_n <= e^{2 beta B} * e * (n+1) * (z e C e^{2 beta B})^n.
    """
    if c_beta is None:
        c_beta = check_integrability(model.potential, model).c_beta
    if c_beta == 0.0:
        return 0.0
    e2bb = math.exp(2.0 * model.beta * model.potential.stability_B)
    x = model.z * math.e * c_beta * e2bb
    if x >= 1.0:
        raise OutsideRadius(f"geometric ratio {x:.4g} >= 1")
    n0 = from_order
    # sum_{n>=n0} (n+1) x^n = x^{n0} (n0 + 1 - n0 x) / (1-x)^2
    series = x ** n0 * (n0 + 1 - n0 * x) / (1.0 - x) ** 2
    return e2bb * math.e * series


# ---------------------------------------------------------------------------
# local density of the limiting measure


def _collar_domain(model: ModelSpec, region: Box) -> SlotDomain | None:
    rng = model.potential.range_R
    if rng is None:
        raise RequiresFiniteRange("local limit density needs a finite-range potential")
    if rng == 0.0:
        return None
    if model.space.boundary == "periodic":
        bbox = model.space.box
    else:
        bbox = region.expand(rng).clip_to(model.space.box)

    def outside_region(positions: np.ndarray) -> np.ndarray:
        return (~region.contains_batch(positions)).astype(float)

    return SlotDomain(bbox, outside_region)


@dataclass(frozen=True, eq=False)
class LocalDensityProfile:
    """Reusable local description of the limiting measure on a sub-box.

    Caches the normalizer so repeated density evaluations share it. Exterior
    contributions integrate over the range collar of the sub-box; the
    coefficients vanish exactly on range-disconnected configurations, which is
    what localizes the exterior integral.
    """

    model: ModelSpec
    region: Box
    order: int
    scheme: QuadratureScheme
    collar: SlotDomain | None
    log_normalizer: float

    def exterior_ursell(self, config: FiniteConfiguration) -> float:
        """k integrated against collar configurations, truncated at the order."""
        if config.is_empty:
            return 0.0
        base = float(ursell_batch(self.model,
                                  FiniteConfiguration(),
                                  config.positions_array()[None, :, :],
                                  config.marks_array()[None, :])[0])
        if self.collar is None:
            return base
        total = base
        d = self.model.space.dimension
        for j in range(1, self.order + 1):
            def integrand(n, positions, marks, _cfg=config):
                return ursell_batch(self.model, _cfg, positions, marks)
            sch = resolve_scheme_for_order(self.scheme, d, j)
            value, _ = product_region_integral(self.model, [self.collar] * j,
                                               integrand, sch)
            total += self.model.z ** j / math.factorial(j) * value
        return total

    def density(self, config: FiniteConfiguration) -> float:
        """Density of the limiting measure at the configuration, w.r.t. the
        Lebesgue-Poisson reference measure on the sub-box."""
        for p in config:
            if not self.region.contains_point(p.position):
                raise ValueError("configuration leaves the profiled region")
        m = len(config)
        if m == 0:
            return math.exp(-self.log_normalizer)
        vals = np.zeros(1 << m)
        for mask in range(1, 1 << m):
            sub = config.subset([i for i in range(m) if mask >> i & 1])
            vals[mask] = self.exterior_ursell(sub)
        psi = starcalc.ConfigFunctional(m, vals)
        numerator = starcalc.star_exp(psi)((1 << m) - 1)
        return numerator * math.exp(-self.log_normalizer)


def limit_density_profile(model: ModelSpec, region: Box, N: int,
                          scheme: QuadratureScheme | None = None
                          ) -> LocalDensityProfile:
    """Build the local density profile, computing its normalizer once."""
    scheme = scheme or _default_series_scheme()
    collar = _collar_domain(model, region)
    log_norm_terms = []
    empty = FiniteConfiguration()
    d = model.space.dimension
    for m in range(1, N + 1):
        for j in range(0, N + 1):
            if collar is None and j > 0:
                continue
            domains = [SlotDomain(region)] * m + ([collar] * j if collar else [])

            def integrand(n, positions, marks):
                return ursell_batch(model, empty, positions, marks)

            sch = resolve_scheme_for_order(scheme, d, m + j)
            value, _ = product_region_integral(model, domains, integrand, sch)
            log_norm_terms.append(model.z ** (m + j) /
                                  (math.factorial(m) * math.factorial(j)) * value)
    return LocalDensityProfile(model=model, region=region, order=N, scheme=scheme,
                               collar=collar,
                               log_normalizer=float(np.sum(np.asarray(log_norm_terms))))


def limit_local_density(config: FiniteConfiguration, model: ModelSpec,
                        region: Box, N: int,
                        scheme: QuadratureScheme | None = None) -> float:
    """Density of the limiting measure at one configuration (finite range only)."""
    return limit_density_profile(model, region, N, scheme).density(config)
