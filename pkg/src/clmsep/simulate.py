"""Claims-square simulation for the compound-Poisson and renewal models.

Rows (accident years) are generated independently: first the year's claim
count M_i, then M_i i.i.d. (delay, size) pairs allocated to development
years. For Poisson counting this is distributionally identical to drawing
independent compound-Poisson increments per cell, but the row-wise path
also covers joint (D, Z) dependence and renewal counting with one code
path.

Reproducibility: every (replication, accident year) pair draws from its own
counter-based stream (see _rng), so squares are bit-identical for a given
(spec, seed, replication_index) regardless of execution order or worker
count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rng
from .exceptions import SpecError
from .models import ModelSpec
from .triangle import Triangle

# Poisson count means beyond this cannot be represented exactly in int64
# draws; refuse rather than overflow.
_MAX_COUNT_MEAN = 2.0 ** 62


@dataclass(frozen=True)
class SimulatedSquare:
    """Full simulated square: cumulative triangle plus per-cell claim counts."""

    triangle: Triangle
    counts: np.ndarray  # (T, T) int64, incremental claim counts per cell


def _allocate_claims(spec: ModelSpec, m: int, rng: np.random.Generator):
    """Split m claims of one accident year into per-development-year
    (amount, count) increments."""
    T = spec.T
    amounts = np.zeros(T)
    counts = np.zeros(T, dtype=np.int64)
    if m == 0:
        return amounts, counts
    if spec.independent_delay:
        cell_counts = rng.multinomial(m, spec.q)
        for t in range(T):
            counts[t] = cell_counts[t]
            amounts[t] = spec.claim_size.sum_of(int(cell_counts[t]), rng)
    else:
        probs = [a.p for a in spec.joint]
        atom_counts = rng.multinomial(m, probs)
        for atom, n in zip(spec.joint, atom_counts):
            counts[atom.d - 1] += n
            amounts[atom.d - 1] += atom.z * n
    return amounts, counts


def _renewal_count(spec: ModelSpec, lam: float, rng: np.random.Generator) -> int:
    """M = sup{m : Y_1 + ... + Y_m <= alpha} for the year's interarrival walk."""
    alpha = spec.alpha
    if alpha == 0.0:
        return 0
    mean_m = alpha * lam
    sd_m = np.sqrt(max(alpha * lam ** 3 * spec.interarrival.var_y(lam), 0.0))
    block = int(mean_m + 8.0 * sd_m) + 16
    steps = spec.interarrival.draw(block, lam, rng)
    walk = np.cumsum(steps)
    m = int(np.searchsorted(walk, alpha, side="right"))
    # Top-up in the (vanishingly rare) event the first block fell short.
    while walk[-1] <= alpha:
        extra = spec.interarrival.draw(max(block // 16, 64), lam, rng)
        walk = np.concatenate([walk, walk[-1] + np.cumsum(extra)])
        m = int(np.searchsorted(walk, alpha, side="right"))
    return m


def _simulate(spec: ModelSpec, seed: int, replication_index: int) -> SimulatedSquare:
    T = spec.T
    if spec.alpha * max(spec.lam) > _MAX_COUNT_MEAN:
        raise SpecError("alpha * lam too large: claim counts would overflow")
    inc = np.zeros((T, T))
    counts = np.zeros((T, T), dtype=np.int64)
    for i in range(T):
        rng = _rng.substream(seed, replication_index, accident_year=i + 1)
        if spec.counting == "poisson":
            m = int(rng.poisson(spec.alpha * spec.lam[i]))
        else:
            m = _renewal_count(spec, spec.lam[i], rng)
        inc[i], counts[i] = _allocate_claims(spec, m, rng)
    cum = np.cumsum(inc, axis=1)
    return SimulatedSquare(triangle=Triangle.from_cumulative(cum), counts=counts)


def simulate_special(spec: ModelSpec, seed: int, replication_index: int) -> SimulatedSquare:
    """Simulate one full square under Poisson counting (compound-Poisson cells)."""
    if spec.counting != "poisson":
        raise SpecError("simulate_special requires poisson counting")
    return _simulate(spec, seed, replication_index)


def simulate_general(spec: ModelSpec, seed: int, replication_index: int) -> SimulatedSquare:
    """Simulate one full square under renewal counting."""
    if spec.counting != "renewal":
        raise SpecError("simulate_general requires renewal counting")
    return _simulate(spec, seed, replication_index)


def simulate_square(spec: ModelSpec, seed: int, replication_index: int) -> SimulatedSquare:
    """Dispatch on the spec's counting family."""
    return _simulate(spec, seed, replication_index)


def simulate_batch(spec: ModelSpec, seed: int, start: int, count: int) -> np.ndarray:
    """Cumulative squares for replications start..start+count-1, shape (count, T, T)."""
    out = np.empty((count, spec.T, spec.T))
    for k in range(count):
        out[k] = _simulate(spec, seed, start + k).triangle.cells
    return out


def simulate_row_incrementals(spec: ModelSpec, seed: int, replication_index: int,
                              accident_year: int):
    """Incremental (amounts, counts) of one accident year only.

    Uses the same per-(replication, year) stream as the full-square
    simulators, so the row matches what _simulate would produce.
    """
    if not 1 <= accident_year <= spec.T:
        raise SpecError(f"accident year must be in 1..{spec.T}")
    rng = _rng.substream(seed, replication_index, accident_year=accident_year)
    lam = spec.lam[accident_year - 1]
    if spec.counting == "poisson":
        m = int(rng.poisson(spec.alpha * lam))
    else:
        m = _renewal_count(spec, lam, rng)
    return _allocate_claims(spec, m, rng)
