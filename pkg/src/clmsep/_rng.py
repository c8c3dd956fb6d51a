"""Counter-based random number streams for reproducible parallel Monte Carlo.

Every random draw in this package comes from a Philox (4x64) bit generator
whose 128-bit key is a pure function of

    (master seed, replication index, accident year, purpose)

so a given replication produces bit-identical output no matter how many
worker processes run, in what order chunks execute, or which replications
share a process. Distinct keys select independent Philox permutations;
the block counter is left at zero for the generator to advance, so streams
never overlap (keying the stream identity into the counter instead would
make consecutive replications share blocks).

Key layout:
    key[0] = master seed (64 bits)
    key[1] = replication (32 bits) | accident year (16 bits) | purpose (16 bits)

`purpose` separates independent uses within one (replication, year) pair,
e.g. the inner draws of the conditional Monte Carlo oracle.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

PURPOSE_SIMULATION = 0
PURPOSE_ORACLE_MC = 1


def substream(seed: int, replication: int, accident_year: int = 0,
              purpose: int = PURPOSE_SIMULATION) -> np.random.Generator:
    """Return the Generator for one (replication, accident year, purpose)."""
    if not 0 <= replication < (1 << 32):
        raise ValueError("replication index must fit in 32 bits")
    if not 0 <= accident_year < (1 << 16):
        raise ValueError("accident year must fit in 16 bits")
    if not 0 <= purpose < (1 << 16):
        raise ValueError("purpose must fit in 16 bits")
    key = np.array(
        [seed & _MASK64,
         (replication << 32) | (accident_year << 16) | purpose],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
