"""Bundled data and the calibrated experiment preset.

The package ships the Taylor-Ashe paid-claims triangle (the standard 10x10
benchmark data). The ``sec5`` preset calibrates a compound-Poisson model to
it: delay probabilities from the development factors via the q-tilde
transform, per-year intensities from the normalized first column, unit
claim sizes, exposure 4,000,000.
"""

from __future__ import annotations

from importlib import resources
from typing import Optional, Tuple

import numpy as np

from . import asymptotics, mack
from .models import ClaimSize, ModelSpec
from .triangle import Triangle, load_csv

SEC5_YEARS: Tuple[int, ...] = (3, 5, 8)
SEC5_ALPHA = 4_000_000.0
SEC5_REPLICATIONS = 20_000


def taylor_ashe_path():
    """Filesystem path of the bundled Taylor-Ashe triangle CSV."""
    return resources.files("clmsep").joinpath("data/taylor_ashe.csv")


def taylor_ashe_triangle() -> Triangle:
    with resources.as_file(taylor_ashe_path()) as path:
        return load_csv(path)


def calibrate_triangle(tri: Triangle,
                       tail_rule: mack.TailRule = mack.TailRule.mack()) -> dict:
    """Model parameters from an observed triangle.

    q_hat: delay probabilities from the development factors (q-tilde
    transform); lambda_hat: first-column values divided by the first entry.
    """
    f_hat = mack.dev_factors(tri)
    sigma2_hat = mack.sigma2(tri, tail_rule, f_hat)
    q_hat = asymptotics.f_to_qtilde(f_hat)
    first_col = tri.cells[:, 0]
    if first_col[0] <= 0:
        raise ValueError("first cell must be positive to normalize exposures")
    lambda_hat = first_col / first_col[0]
    return {
        "f_hat": f_hat,
        "sigma2_hat": sigma2_hat,
        "q_hat": q_hat,
        "lambda_hat": np.asarray(lambda_hat, dtype=np.float64),
        "tail_rule": tail_rule.label(),
    }


def sec5_spec(alpha: float = SEC5_ALPHA,
              tri: Optional[Triangle] = None) -> ModelSpec:
    """Compound-Poisson model calibrated to the bundled triangle, Z == 1."""
    if tri is None:
        tri = taylor_ashe_triangle()
    cal = calibrate_triangle(tri)
    return ModelSpec(
        T=tri.T,
        alpha=float(alpha),
        lam=tuple(float(x) for x in cal["lambda_hat"]),
        q=tuple(float(x) for x in cal["q_hat"]),
        claim_size=ClaimSize.point_mass(1.0),
        counting="poisson",
    )
