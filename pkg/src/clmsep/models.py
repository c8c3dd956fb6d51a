"""Claims-model specification: exposure, intensities, delay/size law, counting.

A ModelSpec describes T accident years. Each year i produces a claim count
M_i driven by exposure ``alpha`` and intensity ``lam[i]``; every claim
carries an i.i.d. (delay D, size Z) pair. Two counting families are
supported:

* ``poisson`` - M_i is Poisson(alpha * lam[i]); together with an
  independent (D, Z) law this is the classical compound-Poisson setting.
* ``renewal`` - M_i counts renewals of an interarrival random walk with
  mean step 1/lam[i] and finite variance.

The (D, Z) law is either an independent pair (delay probabilities ``q``
plus a ClaimSize distribution) or a finite joint table of (d, z, p) atoms,
which allows the claim-size distribution to depend on the delay year.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .exceptions import SpecError

_PROB_TOL = 1e-9


@dataclass(frozen=True)
class ClaimSize:
    """Claim-size distribution with exact first two moments.

    Families: point_mass(value), gamma(shape, scale), lognormal(mu, sigma),
    discrete(values, probs). ``sum_of(n, rng)`` draws the sum of n i.i.d.
    copies exactly, using closure-under-convolution shortcuts where the
    family has one (point mass, gamma, discrete); lognormal sums are drawn
    term by term.
    """

    family: str
    params: Tuple[float, ...] = ()
    values: Optional[Tuple[float, ...]] = None
    probs: Optional[Tuple[float, ...]] = None

    @classmethod
    def point_mass(cls, value: float) -> "ClaimSize":
        if not (value > 0 and math.isfinite(value)):
            raise SpecError("point_mass value must be positive and finite")
        return cls("point_mass", (float(value),))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "ClaimSize":
        if not (shape > 0 and scale > 0):
            raise SpecError("gamma claim size needs shape > 0 and scale > 0")
        return cls("gamma", (float(shape), float(scale)))

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "ClaimSize":
        if not (sigma >= 0 and math.isfinite(mu) and math.isfinite(sigma)):
            raise SpecError("lognormal claim size needs finite mu and sigma >= 0")
        return cls("lognormal", (float(mu), float(sigma)))

    @classmethod
    def discrete(cls, values: Sequence[float], probs: Sequence[float]) -> "ClaimSize":
        values = tuple(float(v) for v in values)
        probs = tuple(float(p) for p in probs)
        if len(values) != len(probs) or not values:
            raise SpecError("discrete claim size needs matching non-empty values/probs")
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > _PROB_TOL:
            raise SpecError("discrete claim-size probabilities must be >= 0 and sum to 1")
        if any(v < 0 for v in values):
            raise SpecError("discrete claim-size values must be non-negative")
        dist = cls("discrete", (), values, probs)
        if not dist.mean() > 0:
            raise SpecError("claim size must have positive mean")
        return dist

    def mean(self) -> float:
        if self.family == "point_mass":
            return self.params[0]
        if self.family == "gamma":
            shape, scale = self.params
            return shape * scale
        if self.family == "lognormal":
            mu, sigma = self.params
            return math.exp(mu + 0.5 * sigma * sigma)
        return float(sum(v * p for v, p in zip(self.values, self.probs)))

    def second_moment(self) -> float:
        if self.family == "point_mass":
            return self.params[0] ** 2
        if self.family == "gamma":
            shape, scale = self.params
            return shape * (shape + 1.0) * scale * scale
        if self.family == "lognormal":
            mu, sigma = self.params
            return math.exp(2.0 * mu + 2.0 * sigma * sigma)
        return float(sum(v * v * p for v, p in zip(self.values, self.probs)))

    def variance(self) -> float:
        return self.second_moment() - self.mean() ** 2

    def sum_of(self, n: int, rng: np.random.Generator) -> float:
        """Exact draw of the sum of n i.i.d. claim sizes."""
        if n <= 0:
            return 0.0
        if self.family == "point_mass":
            return n * self.params[0]
        if self.family == "gamma":
            shape, scale = self.params
            return float(rng.gamma(shape * n, scale))
        if self.family == "discrete":
            counts = rng.multinomial(n, self.probs)
            return float(np.dot(counts, self.values))
        mu, sigma = self.params
        return float(rng.lognormal(mu, sigma, size=n).sum())

    def to_json(self) -> dict:
        out = {"family": self.family}
        if self.family == "point_mass":
            out["value"] = self.params[0]
        elif self.family == "gamma":
            out["shape"], out["scale"] = self.params
        elif self.family == "lognormal":
            out["mu"], out["sigma"] = self.params
        else:
            out["values"] = list(self.values)
            out["probs"] = list(self.probs)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ClaimSize":
        family = obj.get("family")
        if family == "point_mass":
            return cls.point_mass(obj["value"])
        if family == "gamma":
            return cls.gamma(obj["shape"], obj["scale"])
        if family == "lognormal":
            return cls.lognormal(obj["mu"], obj["sigma"])
        if family == "discrete":
            return cls.discrete(obj["values"], obj["probs"])
        raise SpecError(f"unknown claim-size family {family!r}")


@dataclass(frozen=True)
class Interarrival:
    """Renewal-step family, scaled per accident year to mean 1/lam.

    kind:
        exponential          - memoryless steps (Poisson counting).
        gamma (with shape)   - Gamma(shape, 1/(shape*lam)) steps.
        deterministic        - constant 1/lam steps (variance 0).
    """

    kind: str
    shape: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exponential", "gamma", "deterministic"):
            raise SpecError(f"unknown interarrival kind {self.kind!r}")
        if self.kind == "gamma" and not self.shape > 0:
            raise SpecError("gamma interarrival needs shape > 0")

    def var_y(self, lam: float) -> float:
        """Variance of one step when the year's intensity is lam."""
        if self.kind == "exponential":
            return 1.0 / (lam * lam)
        if self.kind == "gamma":
            return 1.0 / (self.shape * lam * lam)
        return 0.0

    def draw(self, n: int, lam: float, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "exponential":
            return rng.exponential(1.0 / lam, size=n)
        if self.kind == "gamma":
            return rng.gamma(self.shape, 1.0 / (self.shape * lam), size=n)
        return np.full(n, 1.0 / lam)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "gamma":
            out["shape"] = self.shape
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Interarrival":
        return cls(obj["kind"], float(obj.get("shape", 1.0)))


@dataclass(frozen=True)
class JointAtom:
    d: int
    z: float
    p: float


@dataclass(frozen=True)
class Moments:
    """Exact distributional moments of a ModelSpec, 0-based arrays over t."""

    ez: float
    ez2: float
    varz: float
    ez_ind: np.ndarray    # E[Z 1{D=t}]
    ez2_ind: np.ndarray   # E[Z^2 1{D=t}]
    p_delay: np.ndarray   # P(D=t)
    cdf_delay: np.ndarray  # P(D<=t)
    lam: np.ndarray
    var_y: np.ndarray     # per-year interarrival variance


@dataclass(frozen=True)
class ModelSpec:
    """Full simulation model: exposure, intensities, delay/size law, counting."""

    T: int
    alpha: float
    lam: Tuple[float, ...]
    q: Optional[Tuple[float, ...]] = None
    claim_size: Optional[ClaimSize] = None
    joint: Optional[Tuple[JointAtom, ...]] = None
    counting: str = "poisson"
    interarrival: Optional[Interarrival] = None

    def __post_init__(self):
        if self.T < 1:
            raise SpecError("T must be >= 1")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise SpecError("alpha must be finite and >= 0")
        if len(self.lam) != self.T or any(not (l > 0 and math.isfinite(l)) for l in self.lam):
            raise SpecError("lam must be length T with every entry in (0, inf)")
        has_q = self.q is not None
        has_joint = self.joint is not None
        if has_q == has_joint:
            raise SpecError("specify exactly one of q/claim_size or joint")
        if has_q:
            if self.claim_size is None:
                raise SpecError("independent delay law needs claim_size")
            if len(self.q) != self.T:
                raise SpecError("q must have length T")
            if any(p < 0 or p > 1 for p in self.q) or abs(sum(self.q) - 1.0) > _PROB_TOL:
                raise SpecError("q must be a probability vector summing to 1")
            if not self.claim_size.mean() > 0:
                raise SpecError("claim size must have positive mean")
            if not math.isfinite(self.claim_size.second_moment()):
                raise SpecError("claim size must have finite second moment")
        else:
            if self.claim_size is not None:
                raise SpecError("joint law and claim_size are mutually exclusive")
            total = sum(a.p for a in self.joint)
            if abs(total - 1.0) > _PROB_TOL or any(a.p < 0 for a in self.joint):
                raise SpecError("joint-table probabilities must be >= 0 and sum to 1")
            if any(a.d < 1 or a.d > self.T for a in self.joint):
                raise SpecError("joint-table delays must lie in 1..T")
            if any(a.z < 0 for a in self.joint):
                raise SpecError("joint-table claim sizes must be non-negative")
            for t in range(1, self.T + 1):
                if not sum(a.z * a.p for a in self.joint if a.d == t) > 0:
                    raise SpecError(f"joint table needs E[Z 1{{D={t}}}] > 0")
        if self.counting not in ("poisson", "renewal"):
            raise SpecError(f"unknown counting kind {self.counting!r}")
        if self.counting == "renewal" and self.interarrival is None:
            raise SpecError("renewal counting needs an interarrival family")
        if self.counting == "poisson" and self.interarrival is not None:
            raise SpecError("poisson counting takes no interarrival family")

    @property
    def independent_delay(self) -> bool:
        return self.q is not None

    def moments(self) -> Moments:
        T = self.T
        if self.independent_delay:
            ez = self.claim_size.mean()
            ez2 = self.claim_size.second_moment()
            p = np.asarray(self.q, dtype=np.float64)
            ez_ind = ez * p
            ez2_ind = ez2 * p
        else:
            p = np.zeros(T)
            ez_ind = np.zeros(T)
            ez2_ind = np.zeros(T)
            for a in self.joint:
                p[a.d - 1] += a.p
                ez_ind[a.d - 1] += a.z * a.p
                ez2_ind[a.d - 1] += a.z * a.z * a.p
            ez = float(ez_ind.sum())
            ez2 = float(ez2_ind.sum())
        lam = np.asarray(self.lam, dtype=np.float64)
        if self.counting == "poisson":
            var_y = 1.0 / (lam * lam)
        else:
            var_y = np.array([self.interarrival.var_y(l) for l in self.lam])
        return Moments(
            ez=ez,
            ez2=ez2,
            varz=ez2 - ez * ez,
            ez_ind=ez_ind,
            ez2_ind=ez2_ind,
            p_delay=p,
            cdf_delay=np.cumsum(p),
            lam=lam,
            var_y=var_y,
        )

    def to_json(self) -> dict:
        out = {
            "T": self.T,
            "alpha": self.alpha,
            "lambda": list(self.lam),
            "counting": {"kind": self.counting},
        }
        if self.counting == "renewal":
            out["counting"]["interarrival"] = self.interarrival.to_json()
        if self.independent_delay:
            out["q"] = list(self.q)
            out["claim_size"] = self.claim_size.to_json()
        else:
            out["joint"] = [{"d": a.d, "z": a.z, "p": a.p} for a in self.joint]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        counting = obj.get("counting", {"kind": "poisson"})
        kind = counting.get("kind", "poisson")
        interarrival = None
        if kind == "renewal":
            interarrival = Interarrival.from_json(counting["interarrival"])
        joint = None
        q = None
        claim_size = None
        if "joint" in obj:
            joint = tuple(JointAtom(int(a["d"]), float(a["z"]), float(a["p"]))
                          for a in obj["joint"])
        else:
            q = tuple(float(x) for x in obj["q"])
            claim_size = ClaimSize.from_json(obj["claim_size"])
        return cls(
            T=int(obj["T"]),
            alpha=float(obj["alpha"]),
            lam=tuple(float(x) for x in obj["lambda"]),
            q=q,
            claim_size=claim_size,
            joint=joint,
            counting=kind,
            interarrival=interarrival,
        )

    @classmethod
    def from_json_file(cls, path) -> "ModelSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def dist_moments(spec: ModelSpec) -> Moments:
    """Exact analytic moments of the (D, Z) law and counting process."""
    return spec.moments()
