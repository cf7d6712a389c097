"""
Parameter laws, i.i.d. ensemble sampling and ensemble expectations.

Samples are drawn with numpy's PCG64 bit generator. The seed of SAA
iteration k is derived from the base seed with ``numpy.random.SeedSequence``
(entropy = base seed, spawn key = (k,)), so a whole run replays from one
integer on any platform.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, DistributionError

LAWS = ("uniform", "point")


@dataclass(frozen=True)
class ParamDistribution:
    """Law of one component of the uncertain parameter vector."""

    name: str
    law: str = "uniform"
    lo: Optional[float] = None
    hi: Optional[float] = None
    value: Optional[float] = None

    def __post_init__(self):
        if not self.name:
            raise DistributionError("<unnamed>", "parameter name must be non-empty")
        if self.law not in LAWS:
            raise DistributionError(self.name, f"unknown law '{self.law}' (expected one of {LAWS})")
        if self.law == "uniform":
            if self.lo is None or self.hi is None:
                raise DistributionError(self.name, "uniform law needs 'lo' and 'hi'")
            if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
                raise DistributionError(self.name, "bounds must be finite")
            if not self.lo < self.hi:
                raise DistributionError(self.name, f"uniform law needs lo < hi, got lo={self.lo}, hi={self.hi}")
        else:
            if self.value is None or not np.isfinite(self.value):
                raise DistributionError(self.name, "point mass needs a finite 'value'")

    @classmethod
    def uniform(cls, name: str, lo: float, hi: float) -> "ParamDistribution":
        return cls(name=name, law="uniform", lo=float(lo), hi=float(hi))

    @classmethod
    def point(cls, name: str, value: float) -> "ParamDistribution":
        return cls(name=name, law="point", value=float(value))

    @classmethod
    def from_dict(cls, entry: Mapping) -> "ParamDistribution":
        """
        Build a law from its config-file form.

        Args:
            entry: {"name", "law": "uniform", "lo", "hi"} or {"name", "value"}

        Returns:
            Validated ParamDistribution
        """
        name = entry.get("name", "")
        if "value" in entry and entry.get("law", "point") == "point":
            return cls.point(name, entry["value"])
        law = entry.get("law", "uniform")
        if law == "point":
            raise DistributionError(name or "<unnamed>", "point mass needs a 'value'")
        return cls(name=name, law=law, lo=entry.get("lo"), hi=entry.get("hi"))

    def to_dict(self) -> Dict:
        if self.law == "point":
            return {"name": self.name, "law": "point", "value": self.value}
        return {"name": self.name, "law": "uniform", "lo": self.lo, "hi": self.hi}

    @property
    def support(self) -> Tuple[float, float]:
        if self.law == "point":
            return (self.value, self.value)
        return (self.lo, self.hi)

    @property
    def midpoint(self) -> float:
        lo, hi = self.support
        return 0.5 * (lo + hi)

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        """Draw k independent values of this component."""
        if self.law == "point":
            return np.full(k, self.value, dtype=float)
        return rng.uniform(self.lo, self.hi, size=k)


@dataclass(frozen=True)
class ParamSample:
    """One draw of the parameter vector with its probability mass."""

    values: Mapping[str, float]
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise DistributionError("<weight>", f"sample weight must be positive, got {self.weight}")

    def __getitem__(self, name: str) -> float:
        return self.values[name]


@dataclass(frozen=True)
class Ensemble:
    """Discrete measure {(omega_i, w_i)} used by the sample average problem."""

    samples: Tuple[ParamSample, ...]
    seed: int = 0
    names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if len(self.samples) == 0:
            raise DistributionError("<ensemble>", "an ensemble needs at least one sample")
        total = sum(s.weight for s in self.samples)
        if abs(total - 1.0) > 1e-12:
            raise DistributionError("<ensemble>", f"weights sum to {total!r}, expected 1")
        names = self.names or tuple(self.samples[0].values.keys())
        for i, s in enumerate(self.samples):
            if set(s.values.keys()) != set(names):
                raise DistributionError("<ensemble>", f"sample {i} does not carry exactly {names}")
        object.__setattr__(self, "names", tuple(names))

    @property
    def size(self) -> int:
        return len(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.samples], dtype=float)

    def stacked(self) -> Dict[str, np.ndarray]:
        """Parameter values as one array of shape (k,) per name, in sample order."""
        return {name: np.array([s.values[name] for s in self.samples], dtype=float)
                for name in self.names}


def derive_seed(base_seed: int, k: int) -> int:
    """
    Seed of SAA iteration k, a pure function of (base_seed, k).

    Uses SeedSequence(entropy=base_seed, spawn_key=(k,)) and takes the first
    64-bit word of its generated state.
    """
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(k),))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def sample_ensemble(distributions: Sequence[ParamDistribution], k: int, seed: int) -> Ensemble:
    """
    Draw k i.i.d. parameter vectors with equal weights 1/k.

    Args:
        distributions: One law per parameter component
        k: Ensemble size
        seed: Unsigned integer seed of the PCG64 generator

    Returns:
        Ensemble, deterministic in (distributions, k, seed)
    """
    if k < 1:
        raise DistributionError("<ensemble>", f"ensemble size must be >= 1, got {k}")
    if not distributions:
        raise DistributionError("<ensemble>", "at least one parameter distribution is required")
    names = [d.name for d in distributions]
    if len(set(names)) != len(names):
        raise DistributionError("<ensemble>", f"duplicate parameter names in {names}")
    if seed < 0:
        raise DistributionError("<ensemble>", f"seed must be unsigned, got {seed}")

    rng = np.random.Generator(np.random.PCG64(int(seed)))
    columns = {d.name: d.draw(rng, k) for d in distributions}
    rows = [{name: float(columns[name][i]) for name in names} for i in range(k)]
    return _equal_weights(rows, int(seed), tuple(names))


def _equal_weights(rows: Sequence[Mapping[str, float]], seed: int, names: Tuple[str, ...]) -> Ensemble:
    k = len(rows)
    weight = 1.0 / k
    samples = tuple(ParamSample(values=dict(row), weight=weight) for row in rows)
    # 1/k summed k times can miss 1 by a few ulps; renormalize the last weight
    total = weight * (k - 1)
    if k > 1 and abs(total + weight - 1.0) > 1e-12:
        last = samples[-1]
        samples = samples[:-1] + (ParamSample(values=last.values, weight=1.0 - total),)
    return Ensemble(samples=samples, seed=seed, names=names)


def leading_samples(ensemble: Ensemble, k: int) -> Ensemble:
    """
    First k samples of an ensemble with equal weights 1/k.

    Taking leading samples of one draw gives nested ensembles: the samples
    for size k are contained in those for every larger size.

    Args:
        ensemble: Source draw (weights are discarded)
        k: Number of leading samples, 1 <= k <= ensemble.size

    Returns:
        Ensemble carrying the source seed
    """
    if not 1 <= k <= ensemble.size:
        raise DistributionError("<ensemble>", f"cannot take {k} of {ensemble.size} samples")
    rows = [s.values for s in ensemble.samples[:k]]
    return _equal_weights(rows, ensemble.seed, ensemble.names)


def point_ensemble(values: Mapping[str, float]) -> Ensemble:
    """Single-sample ensemble with weight 1 (deterministic problems)."""
    return Ensemble(samples=(ParamSample(values=dict(values), weight=1.0),),
                    seed=0, names=tuple(values.keys()))


def midpoint_sample(distributions: Sequence[ParamDistribution]) -> ParamSample:
    """Parameter vector at the centre of every law, weight 1."""
    return ParamSample(values={d.name: d.midpoint for d in distributions}, weight=1.0)


def expectation(values: Sequence[float], ensemble: Ensemble) -> float:
    """
    Ensemble average sum_i w_i * values[i].

    Args:
        values: One real per sample, in sample order
        ensemble: The discrete measure

    Returns:
        Weighted sum
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size != ensemble.size:
        raise DimensionError(f"expected {ensemble.size} values, got shape {arr.shape}")
    return float(np.dot(ensemble.weights, arr))


def describe(ensemble: Ensemble) -> List[Dict]:
    """Per-sample records for serialization."""
    return [dict(s.values, weight=s.weight) for s in ensemble.samples]
