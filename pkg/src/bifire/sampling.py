"""Latin hypercube sampling over a rectangular parameter box."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ParamBox:
    """Ordered ``(name, lower, upper)`` triples, one per uncertain input."""

    dims: tuple

    def __post_init__(self):
        dims = tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.dims)
        if not dims:
            raise ConfigError("parameter box is empty")
        for name, lo, hi in dims:
            if not lo < hi:
                raise ConfigError(f"box dimension {name!r} needs lower < upper")
        if len({d[0] for d in dims}) != len(dims):
            raise ConfigError("duplicate parameter names in box")
        object.__setattr__(self, "dims", dims)

    @property
    def names(self):
        return tuple(d[0] for d in self.dims)

    @property
    def lower(self):
        return np.array([d[1] for d in self.dims])

    @property
    def upper(self):
        return np.array([d[2] for d in self.dims])

    def contains(self, z):
        v = np.array([float(z[n]) for n in self.names])
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def to_list(self):
        return [{"name": n, "lower": lo, "upper": hi} for n, lo, hi in self.dims]


@dataclass(frozen=True, eq=False)
class SampleSet:
    names: tuple
    values: np.ndarray
    seed: int
    method: str = "LHS"

    def __len__(self):
        return self.values.shape[0]

    def row(self, i):
        return {n: float(v) for n, v in zip(self.names, self.values[i])}

    def rows(self):
        return [self.row(i) for i in range(len(self))]


def lhs_sample(box, M, seed):
    """Latin hypercube design with ``M`` points.

    Each dimension is split into ``M`` equal strata holding exactly one point,
    placed uniformly at random inside its stratum.  Randomness comes from
    numpy's PCG64 generator: for every dimension in box order one permutation
    of ``range(M)`` is drawn, then ``M`` uniform offsets.
    """
    if not isinstance(box, ParamBox):
        box = ParamBox(tuple(box))
    M = int(M)
    if M < 1:
        raise ConfigError("LHS needs M >= 1")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    lo, hi = box.lower, box.upper
    values = np.empty((M, len(box.dims)))
    for j in range(len(box.dims)):
        strata = rng.permutation(M)
        offsets = rng.random(M)
        values[:, j] = lo[j] + (strata + offsets) / M * (hi[j] - lo[j])
    return SampleSet(box.names, values, int(seed))


def write_samples_csv(samples, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(samples.names)
        for row in samples.values:
            w.writerow([f"{v:.17g}" for v in row])


def read_samples_csv(path, seed=0, method="LHS"):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = tuple(next(reader))
        except StopIteration:
            raise ConfigError(f"{path}: empty sample file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ConfigError(f"{path}:{lineno}: expected {len(names)} values, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric value in {row}") from None
    return SampleSet(names, np.array(rows, dtype=np.float64).reshape(-1, len(names)), seed, method)
