"""Hand-made parameter samples: uniform, packed near chosen points, or explicit."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicatePointError, InvalidInputError, OutOfDomainError

DUP_TOL = 1e-12
DEFAULT_PACK_WIDTH = 0.02


@dataclass(frozen=True)
class SamplingPlan:
    kind: str
    range: tuple
    count: int = 2
    pack_centers: tuple = ()
    pack_fraction: float = 0.0
    explicit_points: tuple = ()
    # half-width of each packed band as a fraction of the range width
    pack_width: float = DEFAULT_PACK_WIDTH

    def __post_init__(self):
        if self.kind not in ("uniform", "packed", "explicit"):
            raise InvalidInputError(f"unknown sampling kind {self.kind!r}")
        lo, hi = self.range
        if not lo < hi:
            raise InvalidInputError(f"empty range [{lo}, {hi}]")
        if self.kind != "explicit" and self.count < 2:
            raise InvalidInputError("count must be >= 2")
        if self.kind == "packed":
            if not 0.0 < self.pack_fraction < 1.0:
                raise InvalidInputError("pack_fraction must lie in (0, 1)")
            if not self.pack_centers:
                raise InvalidInputError("packed sampling needs at least one center")
            if not 0.0 < self.pack_width < 0.5:
                raise InvalidInputError("pack_width must lie in (0, 0.5)")


@dataclass(frozen=True)
class ParameterSet:
    points: np.ndarray
    provenance: SamplingPlan = None

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points.tolist())


def _dedupe_sorted(x):
    x = np.sort(np.asarray(x, dtype=np.float64))
    keep = np.ones(len(x), dtype=bool)
    keep[1:] = np.diff(x) > DUP_TOL
    return x[keep]


def generate_samples(plan):
    lo, hi = map(float, plan.range)
    if plan.kind == "uniform":
        return ParameterSet(np.linspace(lo, hi, plan.count), plan)

    if plan.kind == "explicit":
        pts = np.asarray(plan.explicit_points, dtype=np.float64)
        bad = pts[(pts < lo) | (pts > hi)]
        if bad.size:
            raise OutOfDomainError(f"points outside [{lo}, {hi}]: {bad.tolist()}", bad.tolist())
        s = np.sort(pts)
        dups = s[1:][np.diff(s) <= DUP_TOL]
        if dups.size:
            raise DuplicatePointError(f"duplicate points: {sorted(set(dups.tolist()))}")
        return ParameterSet(s, plan)

    n_pack = int(round(plan.pack_fraction * plan.count))
    n_uniform = plan.count - n_pack
    pts = [np.linspace(lo, hi, n_uniform)] if n_uniform >= 2 else [np.array([lo, hi][:n_uniform])]
    width = plan.pack_width * (hi - lo)
    centers = list(plan.pack_centers)
    per, extra = divmod(n_pack, len(centers))
    for i, c in enumerate(centers):
        m = per + (1 if i < extra else 0)
        if m == 0:
            continue
        a, b = max(lo, c - width), min(hi, c + width)
        if a >= b:
            raise OutOfDomainError(f"pack center {c} outside [{lo}, {hi}]", [c])
        # band midpoints keep packed points off the band edges
        pts.append(a + (np.arange(m) + 0.5) * (b - a) / m)
    return ParameterSet(_dedupe_sorted(np.concatenate(pts)), plan)


def load_points(path):
    """One value per line; blank lines and ``#`` comments are skipped."""
    values = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            values.append(float(line))
    return values
