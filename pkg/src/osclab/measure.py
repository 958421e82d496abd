"""Discrete n-dimensional measures on R^d.

A measure is a finite list of atoms (support points with positive weights).
Balls are closed and centered at support points; membership uses a small
relative slack (``RADIUS_RTOL``) so that nominally equal distances computed
from different coordinate pairs are treated as ties.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError

__all__ = [
    "RADIUS_RTOL",
    "DiscreteMeasure",
    "GeneratorSpec",
    "GrowthReport",
    "parse_generator_spec",
    "generate_measure",
    "mass_in_ball",
    "neighbors_within",
    "linear_scan",
    "growth_report",
    "estimate_dimension",
    "load_measure",
    "save_measure",
]

# Relative slack for ``d <= r`` tests; closes ulp-level gaps between
# nominally equal distances.
RADIUS_RTOL = 1e-9


def within(dist, radius):
    """Closed-ball membership test shared by every code path."""
    return dist <= radius * (1.0 + RADIUS_RTOL)


class DiscreteMeasure:
    """Weighted point cloud standing in for a Radon measure on R^d.

    Immutable after construction: the coordinate and weight arrays are
    flagged read-only and the spatial index is built once.
    """

    def __init__(self, points, weights):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError("points must be a non-empty (N, d) array")
        w = np.array(weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise ValidationError(
                f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("point coordinates must be finite")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValidationError("every weight must be finite and > 0")
        pts.setflags(write=False)
        w.setflags(write=False)
        self.points = pts
        self.weights = w
        self.total_mass = math.fsum(w)
        self._tree = cKDTree(pts)
        self._dmat = None
        self.resolution = self._min_pair_distance()
        if self.resolution <= 0:
            raise ValidationError("support points must be pairwise distinct")

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def ambient_dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.size

    def __repr__(self):
        return (f"DiscreteMeasure(N={self.size}, d={self.ambient_dim}, "
                f"mass={self.total_mass:.6g}, h={self.resolution:.6g})")

    def _min_pair_distance(self):
        if self.size < 2:
            return math.inf
        _, nn = self._tree.query(self.points, k=2)
        best = math.inf
        # recompute with the canonical formula so it matches distance_matrix
        for i, j in enumerate(nn[:, 1]):
            d = float(np.sqrt(np.sum((self.points[j] - self.points[i]) ** 2)))
            best = min(best, d)
        return best

    def distances_from(self, index):
        """Euclidean distances from support point ``index`` to every atom."""
        index = self._check_index(index)
        return np.sqrt(np.sum((self.points - self.points[index]) ** 2, axis=1))

    @property
    def distance_matrix(self):
        """Dense (N, N) distance matrix, row-for-row equal to ``distances_from``."""
        if self._dmat is None:
            p = self.points
            dm = np.sqrt(np.sum((p[:, None, :] - p[None, :, :]) ** 2, axis=-1))
            dm.setflags(write=False)
            self._dmat = dm
        return self._dmat

    @property
    def diameter(self):
        if self.size < 2:
            return 0.0
        return float(self.distance_matrix.max())

    def _check_index(self, index):
        if not isinstance(index, (int, np.integer)):
            raise TypeError(f"center index must be an integer, got {index!r}")
        if index < 0 or index >= self.size:
            raise IndexError(f"center index {index} out of range [0, {self.size})")
        return int(index)

    def to_dict(self):
        return {
            "dim": self.ambient_dim,
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }


def neighbors_within(measure, center_index, radius):
    """Indices of atoms within closed distance ``radius`` of the center.

    Candidates come from the k-d tree queried with a slightly inflated radius;
    each is then re-tested with the canonical distance formula, so the result
    agrees exactly with :func:`linear_scan`.
    """
    if radius < 0:
        raise ValidationError("radius must be >= 0")
    c = measure._check_index(center_index)
    x = measure.points[c]
    reach = radius * (1.0 + RADIUS_RTOL) * (1.0 + 1e-12) + 1e-300
    cand = np.asarray(measure._tree.query_ball_point(x, reach), dtype=int)
    if cand.size == 0:
        return np.array([c], dtype=int)
    d = np.sqrt(np.sum((measure.points[cand] - x) ** 2, axis=1))
    return np.sort(cand[within(d, radius)])


def linear_scan(measure, center_index, radius):
    """Brute-force reference for :func:`neighbors_within`."""
    d = measure.distances_from(center_index)
    return np.nonzero(within(d, radius))[0]


def mass_in_ball(measure, ball):
    """Closed-ball mass ``mu(B(x_c, r))``, summed exactly in index order."""
    if ball.radius <= 0:
        raise ValidationError("ball radius must be > 0")
    idx = neighbors_within(measure, ball.center_index, ball.radius)
    return math.fsum(measure.weights[idx])


# ---------------------------------------------------------------- generators

@dataclass(frozen=True)
class GeneratorSpec:
    """Named measure family plus its parameters (all JSON-scalar)."""

    kind: str
    params: dict = field(default_factory=dict)

    def __str__(self):
        if not self.params:
            return self.kind
        body = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}:{body}"


def _scalar(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_generator_spec(text):
    """Parse ``kind:key=val,key=val`` (e.g. ``dust:level=3``)."""
    text = text.strip()
    if not text:
        raise ValidationError("empty generator spec")
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    params = {}
    if kind == "file":
        params["path"] = rest
        return GeneratorSpec(kind, params)
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ValidationError(f"malformed generator parameter {item!r}")
            params[key.strip()] = _scalar(val.strip())
    return GeneratorSpec(kind, params)


def _grid(d=1, n=101, side=1.0, origin=0.0, mass=1.0, density=None):
    d, n = int(d), int(n)
    if d < 1:
        raise ValidationError("grid dimension d must be >= 1")
    if n < 1:
        raise ValidationError("grid points per side n must be >= 1")
    if side <= 0:
        raise ValidationError("grid side must be > 0")
    h = side / (n - 1) if n > 1 else 1.0
    axis = origin + h * np.arange(n, dtype=float)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    if density is not None:
        if density <= 0:
            raise ValidationError("grid density must be > 0")
        w = np.full(len(pts), density * h ** d)
    else:
        if mass <= 0:
            raise ValidationError("grid mass must be > 0")
        w = np.full(len(pts), mass / len(pts))
    return pts, w


def _circle(n=128, radius=1.0, mass=1.0):
    n = int(n)
    if n < 1:
        raise ValidationError("circle needs N >= 1 points")
    if radius <= 0 or mass <= 0:
        raise ValidationError("circle radius and mass must be > 0")
    theta = 2.0 * np.pi * np.arange(n) / n
    pts = radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return pts, np.full(n, mass / n)


def _dust(level=3):
    level = int(level)
    if level < 0:
        raise ValidationError("Cantor dust level must be >= 0")
    pts = np.zeros((1, 2))
    corners = np.array([(0, 0), (1, 0), (0, 1), (1, 1)], dtype=float)
    for i in range(1, level + 1):
        off = 0.75 * 4.0 ** (-(i - 1))
        pts = (pts[:, None, :] + off * corners[None, :, :]).reshape(-1, 2)
    pts = pts + 0.5 * 4.0 ** (-level)
    return pts, np.full(len(pts), 4.0 ** (-level))


def _cantor(level=5, lam=1.0 / 3.0):
    level = int(level)
    if level < 0:
        raise ValidationError("Cantor set level must be >= 0")
    if not (0 < lam <= 0.5):
        raise ValidationError("contraction lambda must lie in (0, 1/2]")
    left = np.zeros(1)
    for i in range(level):
        length = lam ** i
        left = np.concatenate([left, left + (1.0 - lam) * length])
        left.sort()
    pts = left + 0.5 * lam ** level
    return pts[:, None], np.full(len(pts), 2.0 ** (-level))


def _geometric(depth=10, gamma=0.5):
    depth = int(depth)
    if depth < 0:
        raise ValidationError("geometric depth must be >= 0")
    if gamma <= 0:
        raise ValidationError("geometric gamma must be > 0")
    j = np.arange(depth + 1, dtype=float)
    pts = np.concatenate([[0.0], 2.0 ** (-j)])
    # origin atom carries the finest-scale length 2^-depth
    w = np.concatenate([[2.0 ** (-depth)], 2.0 ** (-j * gamma)])
    return pts[:, None], w


def _random(n=100, d=2, seed=0, mass=1.0):
    n, d = int(n), int(d)
    if n < 1 or d < 1:
        raise ValidationError("random measure needs n >= 1 and d >= 1")
    rng = np.random.default_rng(int(seed))
    return rng.random((n, d)), np.full(n, mass / n)


_GENERATORS = {
    "grid": _grid,
    "circle": _circle,
    "dust": _dust,
    "cantor": _cantor,
    "geometric": _geometric,
    "random": _random,
}


def generate_measure(spec):
    """Build a measure from a :class:`GeneratorSpec` or its string form.

    Kinds: ``grid`` (d, n, side, origin, mass | density), ``circle`` (n,
    radius, mass), ``dust`` (level; planar 1/4-Cantor dust), ``cantor``
    (level, lam), ``geometric`` (depth, gamma; atoms at 0 and 2^-j with
    weights 2^-depth and 2^(-j*gamma)), ``random`` (n, d, seed), and
    ``file:<path>``.
    """
    if isinstance(spec, str):
        spec = parse_generator_spec(spec)
    if spec.kind == "file":
        return load_measure(spec.params["path"])
    try:
        gen = _GENERATORS[spec.kind]
    except KeyError:
        raise ValidationError(f"unknown generator kind {spec.kind!r}") from None
    try:
        pts, w = gen(**spec.params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {spec.kind}: {exc}") from None
    return DiscreteMeasure(pts, w)


# ------------------------------------------------------------------- growth

@dataclass(frozen=True)
class GrowthReport:
    n: float
    best_constant: float
    witness_ball: object
    scale_range: tuple
    family_descriptor: str

    def to_dict(self):
        return {
            "n": self.n,
            "best_constant": self.best_constant,
            "witness_ball": {"center_index": self.witness_ball.center_index,
                             "radius": self.witness_ball.radius},
            "scale_range": list(self.scale_range),
            "family": self.family_descriptor,
        }


def growth_report(measure, n, family="exhaustive", r_min=None, r_max=None):
    """Empirical growth constant ``max mu(B)/r^n`` over a ball family.

    ``family`` is a :class:`~osclab.geometry.BallFamily` or a strategy string.
    The exhaustive strategy is evaluated without materialising the family:
    within one center the mass is a step function of ``r``, so the maximum of
    ``mu(B)/r^n`` over the exhaustive radii sits at a radius equal to the
    distance from the center to some atom.
    """
    from .geometry import Ball, BallFamily, distinct_distances, enumerate_ball_family

    if not (0 < n <= measure.ambient_dim):
        raise ValidationError(f"growth dimension n={n} outside (0, d]")
    lo = measure.resolution if r_min is None else float(r_min)
    if measure.size > 1 and lo < measure.resolution * (1 - RADIUS_RTOL):
        raise ValidationError("r_min below the measure resolution")
    hi = math.inf if r_max is None else float(r_max)

    if isinstance(family, str) and family == "exhaustive":
        reps = distinct_distances(measure)
        best, witness = -1.0, None
        for c in range(measure.size):
            d = measure.distances_from(c)
            order = np.argsort(d, kind="stable")
            ds = d[order]
            cum = np.cumsum(measure.weights[order])
            radii = np.unique(reps[np.searchsorted(reps, ds[1:])])
            radii = radii[(radii >= lo * (1 - RADIUS_RTOL)) & (radii <= hi)]
            if radii.size == 0:
                continue
            cnt = np.searchsorted(ds, radii * (1 + RADIUS_RTOL), side="right")
            ratio = cum[cnt - 1] / radii ** n
            k = int(np.argmax(ratio))
            if ratio[k] > best:
                best, witness = float(ratio[k]), Ball(c, float(radii[k]))
        descriptor = "exhaustive"
        if witness is None:
            raise ValidationError("empty ball family in the requested scale range")
        rng_lo = max(lo, float(reps[0])) if reps.size else lo
        rng_hi = min(hi, float(reps[-1])) if reps.size else hi
        return GrowthReport(float(n), best, witness, (rng_lo, rng_hi), descriptor)

    if not isinstance(family, BallFamily):
        family = enumerate_ball_family(measure, family)
    keep = (family.radii >= lo * (1 - RADIUS_RTOL)) & (family.radii <= hi)
    if not np.any(keep):
        raise ValidationError("empty ball family in the requested scale range")
    masses = family.masses()[keep]
    radii = family.radii[keep]
    centers = family.centers[keep]
    ratio = masses / radii ** n
    k = int(np.argmax(ratio))
    return GrowthReport(float(n), float(ratio[k]),
                        Ball(int(centers[k]), float(radii[k])),
                        (float(radii.min()), float(radii.max())),
                        family.descriptor)


def estimate_dimension(measure, radii):
    """Heuristic: log-log slope of the mean ball mass against the radius.

    Not a certified quantity; it merely suggests an ``n`` to try.
    """
    from .geometry import BallFamily

    radii = np.asarray(sorted(radii), dtype=float)
    if radii.size < 2 or np.any(radii <= 0):
        raise ValidationError("need at least two positive radii")
    fam = BallFamily.from_product(measure, np.arange(measure.size), radii,
                                  "slope-estimate")
    masses = fam.masses().reshape(measure.size, radii.size)
    mean_mass = masses.mean(axis=0)
    slope, _ = np.polyfit(np.log(radii), np.log(mean_mass), 1)
    return float(slope)


# ----------------------------------------------------------------------- IO

def save_measure(measure, path):
    """Write a measure as JSON (``.json``) or as a ``dim=<d>`` text table."""
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(measure.to_dict()) + "\n", encoding="utf-8")
        return
    lines = [f"dim={measure.ambient_dim}"]
    for x, w in zip(measure.points, measure.weights):
        lines.append(" ".join(repr(float(v)) for v in (*x, w)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_measure(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        pts = np.asarray(doc["points"], dtype=float).reshape(-1, int(doc["dim"]))
        return DiscreteMeasure(pts, doc["weights"])
    rows = [ln.strip() for ln in text.splitlines()]
    rows = [ln for ln in rows if ln and not ln.startswith("#")]
    if not rows or not rows[0].startswith("dim="):
        raise ValidationError(f"{path}: missing 'dim=<d>' header line")
    dim = int(rows[0][4:])
    data = np.array([[float(v) for v in ln.split()] for ln in rows[1:]])
    if data.ndim != 2 or data.shape[1] != dim + 1:
        raise ValidationError(f"{path}: expected {dim + 1} columns per row")
    return DiscreteMeasure(data[:, :dim], data[:, dim])
