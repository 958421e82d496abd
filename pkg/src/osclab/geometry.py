"""Balls, ball families, doubling balls and Tolsa's K coefficient."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .measure import RADIUS_RTOL, mass_in_ball, within

__all__ = [
    "Ball",
    "FreeBall",
    "BallPair",
    "BallFamily",
    "DoublingReport",
    "distinct_distances",
    "enumerate_ball_family",
    "parse_family",
    "nested_pairs",
    "contains",
    "doubling_search",
    "k_constant",
]


@dataclass(frozen=True, order=True)
class Ball:
    """Closed ball about a support point; ``2B`` keeps the center."""

    center_index: int
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError(f"ball radius must be > 0, got {self.radius}")

    def dilate(self, factor):
        return Ball(self.center_index, self.radius * factor)


@dataclass(frozen=True)
class FreeBall:
    """Ball with an arbitrary center; only accepted with ``allow_off_support``."""

    center: tuple
    radius: float


@dataclass(frozen=True)
class BallPair:
    inner: Ball
    outer: Ball


def _center_point(measure, ball):
    if isinstance(ball, FreeBall):
        return np.asarray(ball.center, dtype=float)
    return measure.points[measure._check_index(ball.center_index)]


def contains(measure, inner, outer, allow_off_support=False):
    """Geometric containment ``|c_B - c_U| + r_B <= r_U`` (tolerant)."""
    if not allow_off_support and (isinstance(inner, FreeBall) or isinstance(outer, FreeBall)):
        raise ValidationError("off-support balls need allow_off_support=True")
    a = _center_point(measure, inner)
    b = _center_point(measure, outer)
    delta = float(np.sqrt(np.sum((a - b) ** 2)))
    return delta + inner.radius <= outer.radius * (1.0 + RADIUS_RTOL)


def distinct_distances(measure):
    """Sorted distinct pairwise distances, ulp-level duplicates merged.

    A group of nominally equal values is represented by its largest member,
    so a ball with the representative radius contains every atom whose
    distance falls in the group.
    """
    if measure.size < 2:
        return np.empty(0)
    dm = measure.distance_matrix
    d = np.sort(dm[np.triu_indices(measure.size, k=1)])
    reps = []
    start = d[0]
    cur = d[0]
    for v in d[1:]:
        if v > start * (1.0 + RADIUS_RTOL):
            reps.append(cur)
            start = v
        cur = v
    reps.append(cur)
    return np.asarray(reps)


class BallFamily:
    """Finite, ordered ball family over one measure.

    Balls are sorted by (center, radius) and deduplicated, so each center's
    balls form a contiguous ladder of increasing radii. Masses, membership
    lists and containment windows are computed lazily and cached; the family
    itself never changes.
    """

    def __init__(self, measure, centers, radii, descriptor):
        centers = np.asarray(centers, dtype=np.int64).reshape(-1)
        radii = np.asarray(radii, dtype=float).reshape(-1)
        if centers.shape != radii.shape:
            raise ValidationError("centers and radii must align")
        if centers.size and (centers.min() < 0 or centers.max() >= measure.size):
            raise IndexError("ball center index out of range")
        if np.any(~(radii > 0)):
            raise ValidationError("ball radii must be > 0")
        order = np.lexsort((radii, centers))
        centers, radii = centers[order], radii[order]
        if centers.size:
            keep = np.ones(centers.size, dtype=bool)
            keep[1:] = (centers[1:] != centers[:-1]) | (radii[1:] != radii[:-1])
            centers, radii = centers[keep], radii[keep]
        centers.setflags(write=False)
        radii.setflags(write=False)
        self.measure = measure
        self.centers = centers
        self.radii = radii
        self.descriptor = descriptor
        self.ladder_start = np.searchsorted(centers, np.arange(measure.size), "left")
        self.ladder_stop = np.searchsorted(centers, np.arange(measure.size), "right")
        self._cache = {}

    @classmethod
    def from_product(cls, measure, centers, radii, descriptor):
        c = np.repeat(np.asarray(centers, dtype=np.int64), len(radii))
        r = np.tile(np.asarray(radii, dtype=float), len(centers))
        return cls(measure, c, r, descriptor)

    @classmethod
    def from_balls(cls, measure, balls, descriptor="explicit"):
        balls = list(balls)
        return cls(measure, [b.center_index for b in balls],
                   [b.radius for b in balls], descriptor)

    def __len__(self):
        return self.centers.size

    def __getitem__(self, i):
        return Ball(int(self.centers[i]), float(self.radii[i]))

    def __iter__(self):
        for c, r in zip(self.centers, self.radii):
            yield Ball(int(c), float(r))

    def __repr__(self):
        return f"BallFamily({self.descriptor}, size={len(self)})"

    def index_of(self, ball):
        s, e = self.ladder_start[ball.center_index], self.ladder_stop[ball.center_index]
        k = s + np.searchsorted(self.radii[s:e], ball.radius)
        if k < e and self.radii[k] == ball.radius:
            return int(k)
        raise KeyError(ball)

    # ------------------------------------------------------------ caches
    def _sorted_rows(self):
        """Per-center (order, sorted distances, cumulative weights)."""
        if "rows" not in self._cache:
            m = self.measure
            rows = {}
            for c in np.unique(self.centers):
                d = m.distances_from(int(c))
                order = np.argsort(d, kind="stable")
                rows[int(c)] = (order, d[order], np.cumsum(m.weights[order]))
            self._cache["rows"] = rows
        return self._cache["rows"]

    def counts(self, factor=1.0):
        key = ("counts", float(factor))
        if key not in self._cache:
            rows = self._sorted_rows()
            out = np.empty(len(self), dtype=np.int64)
            for c in rows:
                s, e = self.ladder_start[c], self.ladder_stop[c]
                _, ds, _ = rows[c]
                out[s:e] = np.searchsorted(
                    ds, self.radii[s:e] * factor * (1.0 + RADIUS_RTOL), side="right")
            out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def masses(self, factor=1.0):
        """Masses of the dilated balls ``B(c, factor * r)``."""
        key = ("mass", float(factor))
        if key not in self._cache:
            rows = self._sorted_rows()
            cnt = self.counts(factor)
            out = np.empty(len(self))
            for c in rows:
                s, e = self.ladder_start[c], self.ladder_stop[c]
                out[s:e] = rows[c][2][cnt[s:e] - 1]
            out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def membership(self):
        """CSR-style ``(indptr, indices)``: atoms of each ball, nearest first."""
        if "members" not in self._cache:
            rows = self._sorted_rows()
            cnt = self.counts(1.0)
            indptr = np.zeros(len(self) + 1, dtype=np.int64)
            np.cumsum(cnt, out=indptr[1:])
            indices = np.empty(indptr[-1], dtype=np.int64)
            for k in range(len(self)):
                order = rows[int(self.centers[k])][0]
                indices[indptr[k]:indptr[k + 1]] = order[:cnt[k]]
            self._cache["members"] = (indptr, indices)
        return self._cache["members"]

    def members(self, k):
        indptr, indices = self.membership()
        return np.sort(indices[indptr[k]:indptr[k + 1]])

    def center_distances(self):
        """(F, N) distances from each ball's center to every support point."""
        if "cdist" not in self._cache:
            self._cache["cdist"] = self.measure.distance_matrix[self.centers]
        return self._cache["cdist"]

    def containment_windows(self, rho):
        """Admissible outer balls for every inner ball, as index windows.

        Returns ``(b, lo, hi)``: for inner ball ``b`` every family index in
        ``[lo, hi)`` is an outer ball ``U`` with ``B ⊂ U`` and
        ``r_U <= rho * r_B``. Windows are sorted by ``b``; the inner ball
        itself appears in its own window.
        """
        key = ("windows", float(rho))
        if key not in self._cache:
            self._cache[key] = self._windows(lambda r: rho * r * (1.0 + RADIUS_RTOL))
        return self._cache[key]

    def outer_lists(self, rho):
        """CSR view of :meth:`containment_windows`: ``(indptr, outer)`` with
        the admissible outer balls of inner ball ``b`` (itself included, in
        ascending order) at ``outer[indptr[b]:indptr[b + 1]]``."""
        key = ("outer", float(rho))
        if key not in self._cache:
            b, lo, hi = self.containment_windows(rho)
            length = hi - lo
            indptr = np.zeros(len(self) + 1, dtype=np.int64)
            np.add.at(indptr, b + 1, length)
            np.cumsum(indptr, out=indptr)
            total = int(length.sum())
            # expand windows: offset of each element from its window start
            start = np.repeat(lo - np.concatenate([[0], np.cumsum(length)[:-1]]), length)
            outer = start + np.arange(total)
            for k in range(len(self)):
                seg = outer[indptr[k]:indptr[k + 1]]
                seg.sort()
            self._cache[key] = (indptr, outer)
        return self._cache[key]

    def _windows(self, upper):
        dm = self.measure.distance_matrix
        rb = self.radii
        hi_t = upper(rb)
        bs, los, his = [], [], []
        for cu in range(self.measure.size):
            s, e = self.ladder_start[cu], self.ladder_stop[cu]
            if s == e:
                continue
            ru = self.radii[s:e]
            delta = dm[self.centers, cu]
            lo = s + np.searchsorted(ru, (rb + delta) / (1.0 + RADIUS_RTOL), side="left")
            hi = s + np.searchsorted(ru, hi_t, side="right")
            ok = np.nonzero(lo < hi)[0]
            bs.append(ok)
            los.append(lo[ok])
            his.append(hi[ok])
        return _sort_windows(bs, los, his)

    def level_windows(self, max_level=None):
        """All containments ``B ⊂ U`` split by the dyadic level ``N_{B,U}``.

        Returns ``(b, lo, hi, level)`` where ``level >= 1`` is the first ``k``
        with ``2^k r_B >= r_U``. Level 0 (``U = B``) is omitted.
        """
        key = ("levels", max_level)
        if key not in self._cache:
            if len(self) == 0:
                empty = np.empty(0, dtype=np.int64)
                self._cache[key] = (empty, empty, empty, empty)
                return self._cache[key]
            rmax = self.radii.max()
            top = int(math.ceil(math.log2(rmax / self.radii.min()))) + 1
            if max_level is not None:
                top = min(top, max_level)
            dm = self.measure.distance_matrix
            rb = self.radii
            out_b, out_lo, out_hi, out_lv = [], [], [], []
            for cu in range(self.measure.size):
                s, e = self.ladder_start[cu], self.ladder_stop[cu]
                if s == e:
                    continue
                ru = self.radii[s:e]
                delta = dm[self.centers, cu]
                base = s + np.searchsorted(ru, (rb + delta) / (1.0 + RADIUS_RTOL), side="left")
                prev = s + np.searchsorted(ru, rb * (1.0 + RADIUS_RTOL), side="right")
                for lv in range(1, top + 1):
                    cap = s + np.searchsorted(ru, rb * 2.0 ** lv * (1.0 + RADIUS_RTOL),
                                              side="right")
                    lo = np.maximum(base, prev)
                    ok = np.nonzero(lo < cap)[0]
                    if ok.size:
                        out_b.append(ok)
                        out_lo.append(lo[ok])
                        out_hi.append(cap[ok])
                        out_lv.append(np.full(ok.size, lv, dtype=np.int64))
                    prev = cap
            b, lo, hi, order = _sort_windows(out_b, out_lo, out_hi, return_order=True)
            lv = np.concatenate(out_lv)[order] if out_lv else np.empty(0, dtype=np.int64)
            self._cache[key] = (b, lo, hi, lv)
        return self._cache[key]


def _sort_windows(bs, los, his, return_order=False):
    if bs:
        b = np.concatenate(bs)
        lo = np.concatenate(los)
        hi = np.concatenate(his)
    else:
        b = lo = hi = np.empty(0, dtype=np.int64)
    order = np.argsort(b, kind="stable")
    out = (b[order], lo[order], hi[order])
    return (*out, order) if return_order else out


def parse_family(text):
    """``exhaustive`` | ``dyadic`` | ``sampled:<m>:<seed>`` -> (strategy, m, seed)."""
    parts = str(text).split(":")
    name = parts[0]
    if name in ("exhaustive", "dyadic") and len(parts) == 1:
        return name, None, None
    if name == "sampled" and len(parts) == 3:
        try:
            return name, int(parts[1]), int(parts[2])
        except ValueError:
            pass
    raise ValidationError(f"unknown ball family strategy {text!r}")


def enumerate_ball_family(measure, strategy="exhaustive", m=None, seed=None):
    """Finite surrogate for "every ball".

    ``exhaustive``: every center times every distinct pairwise distance.
    ``dyadic``: every center times ``h * 2^k`` up to the first radius reaching
    the diameter. ``sampled``: ``m`` balls drawn without replacement from the
    exhaustive family using ``seed``. Strategy strings such as
    ``"sampled:500:7"`` are accepted.
    """
    if ":" in str(strategy):
        strategy, m, seed = parse_family(strategy)
    centers = np.arange(measure.size)
    if strategy == "exhaustive":
        return BallFamily.from_product(measure, centers, distinct_distances(measure),
                                       "exhaustive")
    if strategy == "dyadic":
        if measure.size < 2:
            return BallFamily(measure, [], [], "dyadic")
        h, diam = measure.resolution, measure.diameter
        ladder = [h]
        while ladder[-1] < diam * (1.0 - RADIUS_RTOL):
            ladder.append(ladder[-1] * 2.0)
        return BallFamily.from_product(measure, centers, ladder, "dyadic")
    if strategy == "sampled":
        if m is None or m <= 0:
            raise ValidationError("sampled family needs m > 0")
        full = enumerate_ball_family(measure, "exhaustive")
        rng = np.random.default_rng(0 if seed is None else int(seed))
        pick = np.sort(rng.choice(len(full), size=min(m, len(full)), replace=False))
        return BallFamily(measure, full.centers[pick], full.radii[pick],
                          f"sampled:{m}:{0 if seed is None else int(seed)}")
    raise ValidationError(f"unknown ball family strategy {strategy!r}")


def nested_pairs(family, rho=2.0):
    """Ordered pairs ``(B, U)`` of distinct family balls with ``B ⊂ U`` and
    ``r_U <= rho * r_B``."""
    if not rho > 1:
        raise ValidationError("dilation rho must be > 1")
    indptr, outer = family.outer_lists(rho)
    pairs = []
    for bi in range(len(family)):
        inner = family[bi]
        for u in outer[indptr[bi]:indptr[bi + 1]]:
            if u != bi:
                pairs.append(BallPair(inner, family[int(u)]))
    return pairs


# ----------------------------------------------------------------- doubling

@dataclass(frozen=True)
class DoublingReport:
    center_index: int
    beta: float
    radii: list
    exhausted_at: float
    scanned: list = field(default_factory=list)  # (radius, mass_ratio, doubling)


def doubling_search(measure, center_index, beta, r0, max_halvings, rho=2.0):
    """Scan ``r0 * 2^-k`` for ``k = 0..max_halvings`` and keep the radii with
    ``mu(rho B) <= beta * mu(B)``.

    The halving ladder follows the classical argument: if none of the balls
    ``2^-k B`` were doubling, ``mu(B) > beta^k mu(2^-k B)`` for all ``k``.
    """
    if not beta > 1:
        raise ValidationError("beta must be > 1")
    if not r0 > 0:
        raise ValidationError("r0 must be > 0")
    if max_halvings < 0:
        raise ValidationError("max_halvings must be >= 0")
    measure._check_index(center_index)
    found, scanned = [], []
    for k in range(int(max_halvings) + 1):
        r = r0 * 2.0 ** (-k)
        small = mass_in_ball(measure, Ball(center_index, r))
        big = mass_in_ball(measure, Ball(center_index, rho * r))
        ratio = big / small
        ok = big <= beta * small
        scanned.append((r, ratio, ok))
        if ok:
            found.append(r)
    return DoublingReport(int(center_index), float(beta), found,
                          r0 * 2.0 ** (-int(max_halvings)), scanned)


# ---------------------------------------------------------------- K_{B,U}

def dyadic_level(inner_radius, outer_radius):
    """First integer ``k >= 0`` with ``2^k r_B >= r_U``."""
    k = 0
    while inner_radius * 2.0 ** k * (1.0 + RADIUS_RTOL) < outer_radius:
        k += 1
    return k


def k_constant(measure, inner, outer, n, allow_off_support=False):
    """Tolsa's coefficient ``1 + sum_{j=1}^{N} mu(2^j B) / (2^j r_B)^n``.

    The denominator is read as ``(2^j radius(B))^n``.
    """
    if not n > 0:
        raise ValidationError("n must be > 0")
    if isinstance(inner, FreeBall):
        raise ValidationError("the inner ball must be support-centered")
    if not contains(measure, inner, outer, allow_off_support=allow_off_support):
        raise ValidationError("k_constant needs inner ⊂ outer")
    levels = dyadic_level(inner.radius, outer.radius)
    terms = []
    for j in range(1, levels + 1):
        r = inner.radius * 2.0 ** j
        terms.append(mass_in_ball(measure, Ball(inner.center_index, r)) / r ** n)
    return 1.0 + math.fsum(terms)


def k_constants_for_levels(family, n, levels):
    """Vectorised ``K`` for every family ball and every level ``0..levels``.

    Returns an (F, levels + 1) array; column ``N`` holds ``K`` with
    ``N_{B,U} = N``.
    """
    cols = [np.ones(len(family))]
    for j in range(1, levels + 1):
        f = 2.0 ** j
        cols.append(family.masses(f) / (family.radii * f) ** n)
    terms = np.stack(cols, axis=1)
    return np.cumsum(terms, axis=1)


def within_ball(measure, ball, points_idx=None):
    """Boolean mask of atoms inside ``ball``."""
    d = measure.distances_from(ball.center_index)
    mask = within(d, ball.radius)
    return mask if points_idx is None else mask[points_idx]
