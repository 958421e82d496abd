"""Lipschitz (Hölder) seminorms with respect to a discrete measure.

Three estimators of the same seminorm are computed over a ball family:

* ``c2``: the pointwise Hölder quotient ``|f(x) - f(y)| / |x - y|^alpha``;
* condition (I): mean oscillation normalised by ``mu(rho B)`` plus the
  nested-ball jump ``|f_B - f_U|`` with ``f_B = m_B(f)``;
* condition (III): the ``L^p`` mean oscillation about ``m_B(f)`` plus the
  same nested-ball jump.

``full_report`` assembles all of them and verifies the inequalities that tie
them together. ``rbmo_norm`` is the ``alpha = 0`` endpoint, with the nested
jump weighted by Tolsa's ``K_{B,U}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChainViolationError, ValidationError
from .geometry import Ball, BallFamily, BallPair, enumerate_ball_family, k_constants_for_levels
from .measure import neighbors_within

__all__ = [
    "SampledFunction",
    "OscillationResult",
    "LipschitzReport",
    "OscillationProfile",
    "ball_mean",
    "c2_seminorm",
    "oscillation_I",
    "oscillation_III",
    "rbmo_norm",
    "rbmo_report",
    "full_report",
    "CHAIN_RTOL",
]

CHAIN_RTOL = 1e-9
P_VALUES = (1, 2, math.inf)


@dataclass(frozen=True)
class SampledFunction:
    """Real values aligned index-by-index with a measure's support."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValidationError("function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def check(self, measure):
        if self.values.size != measure.size:
            raise ValidationError(
                f"function has {self.values.size} values, measure has {measure.size} atoms")
        return self.values


def _values(f, measure):
    if not isinstance(f, SampledFunction):
        f = SampledFunction(f)
    return f.check(measure)


def _family(measure, family):
    if isinstance(family, BallFamily):
        if family.measure is not measure:
            raise ValidationError("ball family belongs to a different measure")
        fam = family
    else:
        fam = enumerate_ball_family(measure, family)
    if len(fam) == 0:
        raise ValidationError("ball family is empty")
    return fam


def _p_key(p):
    if p in (1, 2):
        return int(p)
    if p == math.inf or p in ("inf", "infinity"):
        return math.inf
    raise ValidationError(f"unsupported exponent p={p!r}; use 1, 2 or inf")


def ball_mean(measure, f, ball):
    """``m_B(f)``: the weighted average of ``f`` over the closed ball."""
    v = _values(f, measure)
    idx = neighbors_within(measure, ball.center_index, ball.radius)
    ref = v[ball.center_index]
    w = measure.weights[idx]
    return ref + math.fsum(w * (v[idx] - ref)) / math.fsum(w)


def _c2(measure, v, alpha):
    dm = measure.distance_matrix
    best, wit = 0.0, None
    for i in range(measure.size - 1):
        d = dm[i, i + 1:]
        q = np.abs(v[i + 1:] - v[i]) / d ** alpha
        j = int(np.argmax(q))
        if wit is None or q[j] > best:
            best, wit = float(q[j]), (i, i + 1 + j)
    return best, wit


def c2_seminorm(measure, f, alpha):
    """Exact ``max |f(x) - f(y)| / |x - y|^alpha`` over all support pairs.

    Returns ``(value, (i, j))``; ties go to the lexicographically first pair.
    """
    if not (0 < alpha <= 1):
        raise ValidationError("alpha must lie in (0, 1]")
    if measure.size < 2:
        raise ValidationError("c2 needs at least two support points")
    return _c2(measure, _values(f, measure), alpha)


# --------------------------------------------------------------- profiles

class _RangeExtrema:
    """Sparse tables answering max/min over index windows in O(1)."""

    def __init__(self, v):
        n = v.size
        self.levels = max(1, n.bit_length())
        self.mx = np.full((self.levels, n), -np.inf)
        self.mn = np.full((self.levels, n), np.inf)
        self.mx[0] = v
        self.mn[0] = v
        for k in range(1, self.levels):
            half = 1 << (k - 1)
            span = n - (1 << k) + 1
            if span <= 0:
                break
            self.mx[k, :span] = np.maximum(self.mx[k - 1, :span],
                                           self.mx[k - 1, half:half + span])
            self.mn[k, :span] = np.minimum(self.mn[k - 1, :span],
                                           self.mn[k - 1, half:half + span])
        self.log = np.zeros(n + 1, dtype=np.int64)
        self.log[1:] = np.frexp(np.arange(1, n + 1))[1] - 1

    def query(self, lo, hi):
        k = self.log[hi - lo]
        second = hi - (1 << k)
        return (np.maximum(self.mx[k, lo], self.mx[k, second]),
                np.minimum(self.mn[k, lo], self.mn[k, second]))


def _group_max(b, values, size):
    out = np.zeros(size)
    if b.size == 0:
        return out
    starts = np.flatnonzero(np.r_[True, b[1:] != b[:-1]])
    out[b[starts]] = np.maximum.reduceat(values, starts)
    return out


class OscillationProfile:
    """Alpha-independent per-ball quantities for one ``(family, f, rho)``.

    Normalising by ``r^alpha`` afterwards is cheap, so one profile serves any
    number of exponents.
    """

    def __init__(self, measure, f, family, rho=2.0):
        if not rho > 1:
            raise ValidationError("dilation rho must be > 1")
        v = _values(f, measure)
        fam = _family(measure, family)
        self.measure, self.family, self.rho = measure, fam, float(rho)
        self.values = v
        g = v - v[0]
        w = measure.weights
        indptr, idx = fam.membership()
        starts = indptr[:-1]
        wi = w[idx]
        gi = g[idx]
        self.mass = np.add.reduceat(wi, starts)
        self.dilated_mass = fam.masses(self.rho)
        mean_g = np.add.reduceat(wi * gi, starts) / self.mass
        self._mean_g = mean_g
        self.means = v[0] + mean_g
        rows = np.repeat(np.arange(len(fam)), np.diff(indptr))
        dev = np.abs(gi - mean_g[rows])
        self.l1_sum = np.add.reduceat(wi * dev, starts)
        top = np.maximum.reduceat(dev, starts)
        # scale by the per-ball maximum so dev**2 cannot underflow
        safe = np.where(top > 0, top, 1.0)
        q = dev / safe[rows]
        self.lp = {
            1: self.l1_sum / self.mass,
            2: top * np.sqrt(np.add.reduceat(wi * q * q, starts) / self.mass),
            math.inf: top,
        }
        self._pair = None
        self._extrema = None

    @property
    def extrema(self):
        if self._extrema is None:
            self._extrema = _RangeExtrema(self._mean_g)
        return self._extrema

    def pair_jump(self):
        """Per inner ball: max ``|m_B - m_U|`` over admissible outer balls."""
        if self._pair is None:
            b, lo, hi = self.family.containment_windows(self.rho)
            mx, mn = self.extrema.query(lo, hi)
            mb = self._mean_g[b]
            self._pair = _group_max(b, np.maximum(mx - mb, mb - mn), len(self.family))
        return self._pair

    def _pair_witness(self, k):
        b, lo, hi = self.family.containment_windows(self.rho)
        mb = self._mean_g[k]
        best, wit = -1.0, k
        for i in np.flatnonzero(b == k):
            seg = np.abs(self._mean_g[lo[i]:hi[i]] - mb)
            j = int(np.argmax(seg))
            if seg[j] > best:
                best, wit = seg[j], int(lo[i]) + j
        return BallPair(self.family[k], self.family[wit])

    def scale(self, alpha):
        return self.family.radii ** alpha

    def osc_I(self, alpha):
        q = self.l1_sum / self.dilated_mass / self.scale(alpha)
        k = int(np.argmax(q))
        return float(q[k]), self.family[k]

    def osc_III(self, alpha, p):
        q = self.lp[_p_key(p)] / self.scale(alpha)
        k = int(np.argmax(q))
        return float(q[k]), self.family[k]

    def pair(self, alpha):
        q = self.pair_jump() / self.scale(alpha)
        k = int(np.argmax(q))
        return float(q[k]), self._pair_witness(k)


@dataclass(frozen=True)
class OscillationResult:
    osc: float
    pair: float
    osc_witness: Ball
    pair_witness: BallPair

    @property
    def value(self):
        return max(self.osc, self.pair)


def oscillation_I(measure, f, alpha, family, rho=2.0, profile=None):
    """Condition (I) estimate with ``f_B = m_B(f)``.

    ``osc`` is ``max_B (1/mu(rho B)) int_B |f - f_B| dmu / r^alpha``; ``pair`` is
    ``max |f_B - f_U| / r_B^alpha`` over nested pairs with ``r_U <= rho r_B``.
    """
    prof = profile or OscillationProfile(measure, f, family, rho)
    osc, ow = prof.osc_I(alpha)
    pair, pw = prof.pair(alpha)
    return OscillationResult(osc, pair, ow, pw)


def oscillation_III(measure, f, alpha, p, family, rho=2.0, profile=None):
    """Condition (III) estimate: ``L^p`` mean oscillation about ``m_B(f)``
    and the nested-mean jump, both divided by ``r^alpha``."""
    p = _p_key(p)
    prof = profile or OscillationProfile(measure, f, family, rho)
    osc, ow = prof.osc_III(alpha, p)
    pair, pw = prof.pair(alpha)
    return OscillationResult(osc, pair, ow, pw)


# -------------------------------------------------------------------- RBMO

@dataclass(frozen=True)
class RbmoResult:
    value: float
    oscillation: float
    jump: float
    oscillation_witness: Ball
    jump_witness: BallPair | None
    jump_k: float


def rbmo_report(measure, f, n, family, rho=2.0):
    """Both halves of the ``alpha = 0`` norm, with witnesses.

    The jump half runs over every containment ``B ⊂ U`` (no radius cap) and
    divides by ``K_{B,U}``.
    """
    if not n > 0:
        raise ValidationError("n must be > 0")
    prof = OscillationProfile(measure, f, family, rho)
    fam = prof.family
    osc = prof.l1_sum / prof.dilated_mass
    ko = int(np.argmax(osc))
    b, lo, hi, lv = fam.level_windows()
    jump, jw, jk = 0.0, None, 1.0
    if b.size:
        kc = k_constants_for_levels(fam, n, int(lv.max()))
        mx, mn = prof.extrema.query(lo, hi)
        mb = prof._mean_g[b]
        score = np.maximum(mx - mb, mb - mn) / kc[b, lv]
        i = int(np.argmax(score))
        jump, jk = float(score[i]), float(kc[b[i], lv[i]])
        seg = np.abs(prof._mean_g[lo[i]:hi[i]] - mb[i])
        jw = BallPair(fam[int(b[i])], fam[int(lo[i]) + int(np.argmax(seg))])
    return RbmoResult(max(float(osc[ko]), jump), float(osc[ko]), jump,
                      fam[ko], jw, jk)


def rbmo_norm(measure, f, n, family, rho=2.0):
    """RBMO-type norm: max of the ``alpha = 0`` oscillation and the
    ``K_{B,U}``-weighted nested jump."""
    return rbmo_report(measure, f, n, family, rho).value


# ------------------------------------------------------------------ report

@dataclass
class LipschitzReport:
    alpha: float
    rho: float
    c1: float
    c1_osc: float
    c1_pair: float
    c1_osc_witness: Ball
    c1_pair_witness: BallPair
    c2: float
    c2_witness: tuple | None
    cp: dict
    family_descriptor: str
    scale_range: tuple
    chain_checks: list = field(default_factory=list)

    def to_dict(self):
        def ball(b):
            return {"center_index": b.center_index, "radius": b.radius}

        def pair(pr):
            return {"inner": ball(pr.inner), "outer": ball(pr.outer)}

        return {
            "alpha": self.alpha,
            "rho": self.rho,
            "c1": {"value": self.c1, "osc": self.c1_osc, "pair": self.c1_pair,
                   "osc_witness": ball(self.c1_osc_witness),
                   "pair_witness": pair(self.c1_pair_witness)},
            "c2": {"value": self.c2,
                   "witness": list(self.c2_witness) if self.c2_witness else None},
            "cp": {("inf" if p == math.inf else str(p)): {
                "value": r.value, "osc": r.osc, "pair": r.pair,
                "osc_witness": ball(r.osc_witness),
                "pair_witness": pair(r.pair_witness)} for p, r in self.cp.items()},
            "family": self.family_descriptor,
            "scale_range": list(self.scale_range),
            "chain_checks": self.chain_checks,
        }


def _leq(a, b, rtol=CHAIN_RTOL):
    return a <= b + rtol * max(abs(a), abs(b))


def _chain_checks(rep, prof):
    checks = []

    def add(name, ok, lhs, rhs):
        checks.append({"check": name, "ok": bool(ok), "lhs": lhs, "rhs": rhs})

    a, rho = rep.alpha, rep.rho
    for p, r in rep.cp.items():
        tag = "inf" if p == math.inf else str(p)
        add(f"c1_osc<=cp_osc[{tag}]", _leq(rep.c1_osc, r.osc), rep.c1_osc, r.osc)
        add(f"c1_pair==cp_pair[{tag}]", rep.c1_pair == r.pair, rep.c1_pair, r.pair)
        add(f"cp_osc[{tag}]<=2^a*c2", _leq(r.osc, 2 ** a * rep.c2), r.osc, 2 ** a * rep.c2)
        add(f"cp_pair[{tag}]<=(2rho)^a*c2", _leq(r.pair, (2 * rho) ** a * rep.c2),
            r.pair, (2 * rho) ** a * rep.c2)
    l1, l2, li = prof.lp[1], prof.lp[2], prof.lp[math.inf]
    slack = CHAIN_RTOL * np.maximum(np.abs(l2), np.abs(li))
    bad12 = int(np.count_nonzero(l1 > l2 + slack))
    bad2i = int(np.count_nonzero(l2 > li + slack))
    add("p-monotone per ball (1<=2)", bad12 == 0, bad12, 0)
    add("p-monotone per ball (2<=inf)", bad2i == 0, bad2i, 0)
    return checks


def full_report(measure, f, alpha, family, rho=2.0, profile=None, check=True):
    """Every seminorm estimate for ``f`` plus the chain inequalities.

    Raises :class:`ChainViolationError` if any inequality fails beyond
    ``CHAIN_RTOL``; the failing checks stay attached to the exception.
    """
    if not (0 <= alpha <= 1):
        raise ValidationError("alpha must lie in [0, 1]")
    if measure.size < 2:
        raise ValidationError("a Lipschitz report needs at least two support points")
    prof = profile or OscillationProfile(measure, f, family, rho)
    v = prof.values
    c2, c2w = _c2(measure, v, alpha)
    if c2 == 0.0:
        c2w = None
    osc1, w1 = prof.osc_I(alpha)
    pair, pw = prof.pair(alpha)
    cp = {}
    for p in P_VALUES:
        o, ow = prof.osc_III(alpha, p)
        cp[p] = OscillationResult(o, pair, ow, pw)
    radii = prof.family.radii
    rep = LipschitzReport(
        alpha=float(alpha), rho=prof.rho, c1=max(osc1, pair), c1_osc=osc1,
        c1_pair=pair, c1_osc_witness=w1, c1_pair_witness=pw, c2=c2, c2_witness=c2w,
        cp=cp, family_descriptor=prof.family.descriptor,
        scale_range=(float(radii.min()), float(radii.max())))
    rep.chain_checks = _chain_checks(rep, prof)
    failed = [c for c in rep.chain_checks if not c["ok"]]
    if check and failed:
        raise ChainViolationError(
            "chain inequality violated: " + ", ".join(c["check"] for c in failed), failed)
    return rep
