"""Standard kernels and discrete Calderón-Zygmund operators.

The operator acts on functions sampled on the support of a measure:
``(Tf)_i = sum_{j != i} K(x_i, x_j) f_j w_j`` (zero diagonal, the discrete
principal value). For Lipschitz data the renormalised operator

    T_B f(x) = T(f 1_{2B})(x) + sum_{z not in 2B} (K(x, z) - K(x_B, z)) f(z) w_z

is evaluated on the atoms of ``B``; different balls give results that differ
by a constant on their intersection, which ``tb_consistency`` measures.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import KernelDefectError, ValidationError
from .geometry import Ball, BallFamily, contains, enumerate_ball_family
from .lipschitz import _c2, _values, full_report
from .measure import RADIUS_RTOL, neighbors_within, within

__all__ = [
    "KernelSpec",
    "make_kernel",
    "KERNEL_CATALOG",
    "CzOperator",
    "SizeCheck",
    "RegularityCheck",
    "TbDecomposition",
    "kernel_size_check",
    "kernel_regularity_check",
    "apply_operator",
    "apply_tb",
    "apply_tb_direct",
    "tb_consistency",
    "tb_consistency_sweep",
    "operator_scale",
    "t1_norm",
    "boundedness_experiment",
    "tail_integral_check",
    "spectral_norm",
]

CHECK_RTOL = 1e-12


# ----------------------------------------------------------------- kernels

def _circle_radius(measure, declared):
    r = np.sqrt(np.sum(measure.points ** 2, axis=1))
    radius = float(r.mean()) if declared is None else float(declared)
    if measure.ambient_dim != 2 or np.any(np.abs(r - radius) > 1e-9 * radius):
        raise ValidationError("circle_conjugate needs points on a circle about the origin")
    return radius


def _need_1d(measure, name):
    if measure.ambient_dim != 1:
        raise ValidationError(f"{name} needs a measure on the real line")


def _cauchy_matrix(spec, measure):
    _need_1d(measure, spec.name)
    x = measure.points[:, 0]
    with np.errstate(divide="ignore"):
        return 1.0 / (x[:, None] - x[None, :])


def _cauchy_pair(spec, measure, i, j):
    return 1.0 / (float(measure.points[i, 0]) - float(measure.points[j, 0]))


def _inverse_square_matrix(spec, measure):
    _need_1d(measure, spec.name)
    x = measure.points[:, 0]
    with np.errstate(divide="ignore"):
        return 1.0 / (x[:, None] - x[None, :]) ** 2


def _inverse_square_pair(spec, measure, i, j):
    return 1.0 / (float(measure.points[i, 0]) - float(measure.points[j, 0])) ** 2


def _conjugate_matrix(spec, measure):
    radius = _circle_radius(measure, spec.params.get("radius"))
    theta = np.arctan2(measure.points[:, 1], measure.points[:, 0])
    with np.errstate(divide="ignore"):
        return 1.0 / np.tan((theta[:, None] - theta[None, :]) / 2.0) / (2.0 * radius)


def _conjugate_pair(spec, measure, i, j):
    radius = _circle_radius(measure, spec.params.get("radius"))
    ti = math.atan2(measure.points[i, 1], measure.points[i, 0])
    tj = math.atan2(measure.points[j, 1], measure.points[j, 0])
    return 1.0 / math.tan((ti - tj) / 2.0) / (2.0 * radius)


def _riesz_matrix(spec, measure):
    comp = int(spec.params.get("i", 0))
    if not 0 <= comp < measure.ambient_dim:
        raise ValidationError(f"riesz component {comp} out of range")
    x = measure.points[:, comp]
    with np.errstate(divide="ignore", invalid="ignore"):
        return (x[:, None] - x[None, :]) / measure.distance_matrix ** (spec.n + 1)


def _riesz_pair(spec, measure, i, j):
    comp = int(spec.params.get("i", 0))
    a, b = measure.points[i], measure.points[j]
    r = math.sqrt(math.fsum((float(u) - float(v)) ** 2 for u, v in zip(a, b)))
    return (float(a[comp]) - float(b[comp])) / r ** (spec.n + 1)


def _zero_matrix(spec, measure):
    return np.zeros((measure.size, measure.size))


def _zero_pair(spec, measure, i, j):
    return 0.0


def _table_matrix(spec, measure):
    t = np.asarray(spec.table, dtype=float)
    if t.shape != (measure.size, measure.size):
        raise ValidationError("kernel table must be N x N for the measure")
    return t.copy()


def _table_pair(spec, measure, i, j):
    return float(spec.table[i][j])


KERNEL_CATALOG = {
    # name: (matrix, pair, n, epsilon, size C, smoothness C)
    "one_dimensional_cauchy": (_cauchy_matrix, _cauchy_pair, 1.0, 1.0, 1.0, 2.0),
    "circle_conjugate": (_conjugate_matrix, _conjugate_pair, 1.0, 1.0, 1.0, 2.0),
    "riesz_component": (_riesz_matrix, _riesz_pair, 1.0, 1.0, 1.0, None),
    "inverse_square": (_inverse_square_matrix, _inverse_square_pair, 1.0, 1.0, 1.0, 1.0),
    "zero": (_zero_matrix, _zero_pair, 1.0, 1.0, 1.0, 1.0),
    "table": (_table_matrix, _table_pair, None, None, None, None),
}
_ALIASES = {"cauchy": "one_dimensional_cauchy", "conjugate": "circle_conjugate",
            "riesz": "riesz_component", "defective": "inverse_square"}


@dataclass(frozen=True)
class KernelSpec:
    """An ``n``-dimensional, ``epsilon``-regular standard kernel.

    ``size_constant`` and ``smoothness_constant`` are claims; the check
    functions verify them on a measure.
    """

    name: str
    n: float
    epsilon: float
    size_constant: float
    smoothness_constant: float
    params: dict = field(default_factory=dict)
    table: object = None

    def __post_init__(self):
        if self.name not in KERNEL_CATALOG:
            raise ValidationError(f"unknown kernel {self.name!r}")
        if not self.n > 0:
            raise ValidationError("kernel dimension n must be > 0")
        if not (0 < self.epsilon <= 1):
            raise ValidationError("kernel regularity epsilon must lie in (0, 1]")
        if not (self.size_constant > 0 and self.smoothness_constant > 0):
            raise ValidationError("kernel constants must be > 0")

    def matrix(self, measure):
        """``K(x_i, x_j)`` for all support pairs; the diagonal is set to 0."""
        k = KERNEL_CATALOG[self.name][0](self, measure)
        np.fill_diagonal(k, 0.0)
        return k

    def pair(self, measure, i, j):
        """Scalar evaluation, independent of the vectorised ``matrix`` path."""
        if i == j:
            raise ValidationError("kernel is undefined on the diagonal")
        return KERNEL_CATALOG[self.name][1](self, measure, i, j)

    @property
    def label(self):
        if self.name == "riesz_component":
            return f"riesz_component({int(self.params.get('i', 0))})"
        return self.name

    def to_dict(self):
        return {"name": self.label, "n": self.n, "epsilon": self.epsilon,
                "size_constant": self.size_constant,
                "smoothness_constant": self.smoothness_constant}


def make_kernel(name, n=None, epsilon=None, size_constant=None,
                smoothness_constant=None, table=None, **params):
    """Catalog kernel with optional overrides of its declared constants.

    ``name`` may carry a parameter, e.g. ``riesz_component(1)``.
    """
    m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\(\s*(\d+)\s*\))?\s*", name)
    if not m:
        raise ValidationError(f"bad kernel name {name!r}")
    base = _ALIASES.get(m.group(1), m.group(1))
    if m.group(2) is not None:
        params["i"] = int(m.group(2))
    if base not in KERNEL_CATALOG:
        raise ValidationError(f"unknown kernel {name!r}")
    _, _, dn, de, dc, ds = KERNEL_CATALOG[base]
    n = dn if n is None else float(n)
    epsilon = de if epsilon is None else float(epsilon)
    if base == "riesz_component" and ds is None:
        # |grad_x K| <= max(1, n) |x - y|^-(n+1); the segment stays >= |x-y|/2 from y
        ds = max(1.0, n) * 2.0 ** (n + 1)
    if base == "table" and None in (n, epsilon, size_constant, smoothness_constant):
        raise ValidationError("table kernels must declare n, epsilon and both constants")
    return KernelSpec(base, n, epsilon,
                      dc if size_constant is None else float(size_constant),
                      ds if smoothness_constant is None else float(smoothness_constant),
                      params, table)


# ----------------------------------------------------------------- checks

@dataclass(frozen=True)
class SizeCheck:
    worst_ratio: float
    pair: tuple
    passed: bool
    bound: float


@dataclass(frozen=True)
class RegularityCheck:
    worst_ratio: float
    triple: tuple | None
    passed: bool
    bound: float
    count: int


def _raw_matrix(kernel, measure):
    k = KERNEL_CATALOG[kernel.name][0](kernel, measure)
    k = np.array(k, dtype=float)
    np.fill_diagonal(k, np.nan)
    return k


def _defect(k):
    bad = ~np.isfinite(k)
    np.fill_diagonal(bad, False)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise KernelDefectError(f"kernel not finite at support pair ({i}, {j})", (i, j))


def kernel_size_check(kernel, measure, sample="exhaustive"):
    """``max |K(x, y)| |x - y|^n`` over support pairs; passes iff within the
    declared size constant."""
    k = _raw_matrix(kernel, measure)
    dm = measure.distance_matrix
    if isinstance(sample, str):
        if sample != "exhaustive":
            raise ValidationError(f"unknown pair sample {sample!r}")
        ii, jj = np.nonzero(~np.eye(measure.size, dtype=bool))
    else:
        pairs = np.asarray(list(sample), dtype=np.int64).reshape(-1, 2)
        ii, jj = pairs[:, 0], pairs[:, 1]
        if np.any(ii == jj):
            raise ValidationError("size check pairs need x != y")
    if ii.size == 0:
        raise ValidationError("no pairs to check")
    vals = k[ii, jj]
    if not np.all(np.isfinite(vals)):
        t = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise KernelDefectError(
            f"kernel not finite at support pair ({ii[t]}, {jj[t]})", (int(ii[t]), int(jj[t])))
    ratio = np.abs(vals) * dm[ii, jj] ** kernel.n
    t = int(np.argmax(ratio))
    worst = float(ratio[t])
    return SizeCheck(worst, (int(ii[t]), int(jj[t])),
                     worst <= kernel.size_constant * (1 + CHECK_RTOL),
                     kernel.size_constant)


def _admissible(d_xy, d_xxp):
    return d_xy * (1.0 + RADIUS_RTOL) >= 2.0 * d_xxp


def kernel_regularity_check(kernel, measure, triples="exhaustive"):
    """``max |K(x,y) - K(x',y)| |x-y|^(n+eps) / |x-x'|^eps`` over triples with
    ``|x - y| >= 2 |x - x'|``; passes iff within the smoothness constant."""
    k = _raw_matrix(kernel, measure)
    dm = measure.distance_matrix
    n, eps = kernel.n, kernel.epsilon
    worst, arg, count = 0.0, None, 0
    if isinstance(triples, str):
        if triples != "exhaustive":
            raise ValidationError(f"unknown triple sample {triples!r}")
        _defect(k)
        for x in range(measure.size):
            dxy = dm[x]                      # over y
            dxp = dm[x]                      # over x'
            ok = _admissible(dxy[None, :], dxp[:, None])
            ok[x, :] = False                 # x' = x contributes 0
            ok[:, x] = False                 # y = x excluded
            if not ok.any():
                continue
            with np.errstate(invalid="ignore"):
                diff = np.abs(k[x][None, :] - k)
                ratio = diff * dxy[None, :] ** (n + eps) / dxp[:, None] ** eps
            ratio = np.where(ok, ratio, -np.inf)
            count += int(ok.sum())
            flat = int(np.argmax(ratio))
            xp, y = divmod(flat, measure.size)
            if arg is None or ratio[xp, y] > worst:
                worst, arg = float(ratio[xp, y]), (x, int(xp), int(y))
    else:
        for x, xp, y in triples:
            x, xp, y = int(x), int(xp), int(y)
            if y == x:
                raise ValidationError(f"triple {(x, xp, y)} has y = x")
            if not _admissible(dm[x, y], dm[x, xp]):
                raise ValidationError(f"triple {(x, xp, y)} violates |x-y| >= 2|x-x'|")
            count += 1
            if xp == x:
                r = 0.0
            else:
                kxy, kpy = k[x, y], k[xp, y]
                if not (np.isfinite(kxy) and np.isfinite(kpy)):
                    raise KernelDefectError(f"kernel not finite on triple {(x, xp, y)}",
                                            (x, y))
                r = abs(kxy - kpy) * dm[x, y] ** (n + eps) / dm[x, xp] ** eps
            if arg is None or r > worst:
                worst, arg = float(r), (x, xp, y)
    return RegularityCheck(worst, arg, worst <= kernel.smoothness_constant * (1 + CHECK_RTOL),
                           kernel.smoothness_constant, count)


# --------------------------------------------------------------- operator

class CzOperator:
    """Dense discretisation ``A[i, j] = K(x_i, x_j) w_j`` with zero diagonal."""

    def __init__(self, kernel, measure):
        self.kernel = kernel
        self.measure = measure
        km = kernel.matrix(measure)
        _defect(np.where(np.eye(measure.size, dtype=bool), 0.0, km))
        km.setflags(write=False)
        self.kernel_matrix = km
        a = km * measure.weights[None, :]
        a.setflags(write=False)
        self.matrix = a

    def __repr__(self):
        return f"CzOperator({self.kernel.label}, N={self.measure.size})"

    def spectral_norm(self, rtol=1e-6, max_iter=10_000):
        return spectral_norm(self, rtol, max_iter)


def spectral_norm(op, rtol=1e-6, max_iter=10_000, seed=0):
    """``L^2(mu)`` operator norm estimate by power iteration on ``M^T M``,
    ``M = W^{1/2} A W^{-1/2}``. Returns ``(estimate, iterations)``."""
    s = np.sqrt(op.measure.weights)
    m = s[:, None] * op.matrix / s[None, :]
    v = np.random.default_rng(seed).standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, max_iter + 1):
        u = m.T @ (m @ v)
        lam = float(np.linalg.norm(u))
        if lam == 0.0:
            return 0.0, it
        v = u / lam
        new = math.sqrt(lam)
        if abs(new - est) <= rtol * new:
            return new, it
        est = new
    return est, max_iter


def apply_operator(op, f):
    """``(Tf)_i = sum_{j != i} K(x_i, x_j) f_j w_j``."""
    v = _values(f, op.measure)
    return op.matrix @ v


def apply_tb(op, f, ball):
    """``T_B f`` on the atoms of ``B``: returns ``(indices, values)``."""
    m = op.measure
    v = _values(f, m)
    c = ball.center_index
    idx = neighbors_within(m, c, ball.radius)
    near = within(m.distances_from(c), 2.0 * ball.radius)
    far = ~near
    a = op.matrix
    local = a[np.ix_(idx, np.flatnonzero(near))] @ v[near]
    tail = (a[np.ix_(idx, np.flatnonzero(far))] - a[c, far][None, :]) @ v[far]
    return idx, local + tail


def apply_tb_direct(op, f, ball):
    """Reference evaluation of ``T_B f`` by explicit summation with scalar
    kernel calls; slow, used to cross-check :func:`apply_tb`."""
    m = op.measure
    v = _values(f, m)
    c = ball.center_index
    idx = neighbors_within(m, c, ball.radius)
    dc = m.distances_from(c)
    kern, w = op.kernel, m.weights
    out = []
    for x in idx:
        terms = []
        for z in range(m.size):
            if within(dc[z], 2.0 * ball.radius):
                if z != x:
                    terms.append(kern.pair(m, int(x), z) * v[z] * w[z])
            else:
                terms.append((kern.pair(m, int(x), z) - kern.pair(m, c, z)) * v[z] * w[z])
        out.append(math.fsum(terms))
    return idx, np.asarray(out)


def operator_scale(op, f):
    """``max_i sum_j |A_ij f_j|``: magnitude of the sums that T_B cancels."""
    v = _values(f, op.measure)
    return float(np.max(np.abs(op.matrix) @ np.abs(v)))


def tb_consistency(op, f, inner, outer):
    """Spread of ``T_inner f - T_outer f`` on the atoms of ``inner``.

    Exact arithmetic gives 0; the returned value is the max deviation from
    the mean of that difference.
    """
    if not contains(op.measure, inner, outer):
        raise ValidationError("tb_consistency needs inner ⊂ outer")
    idx_b, tb = apply_tb(op, f, inner)
    idx_u, tu = apply_tb(op, f, outer)
    pos = np.searchsorted(idx_u, idx_b)
    if np.any(pos >= idx_u.size) or np.any(idx_u[np.minimum(pos, idx_u.size - 1)] != idx_b):
        raise ValidationError("atoms of inner ball are not all inside outer ball")
    g = tb - tu[pos]
    return float(np.max(np.abs(g - g.mean())))


class _TbBatch:
    """``T_b`` pieces for every family ball, evaluated at every atom.

    Columns are family balls. ``near[b]`` marks atoms in ``2B``. With
    ``P = A (f 1_{2B})`` and ``R = A (f 1_{outside 2B})`` the operator is
    ``T_B f(x) = P[x, b] + R[x, b] - R[c_b, b]``.
    """

    def __init__(self, op, family):
        self.op, self.family = op, family
        cd = family.center_distances()
        self.near = within(cd, 2.0 * family.radii[:, None])       # (F, N)
        self.inside = within(cd, family.radii[:, None])           # (F, N)

    def content_classes(self):
        """Class id per ball; balls whose ``2B`` covers the support and that
        hold the same atoms share a class (their ``T_B`` columns coincide)."""
        if not hasattr(self, "_classes"):
            cover = self.near.all(axis=1)
            cls = np.arange(len(self.family))
            seen = {}
            for k in np.flatnonzero(cover):
                key = self.inside[k].tobytes()
                cls[k] = seen.setdefault(key, int(k))
            self._classes = cls
        return self._classes

    def pieces(self, v):
        a = self.op.matrix
        nearT = self.near.T
        p = a @ (v[:, None] * nearT)
        r = a @ (v[:, None] * ~nearT)
        cols = np.arange(len(self.family))
        rc = r[self.family.centers, cols]
        return p, r - rc[None, :]

    def tb(self, v):
        p, tail = self.pieces(v)
        return p + tail


def tb_consistency_sweep(op, f, family, rho=2.0):
    """Max :func:`tb_consistency` deviation over every nested pair of a family.

    Returns ``(max_deviation, scale, worst_pair_indices, pairs_checked)``.
    """
    m = op.measure
    v = _values(f, m)
    fam = family if isinstance(family, BallFamily) else enumerate_ball_family(m, family)
    batch = _TbBatch(op, fam)
    t = batch.tb(v)
    indptr, outer = fam.outer_lists(rho)
    worst, arg, count = 0.0, None, 0
    for bi in range(len(fam)):
        us = outer[indptr[bi]:indptr[bi + 1]]
        us = us[us != bi]
        if us.size == 0:
            continue
        rows = np.flatnonzero(batch.inside[bi])
        g = t[rows, bi][:, None] - t[np.ix_(rows, us)]
        dev = np.max(np.abs(g - g.mean(axis=0)[None, :]), axis=0)
        count += us.size
        k = int(np.argmax(dev))
        if arg is None or dev[k] > worst:
            worst, arg = float(dev[k]), (int(bi), int(us[k]))
    return worst, operator_scale(op, v), arg, count


# ------------------------------------------------------------------- T(1)

@dataclass
class T1Result:
    value: float
    representative: np.ndarray
    report: object
    stitch_radii: list


def t1_norm(op, alpha, family="dyadic", rho=2.0):
    """Hölder seminorm of the class ``T(1)``.

    A global representative is stitched from ``T_{B_k}(1)`` over dyadic balls
    about the first support point, each shifted to agree with the previous
    one, until a ball covers the support. ``value`` is the ``c2`` constant of
    that representative; 0 means ``T(1)`` is constant on the support.
    """
    eps = op.kernel.epsilon
    if not (0 < alpha < eps):
        raise ValidationError(f"alpha must lie in (0, epsilon={eps})")
    m = op.measure
    if m.size < 2:
        return T1Result(0.0, np.zeros(m.size), None, [])
    one = np.ones(m.size)
    reach = float(m.distances_from(0).max())
    radii = [m.resolution]
    while radii[-1] < reach * (1.0 - RADIUS_RTOL):
        radii.append(radii[-1] * 2.0)
    g = np.full(m.size, np.nan)
    prev = None
    for r in radii:
        idx, vals = apply_tb(op, one, Ball(0, r))
        if prev is not None:
            vals = vals + float(np.mean(g[prev] - vals[np.isin(idx, prev)]))
        g[idx] = vals
        prev = idx
    rep = full_report(m, g, alpha, family, rho=rho)
    return T1Result(rep.c2, g, rep, radii)


# ------------------------------------------------------------ boundedness

@dataclass(frozen=True)
class TbDecomposition:
    inner: Ball
    outer: Ball
    a_B: float
    a_U: float
    A1: float
    A2: float
    A3: float
    total: float
    c_gap: float
    oscillation: float

    def to_dict(self):
        return {
            "inner": {"center_index": self.inner.center_index, "radius": self.inner.radius},
            "outer": {"center_index": self.outer.center_index, "radius": self.outer.radius},
            "a_B": self.a_B, "a_U": self.a_U, "A1": self.A1, "A2": self.A2, "A3": self.A3,
            "total": self.total, "c_gap": self.c_gap, "oscillation": self.oscillation,
        }


@dataclass
class BoundednessRow:
    name: str
    lip_norm_f: float | None
    lip_norm_Tf: float | None
    ratio: float | None
    worst: TbDecomposition | None
    tf_c2: float | None = None
    pairs: int = 0
    decomposition_ok: bool = True
    max_excess: float = 0.0
    skipped: str | None = None

    def to_dict(self):
        return {
            "name": self.name, "lip_norm_f": self.lip_norm_f,
            "lip_norm_Tf": self.lip_norm_Tf, "ratio": self.ratio,
            "tf_c2": self.tf_c2, "pairs": self.pairs,
            "decomposition_ok": self.decomposition_ok, "max_excess": self.max_excess,
            "worst": self.worst.to_dict() if self.worst else None,
            "skipped": self.skipped,
        }


def _bound_one(op, batch, v, alpha, rho, name):
    m, fam = op.measure, batch.family
    w = m.weights
    lip_f, _ = _c2(m, v, alpha)
    if lip_f == 0.0:
        return BoundednessRow(name, 0.0, None, None, None, skipped="constant function")
    tf_c2, _ = _c2(m, op.matrix @ v, alpha)
    one = np.ones(m.size)
    pf, tailf = batch.pieces(v)
    p1, tail1 = batch.pieces(one)
    mass2 = fam.masses(2.0)
    near_w = batch.near * w[None, :]
    m2u = (near_w @ v) / mass2                       # m_{2U}(f) per ball
    tu = (pf - p1 * m2u[None, :]) + (tailf - tail1 * m2u[None, :])   # T_U f~ at all atoms
    inside_w = batch.inside * w[None, :]
    a_u = np.einsum("fn,nf->f", inside_w, tu) / mass2
    scale = fam.radii ** alpha
    ucls = batch.content_classes()
    indptr, outer = fam.outer_lists(rho)
    best, worst, pairs = -1.0, None, 0
    ok_all, excess = True, 0.0
    for bi in range(len(fam)):
        us = outer[indptr[bi]:indptr[bi + 1]]
        pairs += us.size
        # outer balls with identical content give identical columns
        _, first = np.unique(ucls[us], return_index=True)
        us = us[np.sort(first)]
        rows = np.flatnonzero(batch.inside[bi])
        wb = w[rows]
        mu = m2u[us]
        vals = tu[np.ix_(rows, us)]                   # T_U f~ on B, one column per U
        a_b = wb @ vals / mass2[bi]
        osc = wb @ np.abs(vals - a_b[None, :]) / mass2[bi]
        gap = np.abs(a_b - a_u[us])
        loc_b = pf[rows, bi][:, None] - p1[rows, bi][:, None] * mu[None, :]
        loc_u = pf[np.ix_(rows, us)] - p1[np.ix_(rows, us)] * mu[None, :]
        part1 = wb @ np.abs(loc_b) / mass2[bi]
        part2 = wb @ np.abs(loc_u - loc_b) / mass2[bi]
        part2[us == bi] = 0.0
        tail = tailf[np.ix_(rows, us)] - tail1[np.ix_(rows, us)] * mu[None, :]
        part3 = wb @ np.abs(tail) / mass2[bi]
        total = wb @ np.abs(vals) / mass2[bi]
        bound = part1 + part2 + part3
        over = total - bound
        tol = 1e-9 * np.maximum(bound, total) + 1e-12 * np.abs(loc_u).max(initial=0.0)
        if np.any(over > tol):
            ok_all = False
        excess = max(excess, float(np.max(over / np.maximum(bound, 1e-300))))
        obj = np.maximum(osc, gap) / scale[bi]
        k = int(np.argmax(obj))
        if obj[k] > best:
            best = float(obj[k])
            worst = TbDecomposition(fam[int(bi)], fam[int(us[k])], float(a_b[k]),
                                    float(a_u[us[k]]), float(part1[k]), float(part2[k]),
                                    float(part3[k]), float(total[k]), float(gap[k]),
                                    float(osc[k]))
    return BoundednessRow(name, lip_f, best, best / lip_f, worst, tf_c2, pairs,
                          ok_all, excess)


def boundedness_experiment(op, alpha, test_functions, family="dyadic", rho=2.0,
                           names=None, threads=1):
    """Lipschitz norm of ``Tf`` against that of ``f`` for each test function.

    For every nested pair ``(B, U)`` (``U = B`` included) the function is
    recentred by ``m_{2U}(f)``, ``a_B`` and ``a_U`` are the ``mu(2B)``- and
    ``mu(2U)``-normalised integrals of ``T_U f`` over ``B`` and ``U``, and the
    averaged total is split into the local, shell and tail parts ``A1``,
    ``A2``, ``A3``. ``lip_norm_Tf`` is the largest of the oscillation about
    ``a_B`` and ``|a_B - a_U|``, divided by ``r_B^alpha``.
    """
    eps = op.kernel.epsilon
    if not (0 < alpha < eps):
        raise ValidationError(f"alpha must lie in (0, epsilon={eps})")
    m = op.measure
    fam = family if isinstance(family, BallFamily) else enumerate_ball_family(m, family)
    batch = _TbBatch(op, fam)
    funcs = [_values(f, m) for f in test_functions]
    names = list(names) if names is not None else [f"f{i}" for i in range(len(funcs))]
    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda a: _bound_one(op, batch, a[0], alpha, rho, a[1]),
                                 zip(funcs, names)))
    return [_bound_one(op, batch, v, alpha, rho, nm) for v, nm in zip(funcs, names)]


# ------------------------------------------------------------------ tails

def tail_integral_check(measure, outer, n, epsilon, alpha):
    """``sum_{z outside 2U} w_z / |z - x_U|^(n + eps - alpha)`` and its ratio to
    ``r^(alpha - eps)``. No atoms outside ``2U`` gives ``(0, 0)``."""
    if not n > 0:
        raise ValidationError("n must be > 0")
    if not alpha < epsilon:
        raise ValidationError("alpha must be < epsilon")
    d = measure.distances_from(outer.center_index)
    far = ~within(d, 2.0 * outer.radius)
    if not far.any():
        return 0.0, 0.0
    value = math.fsum(measure.weights[far] / d[far] ** (n + epsilon - alpha))
    return value, value / outer.radius ** (alpha - epsilon)
