"""Named test-function profiles evaluated on a measure's support.

Profile strings follow the generator syntax ``kind:key=val,...``:

- ``constant:c=`` gives the constant ``c``.
- ``linear:a=`` gives ``a * x_1``.
- ``power:e=,a=`` gives ``|x_1 - a|^e``.
- ``random:seed=,k=`` gives ``min_j (c_j + |x - y_j|)`` over ``k`` random
  anchors ``y_j`` in the support. It is 1-Lipschitz.
- ``cos:k=`` / ``sin:k=`` / ``harmonic:k=`` give ``cos(k theta)`` or
  ``sin(k theta)``. Here ``theta`` is the polar angle for ``d >= 2`` and
  ``2 pi x_1`` for ``d = 1``.

A path to an existing file is read as one value per line.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ValidationError
from .measure import parse_generator_spec

__all__ = ["evaluate_profile", "load_function", "save_function", "resolve_function"]


def _theta(points):
    if points.shape[1] >= 2:
        return np.arctan2(points[:, 1], points[:, 0])
    return 2.0 * np.pi * points[:, 0]


def _random_lipschitz(points, seed, k):
    rng = np.random.default_rng(seed)
    anchors = points[rng.choice(len(points), size=min(k, len(points)), replace=False)]
    offsets = rng.random(len(anchors))
    d = np.sqrt(np.sum((points[:, None, :] - anchors[None, :, :]) ** 2, axis=2))
    return np.min(d + offsets[None, :], axis=1)


def evaluate_profile(spec, measure, seed=0):
    """Sample a named profile on the support; ``seed`` is the fallback seed
    for ``random`` when the profile string does not carry one."""
    gs = parse_generator_spec(spec) if isinstance(spec, str) else spec
    p = dict(gs.params)
    x = measure.points
    if gs.kind == "constant":
        out = np.full(measure.size, float(p.pop("c", 1.0)))
    elif gs.kind == "linear":
        out = float(p.pop("a", 1.0)) * x[:, 0]
    elif gs.kind == "power":
        e, a = float(p.pop("e", 1.5)), float(p.pop("a", 0.0))
        if e <= 0:
            raise ValidationError("power exponent e must be > 0")
        out = np.abs(x[:, 0] - a) ** e
    elif gs.kind == "random":
        s, k = int(p.pop("seed", seed)), int(p.pop("k", 8))
        if k < 1:
            raise ValidationError("random profile needs k >= 1 anchors")
        out = _random_lipschitz(x, s, k)
    elif gs.kind in ("cos", "harmonic", "sin"):
        k = float(p.pop("k", 1))
        fn = np.sin if gs.kind == "sin" else np.cos
        out = fn(k * _theta(x))
    else:
        raise ValidationError(f"unknown function profile {gs.kind!r}")
    if p:
        raise ValidationError(f"unknown parameters for {gs.kind}: {sorted(p)}")
    return out


def load_function(path, measure=None):
    vals = np.loadtxt(path, dtype=float, ndmin=1)
    if measure is not None and vals.shape != (measure.size,):
        raise ValidationError(
            f"{path}: {vals.size} values for a measure with {measure.size} atoms")
    return vals


def save_function(values, path):
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(values, dtype=float):
            fh.write(repr(float(v)) + "\n")


def resolve_function(spec, measure, seed=0, base_dir=None):
    """File path (relative to ``base_dir``) or profile string -> values."""
    path = spec if base_dir is None else os.path.join(base_dir, spec)
    if os.path.isfile(path):
        return load_function(path, measure)
    return evaluate_profile(spec, measure, seed)
