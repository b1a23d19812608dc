"""Marginal densities, joint couplings and the barycentric interpolant.

Every coupling prepends an independent standard-normal row ``x_0``; the
remaining rows ``x_1 .. x_K`` come either from independent marginals or from
affine (Monge) maps of ``x_0``. Joint batches are arrays of shape
``(n, K+1, d)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AffineMap",
    "Gaussian",
    "GaussianMixture",
    "Checkerboard",
    "TwoMoons",
    "Pushforward",
    "IndependentCoupling",
    "MongeCoupling",
    "marginal_from_dict",
    "coupling_from_dict",
    "sample_marginal",
    "sample_coupling",
    "interpolant",
    "substream",
    "joint_to_csv",
    "joint_from_csv",
]


def substream(seed: int, *counter: int) -> np.random.Generator:
    """Deterministic child generator for ``(seed, counter...)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(c) for c in counter)))


def _spd_cholesky(cov):
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be a symmetric square matrix")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None


@dataclass(frozen=True)
class AffineMap:
    """``x -> A x + c``."""

    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if A.shape != (c.size, c.size):
            raise ValueError(f"A has shape {A.shape}, expected {(c.size, c.size)}")
        if abs(np.linalg.det(A)) <= 1e-12:
            raise ValueError("affine map is not invertible")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)

    @classmethod
    def shift(cls, m) -> AffineMap:
        m = np.atleast_1d(np.asarray(m, dtype=float))
        return cls(np.eye(m.size), m)

    @classmethod
    def identity(cls, d: int) -> AffineMap:
        return cls(np.eye(d), np.zeros(d))

    @property
    def dim(self) -> int:
        return self.c.size

    def __call__(self, x):
        return x @ self.A.T + self.c

    def inverse(self, y):
        return np.linalg.solve(self.A, (np.asarray(y) - self.c).T).T

    def to_dict(self):
        return {"A": self.A.tolist(), "c": self.c.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["A"], d["c"])


# -- marginals --------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("mean/covariance dimension mismatch")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", _spd_cholesky(cov))

    @classmethod
    def standard(cls, d: int) -> Gaussian:
        return cls(np.zeros(d), np.eye(d))

    @property
    def dim(self):
        return self.mean.size

    def sample(self, n, rng):
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T

    def to_dict(self):
        return {"type": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}


@dataclass(frozen=True)
class GaussianMixture:
    components: tuple  # of (weight, Gaussian)

    def __post_init__(self):
        comps = tuple((float(w), g if isinstance(g, Gaussian) else Gaussian(*g)) for w, g in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        w = np.array([c[0] for c in comps])
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if len({g.dim for _, g in comps}) != 1:
            raise ValueError("mixture components differ in dimension")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return self.components[0][1].dim

    def sample(self, n, rng):
        w = np.array([c[0] for c in self.components])
        labels = rng.choice(len(w), size=n, p=w)
        out = np.empty((n, self.dim))
        for idx, (_, g) in enumerate(self.components):
            sel = labels == idx
            out[sel] = g.sample(int(sel.sum()), rng)
        return out

    def to_dict(self):
        return {
            "type": "gmm",
            "components": [
                {"weight": w, "mean": g.mean.tolist(), "cov": g.cov.tolist()} for w, g in self.components
            ],
        }


@dataclass(frozen=True)
class Checkerboard:
    """Uniform density on the dark cells of a ``cells x cells`` grid over ``[-extent, extent]^2``.

    A cell ``(i, j)``, counted from the lower-left corner, is dark when
    ``i + j`` is even.
    """

    extent: float = 2.0
    cells: int = 4

    def __post_init__(self):
        if self.cells <= 0 or self.cells % 2:
            raise ValueError("checkerboard needs a positive even cell count")
        if self.extent <= 0:
            raise ValueError("extent must be positive")

    @property
    def dim(self):
        return 2

    @property
    def width(self):
        return 2.0 * self.extent / self.cells

    def dark_cells(self):
        ij = np.array([(i, j) for i in range(self.cells) for j in range(self.cells) if (i + j) % 2 == 0])
        return ij

    def contains(self, x):
        x = np.atleast_2d(x)
        idx = np.floor((x + self.extent) / self.width)
        inside = np.all((idx >= 0) & (idx < self.cells), axis=1)
        return inside & (idx.sum(axis=1) % 2 == 0)

    def sample(self, n, rng):
        cells = self.dark_cells()
        pick = cells[rng.integers(len(cells), size=n)]
        u = rng.uniform(size=(n, 2))
        return -self.extent + (pick + u) * self.width

    def to_dict(self):
        return {"type": "checkerboard", "extent": self.extent, "cells": self.cells}


@dataclass(frozen=True)
class TwoMoons:
    noise: float = 0.1

    @property
    def dim(self):
        return 2

    def sample(self, n, rng):
        upper = rng.uniform(size=n) < 0.5
        theta = rng.uniform(0.0, np.pi, size=n)
        x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
        y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
        out = np.column_stack([x, y])
        return out + self.noise * rng.standard_normal((n, 2))

    def to_dict(self):
        return {"type": "two-moons", "noise": self.noise}


@dataclass(frozen=True)
class Pushforward:
    base: object
    map: AffineMap

    def __post_init__(self):
        if self.base.dim != self.map.dim:
            raise ValueError("pushforward map dimension does not match base")

    @property
    def dim(self):
        return self.base.dim

    def sample(self, n, rng):
        return self.map(self.base.sample(n, rng))

    def to_dict(self):
        return {"type": "pushforward", "base": self.base.to_dict(), "map": self.map.to_dict()}


def marginal_from_dict(d: dict):
    kind = d["type"]
    if kind == "gaussian":
        return Gaussian(d["mean"], d["cov"])
    if kind == "gmm":
        return GaussianMixture(tuple((c["weight"], Gaussian(c["mean"], c["cov"])) for c in d["components"]))
    if kind == "checkerboard":
        return Checkerboard(float(d.get("extent", 2.0)), int(d.get("cells", 4)))
    if kind == "two-moons":
        return TwoMoons(float(d.get("noise", 0.1)))
    if kind == "pushforward":
        return Pushforward(marginal_from_dict(d["base"]), AffineMap.from_dict(d["map"]))
    raise ValueError(f"unknown marginal type {kind!r}")


def sample_marginal(spec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 0:
        raise ValueError("sample count must be nonnegative")
    return spec.sample(int(n), rng)


# -- couplings --------------------------------------------------------------


@dataclass(frozen=True)
class IndependentCoupling:
    """Product coupling of ``N(0, Id)`` with the listed marginals."""

    marginals: tuple

    def __post_init__(self):
        margs = tuple(self.marginals)
        if not margs:
            raise ValueError("coupling needs at least one non-base marginal")
        if len({m.dim for m in margs}) != 1:
            raise ValueError("marginal dimensions differ")
        object.__setattr__(self, "marginals", margs)

    @property
    def K(self):
        return len(self.marginals)

    @property
    def dim(self):
        return self.marginals[0].dim

    def marginal(self, k):
        return Gaussian.standard(self.dim) if k == 0 else self.marginals[k - 1]

    def sample(self, n, rng):
        out = np.empty((n, self.K + 1, self.dim))
        out[:, 0] = rng.standard_normal((n, self.dim))
        for k, m in enumerate(self.marginals, start=1):
            out[:, k] = m.sample(n, rng)
        return out

    def to_dict(self):
        return {"type": "independent", "marginals": [m.to_dict() for m in self.marginals]}


@dataclass(frozen=True)
class MongeCoupling:
    """``x_k = A_k x_0 + c_k`` for ``k = 1..K``, with ``x_0 ~ N(0, Id)``."""

    maps: tuple

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ValueError("coupling needs at least one map")
        if len({m.dim for m in maps}) != 1:
            raise ValueError("map dimensions differ")
        object.__setattr__(self, "maps", maps)

    @property
    def K(self):
        return len(self.maps)

    @property
    def dim(self):
        return self.maps[0].dim

    def marginal(self, k):
        base = Gaussian.standard(self.dim)
        return base if k == 0 else Pushforward(base, self.maps[k - 1])

    def sample(self, n, rng):
        x0 = rng.standard_normal((n, self.dim))
        out = np.empty((n, self.K + 1, self.dim))
        out[:, 0] = x0
        for k, T in enumerate(self.maps, start=1):
            out[:, k] = T(x0)
        return out

    def to_dict(self):
        return {"type": "monge", "maps": [m.to_dict() for m in self.maps]}


def coupling_from_dict(d: dict):
    kind = d["type"]
    if kind == "independent":
        return IndependentCoupling(tuple(marginal_from_dict(m) for m in d["marginals"]))
    if kind == "monge":
        return MongeCoupling(tuple(AffineMap.from_dict(m) for m in d["maps"]))
    raise ValueError(f"unknown coupling type {kind!r}")


def sample_coupling(spec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Joint samples of shape ``(n, K+1, d)``; row 0 is standard normal."""
    if n < 0:
        raise ValueError("sample count must be nonnegative")
    return spec.sample(int(n), rng)


def interpolant(alpha, joint) -> np.ndarray:
    """``x(alpha) = sum_k alpha_k x_k``.

    ``alpha`` has shape ``(..., K+1)`` and ``joint`` ``(..., K+1, d)``; leading
    dimensions broadcast.
    """
    alpha = np.asarray(alpha, dtype=float)
    joint = np.asarray(joint, dtype=float)
    if joint.ndim < 2 or alpha.shape[-1] != joint.shape[-2]:
        raise ValueError(f"alpha with {alpha.shape[-1]} weights does not match joint shape {joint.shape}")
    return np.sum(alpha[..., :, None] * joint, axis=-2)


# -- I/O ----------------------------------------------------------------------


def joint_to_csv(joint, fh=None) -> str | None:
    """Write a joint batch as ``marginal_index,dim_0,..,dim_{d-1},sample_id`` rows.

    A plain ``(n, d)`` batch is written as marginal index 0.
    """
    joint = np.asarray(joint, dtype=float)
    if joint.ndim == 2:
        joint = joint[:, None, :]
    n, kp1, d = joint.shape
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["marginal_index"] + [f"dim_{i}" for i in range(d)] + ["sample_id"])
    for s in range(n):
        for k in range(kp1):
            w.writerow([k] + [repr(float(v)) for v in joint[s, k]] + [s])
    return buf.getvalue() if fh is None else None


def joint_from_csv(text_or_fh) -> np.ndarray:
    fh = io.StringIO(text_or_fh) if isinstance(text_or_fh, str) else text_or_fh
    reader = csv.reader(fh)
    header = next(reader)
    if header[0] != "marginal_index" or header[-1] != "sample_id":
        raise ValueError(f"unexpected CSV header {header}")
    d = len(header) - 2
    rows = [(int(r[0]), int(r[-1]), [float(v) for v in r[1:-1]]) for r in reader if r]
    if not rows:
        return np.zeros((0, 1, d))
    n = max(r[1] for r in rows) + 1
    kp1 = max(r[0] for r in rows) + 1
    out = np.full((n, kp1, d), np.nan)
    for k, s, vals in rows:
        out[s, k] = vals
    return out


def spec_to_json(spec) -> str:
    return json.dumps(spec.to_dict())
