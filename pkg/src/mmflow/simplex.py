"""Points and curves on the K-simplex.

A simplex path returns both the coordinate ``alpha(t)`` and its time derivative,
since the velocity field is assembled from ``alpha_dot``. The Fourier family
perturbs a straight edge with squared sine series and renormalises onto the
simplex, so the derivative comes from the quotient rule.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

SUM_TOL = 1e-9

__all__ = [
    "SimplexPoint",
    "SimplexPath",
    "vertex",
    "barycenter",
    "sample_alpha",
    "parse_alpha_mode",
    "eval_path",
]


@dataclass(frozen=True)
class SimplexPoint:
    """Barycentric weights ``(alpha_0, ..., alpha_K)``."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ValueError(f"simplex point needs a 1-d vector of length >= 2, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("simplex point has non-finite coordinates")
        if np.any(c < 0):
            raise ValueError(f"negative barycentric weight in {c}")
        if abs(c.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"weights sum to {c.sum()!r}, not 1")
        if np.sum(c**2) <= 0:
            raise ValueError("sum of squared weights must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def K(self) -> int:
        return self.coords.size - 1

    def __array__(self, dtype=None, copy=None):
        return np.array(self.coords, dtype=dtype)

    def __len__(self):
        return self.coords.size

    def __getitem__(self, k):
        return self.coords[k]


def vertex(k: int, K: int) -> SimplexPoint:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not 0 <= k <= K:
        raise IndexError(f"vertex index {k} out of range for K={K}")
    e = np.zeros(K + 1)
    e[k] = 1.0
    return SimplexPoint(e)


def barycenter(K: int) -> SimplexPoint:
    return SimplexPoint(np.full(K + 1, 1.0 / (K + 1)))


# -- alpha sampling ---------------------------------------------------------

_EDGE_RE = re.compile(r"^single-edge\(\s*(\d+)\s*,\s*(\d+)\s*\)$")


def parse_alpha_mode(mode):
    """Normalise an alpha-sampling mode.

    Accepts ``"full-simplex"``, ``"all-edges"``, ``"single-edge(i,j)"`` or a
    tuple ``("single-edge", i, j)``. Returns a tuple whose first entry is the
    mode name.
    """
    if isinstance(mode, (tuple, list)):
        if len(mode) == 3 and mode[0] == "single-edge":
            return ("single-edge", int(mode[1]), int(mode[2]))
        if len(mode) == 1 and mode[0] in ("full-simplex", "all-edges"):
            return (mode[0],)
        raise ValueError(f"invalid alpha mode {mode!r}")
    if mode in ("full-simplex", "all-edges"):
        return (mode,)
    m = _EDGE_RE.match(str(mode).replace(" ", ""))
    if m:
        return ("single-edge", int(m.group(1)), int(m.group(2)))
    raise ValueError(f"invalid alpha mode {mode!r}")


def format_alpha_mode(mode) -> str:
    mode = parse_alpha_mode(mode)
    if mode[0] == "single-edge":
        return f"single-edge({mode[1]},{mode[2]})"
    return mode[0]


def sample_alpha(mode, K: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw simplex coordinates.

    ``full-simplex`` is the flat Dirichlet (normalised unit exponentials),
    ``all-edges`` picks an unordered vertex pair uniformly then a uniform
    position on that edge, and ``single-edge(i,j)`` is uniform on one edge.

    Returns an array of shape ``(K+1,)`` when ``size`` is None, otherwise
    ``(size, K+1)``.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    mode = parse_alpha_mode(mode)
    n = 1 if size is None else int(size)
    if mode[0] == "full-simplex":
        e = rng.standard_exponential((n, K + 1))
        out = e / e.sum(axis=1, keepdims=True)
    else:
        if mode[0] == "all-edges":
            pairs = np.array([(i, j) for i in range(K + 1) for j in range(i + 1, K + 1)])
            pick = pairs[rng.integers(len(pairs), size=n)]
            i, j = pick[:, 0], pick[:, 1]
        else:
            _, a, b = mode
            if not (0 <= a <= K and 0 <= b <= K) or a == b:
                raise ValueError(f"invalid edge ({a},{b}) for K={K}")
            i = np.full(n, a)
            j = np.full(n, b)
        t = rng.uniform(size=n)
        out = np.zeros((n, K + 1))
        rows = np.arange(n)
        out[rows, i] = 1.0 - t
        out[rows, j] = t
    return out[0] if size is None else out


# -- paths ------------------------------------------------------------------


def _sinpi(x):
    """sin(pi x), exactly zero at integers."""
    x = np.asarray(x, dtype=float)
    r = x - 2.0 * np.round(0.5 * x)
    r = np.where(r > 0.5, 1.0 - r, r)
    r = np.where(r < -0.5, -1.0 - r, r)
    return np.sin(np.pi * r)


def _cospi(x):
    return _sinpi(np.asarray(x, dtype=float) + 0.5)


@dataclass(frozen=True, eq=False)
class SimplexPath:
    """A differentiable curve ``t -> alpha(t)`` on the simplex.

    Use the constructors :meth:`linear_edge`, :meth:`fourier` and
    :meth:`constant` rather than instantiating directly.
    """

    kind: str
    K: int
    i: int = 0
    j: int = 0
    coeffs: np.ndarray | None = field(default=None, repr=False)
    squared: bool = True

    def __eq__(self, other):
        if not isinstance(other, SimplexPath):
            return NotImplemented
        same_coeffs = (self.coeffs is None and other.coeffs is None) or (
            self.coeffs is not None and other.coeffs is not None and np.array_equal(self.coeffs, other.coeffs))
        return (self.kind, self.K, self.i, self.j, self.squared) == (other.kind, other.K, other.i, other.j,
                                                                     other.squared) and same_coeffs

    __hash__ = None

    def __post_init__(self):
        if self.kind not in ("linear-edge", "fourier", "constant"):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        for idx in (self.i, self.j):
            if not 0 <= idx <= self.K:
                raise IndexError(f"vertex {idx} out of range for K={self.K}")
        if self.kind != "constant" and self.i == self.j:
            raise ValueError("edge endpoints must differ")
        if self.kind == "fourier":
            a = np.array(self.coeffs, dtype=float)
            if a.ndim != 2 or a.shape[0] != self.K + 1:
                raise ValueError(f"fourier coefficients must have shape (K+1, N), got {a.shape}")
            a.setflags(write=False)
            object.__setattr__(self, "coeffs", a)

    @classmethod
    def linear_edge(cls, i: int, j: int, K: int) -> SimplexPath:
        return cls("linear-edge", K, i, j)

    @classmethod
    def constant(cls, k: int, K: int) -> SimplexPath:
        return cls("constant", K, k, k)

    @classmethod
    def fourier(cls, i: int, j: int, K: int, N: int = 20, coeffs=None, squared: bool = True) -> SimplexPath:
        if coeffs is None:
            coeffs = np.zeros((K + 1, N))
        return cls("fourier", K, i, j, np.asarray(coeffs, dtype=float), squared)

    @property
    def N(self) -> int:
        return 0 if self.coeffs is None else self.coeffs.shape[1]

    def with_coeffs(self, coeffs) -> SimplexPath:
        return SimplexPath.fourier(self.i, self.j, self.K, coeffs=np.reshape(coeffs, (self.K + 1, -1)),
                                   squared=self.squared)

    # evaluation

    def __call__(self, t):
        return eval_path(self, t)

    def _base(self, t):
        base = np.zeros(t.shape + (self.K + 1,))
        dbase = np.zeros_like(base)
        base[..., self.i] = 1.0 - t
        base[..., self.j] = t
        dbase[..., self.i] = -1.0
        dbase[..., self.j] = 1.0
        return base, dbase

    def _fourier_parts(self, t):
        n = np.arange(1, self.N + 1)
        tn = t[..., None] * n
        phi = _sinpi(tn)
        dphi = np.pi * n * _cospi(tn)
        s = phi @ self.coeffs.T
        ds = dphi @ self.coeffs.T
        base, dbase = self._base(t)
        if self.squared:
            raw = base + s**2
            draw = dbase + 2.0 * s * ds
        else:
            raw = base + s
            draw = dbase + ds
            dead = raw < 0
            raw = np.where(dead, 0.0, raw)
            draw = np.where(dead, 0.0, draw)
        return phi, dphi, s, ds, raw, draw

    def _normalise(self, raw, draw):
        total = raw.sum(axis=-1, keepdims=True)
        if np.any(total <= 1e-12):
            raise ValueError("path weights collapsed to zero; coefficients out of range")
        dtotal = draw.sum(axis=-1, keepdims=True)
        return raw / total, draw / total - raw * dtotal / total**2

    def coeff_jacobian(self, t):
        """Derivatives of ``(alpha, alpha_dot)`` with respect to the coefficients.

        Returns ``(alpha, alpha_dot, dalpha, dalpha_dot)`` where the Jacobians
        have shape ``t.shape + (K+1, K+1, N)``; entry ``[..., k, m, n]`` is the
        derivative of component ``k`` with respect to coefficient ``a[m, n]``.
        """
        if self.kind != "fourier":
            raise TypeError("coefficient Jacobian is defined for fourier paths only")
        t = _check_t(t)
        phi, dphi, s, ds, raw, draw = self._fourier_parts(t)
        # d raw_m / d a_mn and d draw_m / d a_mn, shape (..., K+1, N)
        if self.squared:
            draw_da = 2.0 * s[..., None] * phi[..., None, :]
            ddraw_da = 2.0 * (phi[..., None, :] * ds[..., None] + s[..., None] * dphi[..., None, :])
        else:
            live = (raw > 0)[..., None]
            draw_da = np.where(live, phi[..., None, :], 0.0)
            ddraw_da = np.where(live, dphi[..., None, :], 0.0)
        S = raw.sum(axis=-1)[..., None, None]
        dS = draw.sum(axis=-1)[..., None, None]
        eye = np.eye(self.K + 1)
        rk = raw[..., :, None]
        drk = draw[..., :, None]
        # partials of alpha_k / alpha_dot_k w.r.t. raw_m and draw_m, shape (..., K+1, K+1)
        a_raw = eye / S - rk / S**2
        ad_raw = -drk / S**2 - eye * dS / S**2 + 2.0 * rk * dS / S**3
        ad_draw = a_raw
        dalpha = a_raw[..., None] * draw_da[..., None, :, :]
        dalpha_dot = ad_raw[..., None] * draw_da[..., None, :, :] + ad_draw[..., None] * ddraw_da[..., None, :, :]
        alpha, alpha_dot = self._normalise(raw, draw)
        return alpha, alpha_dot, dalpha, dalpha_dot

    # serialisation

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "i": self.i, "j": self.j, "K": self.K}
        if self.kind == "fourier":
            d["N"] = self.N
            d["coeffs"] = self.coeffs.tolist()
            if not self.squared:
                d["squared"] = False
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SimplexPath:
        kind = d["kind"]
        if kind == "linear-edge":
            return cls.linear_edge(d["i"], d["j"], d["K"])
        if kind == "constant":
            return cls.constant(d["i"], d["K"])
        if kind == "fourier":
            coeffs = np.asarray(d["coeffs"], dtype=float)
            if "N" in d and coeffs.shape[1] != d["N"]:
                raise ValueError(f"N={d['N']} does not match coefficient width {coeffs.shape[1]}")
            return cls.fourier(d["i"], d["j"], d["K"], coeffs=coeffs, squared=d.get("squared", True))
        raise ValueError(f"unknown path kind {kind!r}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> SimplexPath:
        return cls.from_dict(json.loads(s))


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("path time must lie in [0, 1]")
    return t


def eval_path(path: SimplexPath, t):
    """Evaluate ``(alpha(t), alpha_dot(t))``.

    ``t`` may be a scalar or an array; outputs have shape ``t.shape + (K+1,)``.
    """
    t = _check_t(t)
    if path.kind == "constant":
        alpha = np.zeros(t.shape + (path.K + 1,))
        alpha[..., path.i] = 1.0
        return alpha, np.zeros_like(alpha)
    if path.kind == "linear-edge":
        return path._base(t)
    *_, raw, draw = path._fourier_parts(t)
    return path._normalise(raw, draw)
