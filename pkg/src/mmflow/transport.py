"""Probability-flow ODE and SDE samplers driven by a simplex path.

The velocity at time ``t`` is ``b(t, x) = sum_k alpha_dot_k(t) g_k(alpha(t), x)``.
Anything callable as ``path(t) -> (alpha, alpha_dot)`` works as a path; the
:class:`~mmflow.simplex.SimplexPath` kinds and :class:`TwoLegPath` both do.
"""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass

import numpy as np

from .fields import DEFAULT_EPS_ALPHA, ScoreUndefinedError
from .simplex import SimplexPath, barycenter, vertex

log = logging.getLogger(__name__)

__all__ = [
    "IntegratorConfig",
    "EpsilonSchedule",
    "IntegrationError",
    "TwoLegPath",
    "velocity",
    "flow_ode",
    "flow_sde",
    "transport",
    "route_path",
    "trajectory_to_csv",
]

ODE_SCHEMES = ("euler", "midpoint", "rk4")


class IntegrationError(FloatingPointError):
    def __init__(self, step):
        super().__init__(f"state became non-finite at step {step}")
        self.step = step


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "midpoint"
    steps: int = 100

    def __post_init__(self):
        if self.scheme not in ODE_SCHEMES + ("euler-maruyama",):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")


class EpsilonSchedule:
    """Noise level ``eps(t) >= 0``: a constant or a piecewise-linear table."""

    def __init__(self, value=0.0, times=None):
        if times is None:
            values = np.array([float(value)])
            times = np.array([0.0])
        else:
            times = np.asarray(times, dtype=float)
            values = np.asarray(value, dtype=float)
            if times.shape != values.shape or times.ndim != 1 or np.any(np.diff(times) <= 0):
                raise ValueError("table needs increasing times matching the values")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise ValueError("eps must be finite and nonnegative")
        self.times = times
        self.values = values

    @classmethod
    def constant(cls, value):
        return cls(value)

    def __call__(self, t):
        if self.values.size == 1:
            return float(self.values[0])
        return float(np.interp(t, self.times, self.values))

    @property
    def is_zero(self):
        return bool(np.all(self.values == 0))


class TwoLegPath:
    """Straight leg ``e_i -> c`` on ``[0, 1/2]`` then ``c -> e_j`` on ``[1/2, 1]``.

    The junction is continuous but not differentiable; ``t = 1/2`` belongs to
    the second leg.
    """

    def __init__(self, i, j, K, center=None):
        self.K = K
        self.i, self.j = i, j
        self.start = np.asarray(vertex(i, K))
        self.end = np.asarray(vertex(j, K))
        self.center = np.asarray(barycenter(K) if center is None else center, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > 1):
            raise ValueError("path time must lie in [0, 1]")
        first = (t < 0.5)[..., None]
        s1 = (2.0 * t)[..., None]
        s2 = (2.0 * t - 1.0)[..., None]
        alpha = np.where(first, (1 - s1) * self.start + s1 * self.center, (1 - s2) * self.center + s2 * self.end)
        adot = np.where(first, 2.0 * (self.center - self.start), 2.0 * (self.end - self.center))
        return alpha, adot + 0.0 * alpha


def velocity(fields, path, t, x):
    """``b(t, x)`` for a batch ``x`` of shape ``(n, d)``."""
    alpha, adot = path(float(t))
    if not np.any(adot):
        return np.zeros_like(np.asarray(x, dtype=float))
    g = fields(alpha, x)
    return np.einsum("k,nkd->nd", adot, g)


def _grid(steps):
    return np.linspace(0.0, 1.0, steps + 1)


def _snapshot_index(times, steps):
    idx = []
    for t in times:
        i = float(t) * steps
        if abs(i - round(i)) > 1e-9 or not 0 <= t <= 1:
            raise ValueError(f"snapshot time {t} is not on the {steps}-step grid")
        idx.append(int(round(i)))
    return idx


def flow_ode(fields, path, x0, config: IntegratorConfig | None = None, times=None):
    """Integrate ``dX/dt = b(t, X)`` from ``t = 0`` to ``t = 1``.

    Parameters
    ----------
    fields : callable
        ``fields(alpha, x) -> (n, K+1, d)``.
    path : callable
        ``path(t) -> (alpha, alpha_dot)``.
    x0 : ndarray, shape (n, d)
    config : IntegratorConfig
    times : sequence of float, optional
        Grid times at which to record the state. ``"all"`` records every step.

    Returns
    -------
    ndarray or (ndarray, ndarray)
        Endpoints, plus the stacked snapshots when ``times`` is given.
    """
    config = config or IntegratorConfig()
    if config.scheme not in ODE_SCHEMES:
        raise ValueError(f"{config.scheme!r} is not an ODE scheme")
    n = config.steps
    ts = _grid(n)
    h = 1.0 / n
    x = np.array(x0, dtype=float)
    if times == "all":
        times = ts
    keep = {} if times is None else {i: None for i in _snapshot_index(times, n)}
    if 0 in keep:
        keep[0] = x.copy()

    def b(t, y):
        return velocity(fields, path, t, y)

    for step in range(n):
        t = ts[step]
        if config.scheme == "euler":
            x = x + h * b(t, x)
        elif config.scheme == "midpoint":
            k1 = b(t, x)
            x = x + h * b(t + 0.5 * h, x + 0.5 * h * k1)
        else:
            k1 = b(t, x)
            k2 = b(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = b(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = b(min(t + h, 1.0), x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(step)
        if step + 1 in keep:
            keep[step + 1] = x.copy()
    if times is None:
        return x
    return x, np.stack([keep[i] for i in _snapshot_index(times, n)])


def flow_sde(fields, path, eps: EpsilonSchedule, x0, config: IntegratorConfig | None = None, rng=None,
             eps_alpha: float = DEFAULT_EPS_ALPHA, strict: bool = False):
    """Euler-Maruyama for ``dX = (b - eps/alpha_0 g_0) dt + sqrt(2 eps) dW``.

    Where ``alpha_0(t) < eps_alpha`` the noise is switched off for that step
    (a warning is logged once); with ``strict=True`` that situation raises
    :class:`~mmflow.fields.ScoreUndefinedError` instead.
    """
    config = config or IntegratorConfig(scheme="euler-maruyama")
    if not isinstance(eps, EpsilonSchedule):
        eps = EpsilonSchedule.constant(eps)
    rng = rng if rng is not None else np.random.default_rng(0)
    n = config.steps
    ts = _grid(n)
    h = 1.0 / n
    x = np.array(x0, dtype=float)
    warned = False
    for step in range(n):
        t = ts[step]
        e = eps(t)
        alpha, adot = path(float(t))
        if e > 0 and alpha[0] < eps_alpha:
            if strict:
                raise ScoreUndefinedError(f"eps({t:.3g}) > 0 where alpha_0 = {alpha[0]:.3g}")
            if not warned:
                log.warning("alpha_0 < %g at t=%.3g; disabling noise there", eps_alpha, t)
                warned = True
            e = 0.0
        if e == 0.0:
            x = x + h * velocity(fields, path, t, x)
        else:
            g = fields(alpha, x)
            drift = np.einsum("k,nkd->nd", adot, g) - (e / alpha[0]) * g[:, 0]
            x = x + h * drift + np.sqrt(2.0 * e * h) * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(step)
    return x


_ROUTE_RE = re.compile(r"^(edge|via-barycenter)\((\d+),(\d+)\)$")


def route_path(route, K):
    """Turn a route spec into a path callable."""
    if isinstance(route, (SimplexPath, TwoLegPath)) or callable(route):
        return route
    m = _ROUTE_RE.match(str(route).replace(" ", ""))
    if not m:
        raise ValueError(f"invalid route {route!r}")
    kind, i, j = m.group(1), int(m.group(2)), int(m.group(3))
    if not (0 <= i <= K and 0 <= j <= K):
        raise ValueError(f"route {route!r} refers to a vertex outside 0..{K}")
    if kind == "edge":
        return SimplexPath.linear_edge(i, j, K)
    return TwoLegPath(i, j, K)


def transport(fields, route, x, config: IntegratorConfig | None = None, times=None):
    """Push a batch from one vertex density to another along ``route``.

    ``route`` is ``"edge(i,j)"``, ``"via-barycenter(i,j)"`` or a path object.
    """
    return flow_ode(fields, route_path(route, fields.K), x, config, times=times)


def trajectory_to_csv(times, states, fh=None) -> str | None:
    """Rows ``sample_id, t, dim_0, ...`` for snapshots of shape ``(T, n, d)``."""
    states = np.asarray(states, dtype=float)
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "t"] + [f"dim_{i}" for i in range(states.shape[-1])])
    for s in range(states.shape[1]):
        for ti, t in enumerate(times):
            w.writerow([s, repr(float(t))] + [repr(float(v)) for v in states[ti, s]])
    return buf.getvalue() if fh is None else None
