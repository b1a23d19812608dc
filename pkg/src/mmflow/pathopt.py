"""Kinetic transport cost of a simplex path, and its minimisation over Fourier paths.

The cost is estimated without simulating the flow: for each time node the
interpolant ``x(alpha(t))`` is formed directly from joint samples and the
squared velocity is averaged. The same joint samples serve every time node
and every coefficient perturbation, so the estimate is a smooth,
deterministic function of the path coefficients.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .couplings import interpolant, sample_coupling, substream
from .mlp import Adam
from .simplex import SimplexPath

log = logging.getLogger(__name__)

__all__ = ["PathOptConfig", "CostEstimate", "transport_cost", "cost_gradient", "optimize_path",
           "cost_trace_to_csv", "alpha_table"]


@dataclass(frozen=True)
class PathOptConfig:
    mc_samples: int = 4096
    time_nodes: int = 96
    steps: int = 300
    lr: float = 0.02
    grad_method: str = "finite-difference"
    fd_step: float = 1e-5
    seed: int = 0
    chunk_rows: int = 65536

    def __post_init__(self):
        if self.mc_samples < 2 or self.time_nodes < 1 or self.steps < 0:
            raise ValueError("sample, node and step counts must be positive")
        if not self.lr >= 0:
            raise ValueError("learning rate must be nonnegative")
        if self.grad_method not in ("finite-difference", "analytic"):
            raise ValueError(f"unknown gradient method {self.grad_method!r}")

    def to_dict(self):
        return dict(self.__dict__)


class CostEstimate(NamedTuple):
    value: float
    stderr: float


def _nodes(T):
    return (np.arange(T) + 0.5) / T


def _samples(coupling, config, seed=None):
    rng = substream(config.seed if seed is None else seed, 0)
    return sample_coupling(coupling, config.mc_samples, rng)


def _node_chunks(T, M, rows):
    per = max(1, rows // max(M, 1))
    for s in range(0, T, per):
        yield slice(s, min(T, s + per))


def _per_sample_cost(fields, path, joint, config):
    T = config.time_nodes
    M = len(joint)
    ts = _nodes(T)
    alpha, adot = path(ts)
    acc = np.zeros(M)
    for sl in _node_chunks(T, M, config.chunk_rows):
        a = alpha[sl]
        ad = adot[sl]
        nt = len(a)
        x = interpolant(a[:, None, :], joint[None]).reshape(nt * M, -1)
        g = fields(np.repeat(a, M, axis=0), x).reshape(nt, M, a.shape[1], -1)
        b = np.einsum("tk,tmkd->tmd", ad, g)
        acc += np.sum(b * b, axis=(0, 2)) / T
    return acc


def transport_cost(fields, path, coupling, config: PathOptConfig | None = None, samples=None,
                   seed: int | None = None) -> CostEstimate:
    """Estimate ``int_0^1 E|sum_k alpha_dot_k g_k(alpha, x(alpha))|^2 dt``.

    Midpoint rule in ``t`` over ``config.time_nodes`` nodes, Monte Carlo over
    ``config.mc_samples`` joint draws. Returns the value and its standard
    error (the spread across joint draws of the time-integrated integrand).
    """
    config = config or PathOptConfig()
    joint = _samples(coupling, config, seed) if samples is None else samples
    c = _per_sample_cost(fields, path, joint, config)
    return CostEstimate(float(c.mean()), float(c.std(ddof=1) / np.sqrt(len(c))))


def _fd_gradient(fields, path, joint, config):
    a = path.coeffs.ravel()
    grad = np.empty_like(a)
    h = config.fd_step
    for p in range(a.size):
        up = a.copy()
        dn = a.copy()
        up[p] += h
        dn[p] -= h
        cu = _per_sample_cost(fields, path.with_coeffs(up), joint, config).mean()
        cd = _per_sample_cost(fields, path.with_coeffs(dn), joint, config).mean()
        grad[p] = (cu - cd) / (2.0 * h)
    return grad


def _analytic_gradient(fields, path, joint, config):
    if not hasattr(fields, "backward"):
        raise TypeError("analytic path gradients need a differentiable field model")
    T = config.time_nodes
    M = len(joint)
    ts = _nodes(T)
    alpha, adot, dalpha, dadot = path.coeff_jacobian(ts)
    bar_alpha = np.zeros_like(alpha)
    bar_adot = np.zeros_like(adot)
    total = 0.0
    for sl in _node_chunks(T, M, config.chunk_rows):
        a = alpha[sl]
        ad = adot[sl]
        nt, kp1 = a.shape
        x = interpolant(a[:, None, :], joint[None])
        g, cache = fields.forward(np.repeat(a, M, axis=0), x.reshape(nt * M, -1))
        g = g.reshape(nt, M, kp1, -1)
        b = np.einsum("tk,tmkd->tmd", ad, g)
        total += np.sum(b * b)
        scale = 2.0 / (M * T)
        bar_adot[sl] = scale * np.einsum("tmd,tmkd->tk", b, g)
        gbar = scale * ad[:, None, :, None] * b[:, :, None, :]
        _, ga, gx = fields.backward(cache, gbar.reshape(nt * M, kp1, -1), need_params=False)
        ga = ga.reshape(nt, M, kp1)
        gx = gx.reshape(nt, M, -1)
        bar_alpha[sl] = ga.sum(axis=1) + np.einsum("tmd,mkd->tk", gx, joint)
    grad = np.einsum("tk,tkmn->mn", bar_alpha, dalpha) + np.einsum("tk,tkmn->mn", bar_adot, dadot)
    return grad.ravel(), total / (M * T)


def cost_gradient(fields, path: SimplexPath, coupling=None, config: PathOptConfig | None = None, samples=None,
                  method: str | None = None):
    """Gradient of the cost estimate with respect to the flattened Fourier coefficients."""
    config = config or PathOptConfig()
    joint = _samples(coupling, config) if samples is None else samples
    method = method or config.grad_method
    if method == "analytic":
        return _analytic_gradient(fields, path, joint, config)[0]
    return _fd_gradient(fields, path, joint, config)


def optimize_path(fields, initial: SimplexPath, coupling, config: PathOptConfig | None = None):
    """Adam descent on the Fourier coefficients of ``initial``.

    The joint samples are drawn once from ``config.seed`` and reused for every
    step (common random numbers). Returns ``(best_path, trace)`` where
    ``trace[s] = (cost, stderr)`` for the iterate before step ``s``; the last
    row is the final iterate.
    """
    config = config or PathOptConfig()
    if initial.kind != "fourier":
        raise TypeError("path optimisation needs a fourier path")
    if config.time_nodes < 4 * initial.coeffs.shape[1]:
        # |alpha_dot|^2 carries frequencies up to 2N; a coarse rule lets the optimiser exploit aliasing
        log.warning("time_nodes=%d under-resolves N=%d harmonics; validate the result on a finer grid",
                    config.time_nodes, initial.coeffs.shape[1])
    if initial.squared and config.steps and not np.any(initial.coeffs):
        # d(s^2)/da = 2 s phi vanishes at s = 0, so the straight edge is a stationary point
        log.warning("all-zero coefficients are stationary for squared amplitudes; the path will not move")
    joint = _samples(coupling, config)
    a = initial.coeffs.ravel().copy()
    opt = Adam(a.size, lr=config.lr)
    trace = np.empty((config.steps + 1, 2))
    best, best_cost = initial, np.inf
    for step in range(config.steps + 1):
        path = initial.with_coeffs(a)
        c = _per_sample_cost(fields, path, joint, config)
        cost = float(c.mean())
        if not np.isfinite(cost):
            raise FloatingPointError(f"non-finite transport cost at step {step}")
        trace[step] = cost, c.std(ddof=1) / np.sqrt(len(c))
        if cost < best_cost:
            best, best_cost = path, cost
        if step == config.steps:
            break
        if config.grad_method == "analytic":
            grad = _analytic_gradient(fields, path, joint, config)[0]
        else:
            grad = _fd_gradient(fields, path, joint, config)
        if config.lr > 0:
            opt.step(a, grad)
    return best, trace


def cost_trace_to_csv(trace, fh=None) -> str | None:
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "cost", "stderr"])
    for s, (c, e) in enumerate(np.asarray(trace)):
        w.writerow([s, repr(float(c)), repr(float(e))])
    return buf.getvalue() if fh is None else None


def alpha_table(path, n: int = 101, fh=None) -> str | None:
    """CSV of ``t, alpha_0(t), ..., alpha_K(t)`` on a uniform grid."""
    ts = np.linspace(0.0, 1.0, n)
    alpha, _ = path(ts)
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"alpha_{k}" for k in range(alpha.shape[1])])
    for t, row in zip(ts, alpha):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    return buf.getvalue() if fh is None else None
