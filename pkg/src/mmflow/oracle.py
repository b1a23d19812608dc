"""Ground-truth conditional-expectation fields.

All field objects in the package share one calling convention::

    g = fields(alpha, x)    # alpha (n, K+1), x (n, d)  ->  g (n, K+1, d)

with ``g[:, k]`` approximating ``E[x_k | x(alpha) = x]``. The closed forms
here cover independent Gaussian couplings (joint-Gaussian conditioning) and
affine Monge couplings (inverse of the averaged map). The kernel estimator
works for any coupling given enough samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .couplings import AffineMap, Gaussian, IndependentCoupling, MongeCoupling, interpolant

__all__ = [
    "GaussianProblem",
    "MongeProblem",
    "SingularMapError",
    "UnreliableEstimateError",
    "gaussian_oracle_g",
    "monge_oracle_g",
    "kernel_conditional_expectation",
]


class SingularMapError(ValueError):
    """The averaged Monge map ``sum_k alpha_k T_k`` is not invertible at this alpha."""


class UnreliableEstimateError(RuntimeError):
    """Too few samples carry kernel weight near the query point."""


def _batch(alpha, x, K, d):
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    alpha = np.broadcast_to(alpha, (x.shape[0], alpha.shape[-1]))
    if alpha.shape[1] != K + 1 or x.shape[1] != d:
        raise ValueError(f"expected alpha with {K + 1} weights and x with {d} dims")
    return alpha, x, single


@dataclass(frozen=True)
class GaussianProblem:
    """Independent Gaussian marginals; index 0 must be ``N(0, Id)``."""

    means: tuple
    covs: tuple

    def __post_init__(self):
        means = tuple(np.atleast_1d(np.asarray(m, dtype=float)) for m in self.means)
        covs = tuple(np.atleast_2d(np.asarray(c, dtype=float)) for c in self.covs)
        if len(means) != len(covs) or len(means) < 2:
            raise ValueError("need matching means/covs for at least two marginals")
        d = means[0].size
        if not np.allclose(covs[0], np.eye(d)) or not np.allclose(means[0], 0.0):
            raise ValueError("marginal 0 must be the standard normal")
        for c in covs:
            Gaussian(np.zeros(d), c)  # validates SPD
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    @classmethod
    def from_marginals(cls, marginals) -> GaussianProblem:
        """Build from the non-base marginals (Gaussian specs)."""
        d = marginals[0].dim
        return cls((np.zeros(d),) + tuple(m.mean for m in marginals), (np.eye(d),) + tuple(m.cov for m in marginals))

    @property
    def K(self):
        return len(self.means) - 1

    @property
    def dim(self):
        return self.means[0].size

    def coupling(self) -> IndependentCoupling:
        return IndependentCoupling(tuple(Gaussian(m, c) for m, c in zip(self.means[1:], self.covs[1:])))

    def moments(self, alpha):
        """Mean ``(n, d)`` and covariance ``(n, d, d)`` of ``x(alpha)``."""
        alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
        mu = alpha @ np.stack(self.means)
        cov = np.einsum("nk,kij->nij", alpha**2, np.stack(self.covs))
        return mu, cov

    def __call__(self, alpha, x):
        alpha, x, single = _batch(alpha, x, self.K, self.dim)
        mu, cov = self.moments(alpha)
        z = np.linalg.solve(cov, (x - mu)[..., None])[..., 0]
        g = np.stack(self.means)[None] + alpha[..., None] * np.einsum("kij,nj->nki", np.stack(self.covs), z)
        return g[0] if single else g

    def score(self, alpha, x):
        """Analytic ``grad log rho(alpha, x)``."""
        alpha, x, single = _batch(alpha, x, self.K, self.dim)
        mu, cov = self.moments(alpha)
        s = -np.linalg.solve(cov, (x - mu)[..., None])[..., 0]
        return s[0] if single else s

    def density(self, alpha, x):
        alpha, x, single = _batch(alpha, x, self.K, self.dim)
        mu, cov = self.moments(alpha)
        r = x - mu
        q = np.einsum("ni,ni->n", r, np.linalg.solve(cov, r[..., None])[..., 0])
        _, logdet = np.linalg.slogdet(cov)
        p = np.exp(-0.5 * q - 0.5 * logdet - 0.5 * self.dim * np.log(2 * np.pi))
        return p[0] if single else p

    def w2_squared(self, i: int, j: int) -> float:
        """Squared Wasserstein-2 distance between marginals ``i`` and ``j``."""
        from scipy.linalg import sqrtm

        m0, m1 = self.means[i], self.means[j]
        S0, S1 = self.covs[i], self.covs[j]
        r = np.real(sqrtm(S0))
        cross = np.real(sqrtm(r @ S1 @ r))
        return float(np.sum((m1 - m0) ** 2) + np.trace(S0 + S1 - 2.0 * cross))


def gaussian_oracle_g(problem: GaussianProblem, alpha, x):
    return problem(alpha, x)


@dataclass(frozen=True)
class MongeProblem:
    """Monge coupling ``x_k = T_k(x_0)`` with affine ``T_k``; ``T_0`` is the identity."""

    maps: tuple

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ValueError("need at least one map")
        object.__setattr__(self, "maps", maps)

    @classmethod
    def from_coupling(cls, coupling: MongeCoupling) -> MongeProblem:
        return cls(coupling.maps)

    @property
    def K(self):
        return len(self.maps)

    @property
    def dim(self):
        return self.maps[0].dim

    def all_maps(self):
        return (AffineMap.identity(self.dim),) + self.maps

    def coupling(self) -> MongeCoupling:
        return MongeCoupling(self.maps)

    def averaged_map(self, alpha):
        alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
        maps = self.all_maps()
        A = np.einsum("nk,kij->nij", alpha, np.stack([T.A for T in maps]))
        c = alpha @ np.stack([T.c for T in maps])
        return A, c

    def inverse(self, alpha, x):
        """``R(alpha, x)``, the preimage of ``x`` under the averaged map."""
        alpha, x, single = _batch(alpha, x, self.K, self.dim)
        # batches usually repeat a handful of alphas; factor each one once
        uniq, idx = np.unique(alpha, axis=0, return_inverse=True)
        A, c = self.averaged_map(uniq)
        sv = np.linalg.svd(A, compute_uv=False)
        if np.any(sv[:, -1] <= 1e-12 * np.maximum(sv[:, 0], 1.0)):
            raise SingularMapError("averaged map sum_k alpha_k A_k is singular")
        Ainv = np.linalg.inv(A)
        idx = idx.ravel()
        R = np.einsum("nij,nj->ni", Ainv[idx], x - c[idx])
        return R[0] if single else R

    def __call__(self, alpha, x):
        R = self.inverse(alpha, x)
        g = np.stack([T(R) for T in self.all_maps()], axis=-2)
        return g

    def trajectory(self, path, t, x0):
        """Closed-form flow ``X_t = sum_k alpha_k(t) T_k(x0)``."""
        alpha, _ = path(t)
        images = np.stack([T(x0) for T in self.all_maps()], axis=-2)
        return interpolant(alpha, images)


def monge_oracle_g(maps, alpha, x):
    return MongeProblem(tuple(maps))(alpha, x)


def default_bandwidth(xa) -> float:
    return 0.1 * float(np.mean(np.std(xa, axis=0)))


def kernel_conditional_expectation(samples, k: int, alpha, x, bandwidth: float | None = None,
                                   min_ess: float = 10.0, chunk: int = 256):
    """Nadaraya-Watson estimate of ``E[x_k | x(alpha) = x]``.

    Parameters
    ----------
    samples : ndarray, shape (n, K+1, d)
        Joint draws from the coupling.
    k : int
        Which marginal to regress.
    alpha : array_like, shape (K+1,)
    x : ndarray, shape (d,) or (m, d)
        Query points.
    bandwidth : float, optional
        Gaussian kernel width; defaults to a tenth of the spread of ``x(alpha)``.
    min_ess : float
        Minimum allowed ``sum(w) / max(w)`` per query.

    Raises
    ------
    UnreliableEstimateError
        If any query point has effective sample size below ``min_ess``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 1000:
        raise ValueError("kernel estimate needs at least 1000 samples")
    xa = interpolant(np.asarray(alpha, dtype=float), samples)
    if bandwidth is None:
        bandwidth = default_bandwidth(xa)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    q = np.atleast_2d(x)
    target = samples[:, k]
    out = np.empty((q.shape[0], samples.shape[2]))
    for s in range(0, q.shape[0], chunk):
        qs = q[s:s + chunk]
        d2 = np.sum((qs[:, None, :] - xa[None]) ** 2, axis=-1)
        logw = -d2 / (2.0 * bandwidth**2)
        w = np.exp(logw - logw.max(axis=1, keepdims=True))
        ess = w.sum(axis=1)
        if np.any(ess < min_ess):
            raise UnreliableEstimateError(f"effective sample size {ess.min():.1f} below {min_ess}")
        out[s:s + chunk] = (w @ target) / ess[:, None]
    return out[0] if single else out


# -- self-checks --------------------------------------------------------------


def edge_grid(i, j, K, n):
    """``n`` equispaced points on the edge from ``e_i`` to ``e_j``."""
    s = np.linspace(0.0, 1.0, n)
    alpha = np.zeros((n, K + 1))
    alpha[:, i] = 1.0 - s
    alpha[:, j] = s
    return alpha


def continuity_residual(problem: GaussianProblem, alphas, xs, h: float = 1e-5):
    """Max over the grid and over ``k`` of ``|d rho/d alpha_k + d/dx (g_k rho)|`` for ``d = 1``.

    Both derivatives are central differences of the closed forms; ``alpha`` is
    perturbed one coordinate at a time, off the simplex, where the Gaussian
    formulas still apply.
    """
    if problem.dim != 1:
        raise ValueError("continuity check is implemented for d = 1")
    alphas = np.atleast_2d(alphas)
    xs = np.asarray(xs, dtype=float)
    A = np.repeat(alphas, len(xs), axis=0)
    X = np.tile(xs, len(alphas))[:, None]
    worst = 0.0
    for k in range(problem.K + 1):
        dA = np.zeros(problem.K + 1)
        dA[k] = h
        drho = (problem.density(A + dA, X) - problem.density(A - dA, X)) / (2 * h)
        up = problem(A, X + h)[:, k, 0] * problem.density(A, X + h)
        dn = problem(A, X - h)[:, k, 0] * problem.density(A, X - h)
        worst = max(worst, float(np.max(np.abs(drho + (up - dn) / (2 * h)))))
    return worst


def _alpha_grid(K, n, rng):
    pts = [np.eye(K + 1)[k] for k in range(K + 1)]
    pts.append(np.full(K + 1, 1.0 / (K + 1)))
    e = rng.standard_exponential((n, K + 1))
    pts.extend(e / e.sum(axis=1, keepdims=True))
    for i in range(K + 1):
        for j in range(i + 1, K + 1):
            pts.extend(edge_grid(i, j, K, 11))
    return np.array(pts)


def kernel_deviation(problem, alphas, n_samples=100_000, n_query=41, seed=0, bandwidth=None):
    """Relative deviation of the kernel estimate from the closed form, per alpha.

    Queries lie within two standard deviations of ``x(alpha)``; reported as
    ``max_alpha sqrt(sum |kernel - exact|^2 / sum |exact|^2)``, the sums running
    over queries and all ``k`` together (a single ``g_k`` can vanish identically).
    """
    rng = np.random.default_rng(seed)
    samples = problem.coupling().sample(n_samples, rng)
    worst = 0.0
    for a in np.atleast_2d(alphas):
        xa = interpolant(a, samples)
        mu, sd = xa.mean(axis=0), xa.std(axis=0)
        if problem.dim == 1:
            q = (mu + sd * np.linspace(-2, 2, n_query))[:, None]
        else:
            q = mu + sd * rng.uniform(-1.5, 1.5, (n_query, problem.dim))
        exact = problem(np.broadcast_to(a, (len(q), len(a))), q)
        est = np.stack([kernel_conditional_expectation(samples, k, a, q, bandwidth)
                        for k in range(problem.K + 1)], axis=1)
        err = np.sqrt(np.sum((est - exact) ** 2) / max(np.sum(exact**2), 1e-300))
        worst = max(worst, float(err))
    return worst


def check_gaussian(problem: GaussianProblem, seed: int = 0, kernel_samples: int = 100_000):
    """Run the closed-form consistency checks; returns ``{name: {value, threshold, passed}}``."""
    rng = np.random.default_rng(seed)
    alphas = _alpha_grid(problem.K, 20, rng)
    alphas = alphas[alphas[:, 0] > 1e-3]
    x = rng.standard_normal((alphas.shape[0], problem.dim)) * 2.0
    s_model = -problem(alphas, x)[:, 0] / alphas[:, :1]
    s_exact = problem.score(alphas, x)
    report = {"score_identity_residual": (float(np.max(np.abs(s_model - s_exact))), 1e-10)}
    vert = []
    for i in range(problem.K + 1):
        g = problem(np.eye(problem.K + 1)[i], x)
        vert.append(np.max(np.abs(g[:, i] - x)))
        others = [k for k in range(problem.K + 1) if k != i]
        vert.append(np.max(np.abs(g[:, others] - np.stack(problem.means)[others][None])))
    report["vertex_identity_residual"] = (float(max(vert)), 1e-12)
    if problem.dim == 1:
        report["continuity_residual"] = (
            continuity_residual(problem, edge_grid(0, problem.K, problem.K, 50), np.linspace(-3, 5, 50)), 1e-4)
    probe = np.array([a for a in _alpha_grid(problem.K, 3, np.random.default_rng(seed + 1))])
    report["kernel_vs_closed_form"] = (kernel_deviation(problem, probe[problem.K + 1:], kernel_samples, seed=seed),
                                       0.03)
    return {k: {"value": v, "threshold": t, "passed": bool(v <= t)} for k, (v, t) in report.items()}


def check_monge(problem: MongeProblem, seed: int = 0, kernel_samples: int = 100_000):
    """Invertibility, fixed-point and vertex checks for an affine Monge problem."""
    rng = np.random.default_rng(seed)
    alphas = _alpha_grid(problem.K, 200, rng)
    out = {}
    A, _ = problem.averaged_map(alphas)
    sv = np.linalg.svd(A, compute_uv=False)
    # same criterion as MongeProblem.inverse
    ratio = sv[:, -1] / np.maximum(sv[:, 0], 1.0)
    bad = ratio <= 1e-12
    # a determinant sign change along an edge means a singular map the sampled grid can miss
    crossings = 0
    for i in range(problem.K + 1):
        for j in range(i + 1, problem.K + 1):
            Aseg, _ = problem.averaged_map(edge_grid(i, j, problem.K, 2001))
            sign = np.sign(np.linalg.det(Aseg))
            crossings += int(np.any(sign[:-1] * sign[1:] <= 0))
    out["invertible_everywhere"] = {"value": float(ratio.min()), "threshold": 1e-12,
                                    "passed": bool(not bad.any() and crossings == 0),
                                    "violations": int(bad.sum()) + crossings}
    good = alphas[~bad]
    x = rng.standard_normal((len(good), problem.dim)) * 2.0
    if len(good):
        R = problem.inverse(good, x)
        images = np.stack([T(R) for T in problem.all_maps()], axis=-2)
        resid = float(np.max(np.abs(interpolant(good, images) - x)))
    else:
        resid = float("nan")
    out["fixed_point_residual"] = {"value": resid, "threshold": 1e-10, "passed": bool(resid <= 1e-10)}
    vert = 0.0
    maps = problem.all_maps()
    for i in range(problem.K + 1):
        g = problem(np.eye(problem.K + 1)[i], x)
        for k in range(problem.K + 1):
            vert = max(vert, float(np.max(np.abs(g[:, k] - maps[k](maps[i].inverse(x))))))
    out["vertex_maps_residual"] = {"value": vert, "threshold": 1e-10, "passed": bool(vert <= 1e-10)}
    probe = good[problem.K + 1:problem.K + 4]
    dev = kernel_deviation(problem, probe, kernel_samples, seed=seed) if len(probe) else float("nan")
    out["kernel_vs_closed_form"] = {"value": dev, "threshold": 0.03, "passed": bool(dev <= 0.03)}
    return out
