"""Composite objectives, local losses and synthetic problem generators.

Every machine ``j`` owns a smooth local loss ``L_j`` and all machines share a
convex regularizer ``h``.  The global objective is

    L(x) = (1/m) * sum_j L_j(x) + h(x).

All generators are pure functions of their seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp


class InvalidSpecError(ValueError):
    """Raised when a generator spec violates one of its invariants."""


def power_iteration(matvec, p, tol=1e-8, max_iter=5000, seed=0):
    """Largest eigenvalue of a symmetric positive semidefinite operator.

    Parameters
    ----------
    matvec : callable
        ``v -> A @ v``.
    p : int
        Operator dimension.
    tol : float
        Stop once the eigen-residual ``||A v - lam v||`` drops below
        ``tol * lam``.
    max_iter : int
        Iteration cap.
    seed : int
        Seed of the (deterministic) starting vector.

    Returns
    -------
    float
        Rayleigh quotient plus the final residual norm, 0.0 for the zero
        operator.  Adding the residual errs on the large side, which keeps
        Lipschitz bounds sound.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(p) + 1.0
    v /= np.linalg.norm(v)
    lam, res = 0.0, np.inf
    for _ in range(max_iter):
        w = matvec(v)
        lam = float(v @ w)
        res = float(np.linalg.norm(w - lam * v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        if res <= tol * abs(lam):
            break
        v = w / nw
    return lam + res


# --------------------------------------------------------------------------
# Local losses
# --------------------------------------------------------------------------

class LeastSquaresLoss:
    """``L(w) = (1/2n) * ||X w - y||^2`` over the ``n`` local samples."""

    convex = True

    def __init__(self, X, y):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.n, self.p = self.X.shape
        gram = self.X.T @ self.X / self.n
        self._gram = gram
        self.lipschitz_bound = power_iteration(lambda v: gram @ v, self.p)
        if self.n < self.p:
            self.strong_convexity_modulus = 0.0
        else:
            self.strong_convexity_modulus = max(
                float(scipy.linalg.eigvalsh(gram, subset_by_index=[0, 0])[0]), 0.0)

    def value(self, w):
        r = self.X @ w - self.y
        return 0.5 * float(r @ r) / self.n

    def gradient(self, w):
        return self.X.T @ (self.X @ w - self.y) / self.n

    def hessian(self):
        return self._gram.copy()


class SparsePCALoss:
    """``L(w) = -(1/n) * sum_i w^T B_i B_i^T w`` (a concave quadratic).

    The ``n`` sparse blocks ``B_i`` (each ``p x q``) are kept side by side in
    one CSR matrix ``C = [B_1, ..., B_n]`` so that ``sum_i B_i B_i^T = C C^T``.
    """

    convex = False
    strong_convexity_modulus = 0.0

    def __init__(self, C, n):
        self.C = sp.csr_matrix(C, dtype=np.float64)
        self.Ct = self.C.T.tocsr()
        self.n = int(n)
        self.p = self.C.shape[0]
        if self.C.nnz == 0:
            self.lipschitz_bound = 0.0
        else:
            self.lipschitz_bound = 2.0 * power_iteration(self._cov_matvec, self.p)

    def _cov_matvec(self, v):
        return self.C @ (self.Ct @ v) / self.n

    def value(self, w):
        u = self.Ct @ w
        return -float(u @ u) / self.n

    def gradient(self, w):
        return -2.0 * self._cov_matvec(w)

    def hessian(self):
        return -2.0 * (self.C @ self.Ct).toarray() / self.n


class QuadraticLoss:
    """``L(x) = 1/2 x^T A x - b^T x`` with symmetric ``A``."""

    def __init__(self, A, b):
        A = np.asarray(A, dtype=np.float64)
        self.A = 0.5 * (A + A.T)
        self.b = np.asarray(b, dtype=np.float64)
        self.p = self.b.shape[0]
        eigs = scipy.linalg.eigvalsh(self.A)
        self.lipschitz_bound = float(max(abs(eigs[0]), abs(eigs[-1])))
        self.strong_convexity_modulus = max(float(eigs[0]), 0.0)
        self.convex = bool(eigs[0] >= 0.0)

    def value(self, x):
        return 0.5 * float(x @ (self.A @ x)) - float(self.b @ x)

    def gradient(self, x):
        return self.A @ x - self.b

    def hessian(self):
        return self.A.copy()


class SmoothLossSet:
    """The ``m`` local losses of a distributed problem."""

    def __init__(self, losses):
        self.losses = list(losses)
        if not self.losses:
            raise InvalidSpecError("need at least one local loss")
        self.p = self.losses[0].p
        if any(l.p != self.p for l in self.losses):
            raise InvalidSpecError("local losses disagree on the dimension")

    def __len__(self):
        return len(self.losses)

    def __getitem__(self, j):
        return self.losses[j]

    def __iter__(self):
        return iter(self.losses)

    @property
    def m(self):
        return len(self.losses)

    @property
    def lipschitz_bound(self):
        """Common Lipschitz constant of every local gradient (max over j)."""
        return max(l.lipschitz_bound for l in self.losses)

    @property
    def strong_convexity_modulus(self):
        """Common strong-convexity modulus (min over j); 0 when unavailable."""
        return min(l.strong_convexity_modulus for l in self.losses)

    @property
    def convex(self):
        return all(l.convex for l in self.losses)

    def value(self, x):
        return sum(l.value(x) for l in self.losses) / self.m

    def gradients(self, x):
        """Stacked ``(m, p)`` array of the fresh local gradients at ``x``."""
        return np.stack([l.gradient(x) for l in self.losses])

    def gradient(self, x):
        return self.gradients(x).mean(axis=0)


# --------------------------------------------------------------------------
# Regularizer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Regularizer:
    """Convex regularizer ``h``.

    ``kind`` is one of ``"none"``, ``"l1"`` (``theta * ||x||_1``) or
    ``"l1ball"`` (``theta * ||x||_1`` plus the indicator of the Euclidean ball
    of the given radius).
    """

    kind: str = "none"
    theta: float = 0.0
    radius: float = 1.0

    # h is merely convex for every supported kind
    convex_modulus = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "l1", "l1ball"):
            raise InvalidSpecError(f"unknown regularizer kind {self.kind!r}")
        if self.theta < 0:
            raise InvalidSpecError("theta must be >= 0")
        if self.kind == "l1ball" and not self.radius > 0:
            raise InvalidSpecError("ball radius must be > 0")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def l1(cls, theta):
        return cls("l1", float(theta))

    @classmethod
    def l1_ball(cls, theta, radius=1.0):
        return cls("l1ball", float(theta), float(radius))

    def feasible(self, x):
        if self.kind != "l1ball":
            return True
        return np.linalg.norm(x) <= self.radius * (1.0 + 1e-12)

    def value(self, x):
        if self.kind == "none":
            return 0.0
        if not self.feasible(x):
            return math.inf
        return self.theta * float(np.abs(x).sum())


# --------------------------------------------------------------------------
# Problem bundle and objective
# --------------------------------------------------------------------------

@dataclass
class Problem:
    """Local losses, shared regularizer and optional generation metadata."""

    losses: SmoothLossSet
    regularizer: Regularizer
    ground_truth: Optional[np.ndarray] = None
    kind: str = "custom"
    spec: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.losses.m

    @property
    def p(self):
        return self.losses.p


def objective(losses, h, x):
    """``(1/m) sum_j L_j(x) + h(x)``; ``inf`` where ``h`` is infeasible."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (losses.p,):
        raise ValueError(f"expected a vector of dimension {losses.p}, got shape {x.shape}")
    hv = h.value(x)
    if math.isinf(hv):
        return math.inf
    return losses.value(x) + hv


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LassoGenSpec:
    m: int
    n: int
    p: int
    s: int
    theta: float = 0.01
    noise_std: float = 0.1
    seed: int = 0
    covariance_decay: float = 0.5

    def validate(self):
        for name in ("m", "n", "p"):
            if getattr(self, name) <= 0:
                raise InvalidSpecError(f"{name} must be positive, got {getattr(self, name)}")
        if self.s < 0 or self.s > self.p:
            raise InvalidSpecError(f"sparsity s={self.s} must satisfy 0 <= s <= p={self.p}")
        if self.theta < 0 or self.noise_std < 0:
            raise InvalidSpecError("theta and noise_std must be >= 0")
        if not 0 <= self.covariance_decay < 1:
            raise InvalidSpecError("covariance_decay must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SpcaGenSpec:
    m: int
    n: int
    p: int
    q: int
    nnz: int
    theta: float = 0.1
    seed: int = 0

    def validate(self):
        for name in ("m", "n", "p", "q"):
            if getattr(self, name) <= 0:
                raise InvalidSpecError(f"{name} must be positive, got {getattr(self, name)}")
        if self.nnz < 0 or self.nnz > self.p * self.q:
            raise InvalidSpecError(f"nnz={self.nnz} must lie in [0, p*q]")
        if self.theta < 0:
            raise InvalidSpecError("theta must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class QuadGenSpec:
    m: int
    p: int
    sigma2: float = 1.0
    seed: int = 0
    spread: float = 9.0
    theta: float = 0.0

    def validate(self):
        if self.m <= 0 or self.p <= 0:
            raise InvalidSpecError("m and p must be positive")
        if not self.sigma2 > 0:
            raise InvalidSpecError("sigma2 must be > 0")
        if self.spread < 0 or self.theta < 0:
            raise InvalidSpecError("spread and theta must be >= 0")

    def to_dict(self):
        return asdict(self)


def ar1_covariance(p, decay):
    idx = np.arange(p)
    return decay ** np.abs(idx[:, None] - idx[None, :])


def lasso_data(spec):
    """Raw LASSO arrays ``(X, y, w_star)``, ``X`` of shape ``(m, n, p)``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    chol = np.linalg.cholesky(ar1_covariance(spec.p, spec.covariance_decay))
    w_star = np.zeros(spec.p)
    w_star[:spec.s] = rng.uniform(0.0, 1.0, size=spec.s)
    Z = rng.standard_normal((spec.m, spec.n, spec.p))
    X = Z @ chol.T
    noise = spec.noise_std * rng.standard_normal((spec.m, spec.n))
    y = X @ w_star + noise
    return X, y, w_star


def lasso_problem(X, y, theta, w_star=None, spec=None):
    losses = SmoothLossSet(LeastSquaresLoss(X[j], y[j]) for j in range(X.shape[0]))
    return Problem(losses, Regularizer.l1(theta), w_star, "lasso",
                   spec.to_dict() if spec is not None else {})


def generate_lasso(spec):
    """Correlated-Gaussian LASSO instance split over ``m`` machines.

    Rows ``x_ji ~ N(0, Sigma)`` with ``Sigma_rt = decay^|r-t|``, responses
    ``y_ji = x_ji^T w* + noise`` and ``w*`` supported on its first ``s``
    coordinates with ``U[0, 1]`` entries.
    """
    X, y, w_star = lasso_data(spec)
    return lasso_problem(X, y, spec.theta, w_star, spec)


def spca_blocks(spec):
    """Per-machine sparse matrices ``C_j = [B_j1, ..., B_jn]`` (``p x nq``)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    blocks = []
    for _ in range(spec.m):
        rows, cols, vals = [], [], []
        for i in range(spec.n):
            flat = rng.choice(spec.p * spec.q, size=spec.nnz, replace=False)
            r, c = np.divmod(np.sort(flat), spec.q)
            rows.append(r)
            cols.append(c + i * spec.q)
            vals.append(rng.standard_normal(spec.nnz))
        C = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(spec.p, spec.n * spec.q))
        blocks.append(C)
    return blocks


def spca_problem(blocks, n, theta, spec=None):
    losses = SmoothLossSet(SparsePCALoss(C, n) for C in blocks)
    return Problem(losses, Regularizer.l1_ball(theta, 1.0), None, "spca",
                   spec.to_dict() if spec is not None else {})


def generate_spca(spec):
    """Sparse PCA instance: ``-(1/mn) sum w^T B B^T w + theta ||w||_1``, ``||w|| <= 1``."""
    return spca_problem(spca_blocks(spec), spec.n, spec.theta, spec)


def quadratic_data(spec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    As, bs = [], []
    for _ in range(spec.m):
        if spec.spread == 0:
            A = spec.sigma2 * np.eye(spec.p)
        else:
            Q, _ = np.linalg.qr(rng.standard_normal((spec.p, spec.p)))
            eigs = spec.sigma2 + spec.spread * spec.sigma2 * rng.uniform(size=spec.p)
            eigs[0] = spec.sigma2
            A = (Q * eigs) @ Q.T
            A = 0.5 * (A + A.T)
        As.append(A)
        bs.append(rng.standard_normal(spec.p))
    return np.stack(As), np.stack(bs)


def generate_strongly_convex_quadratic(m, p, sigma2, seed, spread=9.0, theta=0.0):
    """``m`` quadratics ``1/2 x^T A_j x - b_j^T x`` with ``lambda_min(A_j) = sigma2``.

    Eigenvalues of each ``A_j`` lie in ``[sigma2, sigma2 * (1 + spread)]``;
    ``spread=0`` gives ``A_j = sigma2 * I``.  ``theta > 0`` attaches an l1
    regularizer to the returned :class:`Problem`.
    """
    spec = QuadGenSpec(m, p, sigma2, seed, spread, theta)
    As, bs = quadratic_data(spec)
    return quadratic_problem(As, bs, theta, spec)


def quadratic_problem(As, bs, theta=0.0, spec=None):
    losses = SmoothLossSet(QuadraticLoss(A, b) for A, b in zip(As, bs))
    h = Regularizer.l1(theta) if theta > 0 else Regularizer.none()
    return Problem(losses, h, None, "quad", spec.to_dict() if spec is not None else {})


def quadratic_minimizer(losses: SmoothLossSet) -> np.ndarray:
    """Minimizer of ``(1/m) sum_j L_j`` for quadratic losses (direct solve)."""
    A = sum(l.hessian() for l in losses) / losses.m
    b = sum(l.b for l in losses) / losses.m
    return np.linalg.solve(A, b)


def reference_lasso_spec(seed=0) -> LassoGenSpec:
    """LASSO configuration used in the large-scale comparison (m=20, n=500, p=1000)."""
    return LassoGenSpec(m=20, n=500, p=1000, s=10, theta=0.01, noise_std=0.1, seed=seed)


def reference_spca_spec(seed=0) -> SpcaGenSpec:
    return SpcaGenSpec(m=3, n=20, p=500, q=1000, nnz=3000, theta=0.1, seed=seed)

