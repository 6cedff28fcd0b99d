"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved by deterministic pairwise coordinate optimization (SMO):
at each step the maximal-KKT-violating pair is selected (ties to the lowest
index) and optimized exactly along the equality constraint.  Training is
bit-reproducible for identical inputs.  Also hosts feature standardization
and seeded k-fold splitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyMatrixError,
    InvalidHyperparamsError,
    TooFewItemsError,
)

__all__ = [
    "SvrHyperparams",
    "Standardization",
    "SvrModel",
    "FoldAssignment",
    "standardize_fit",
    "rbf_kernel",
    "svr_train",
    "svr_predict",
    "kfold_split",
    "svr_grid_search",
    "smo_solve",
]


@dataclass(frozen=True)
class SvrHyperparams:
    """SVR knobs.  gamma="auto" resolves to 1/(n_features * Var(X)) on the
    standardized training matrix.  max_passes caps the optimizer at
    max_passes * 2n working-pair iterations."""

    c: float = 10.0
    epsilon: float = 0.01
    gamma: float | str = "auto"
    tolerance: float = 1e-4
    max_passes: int = 100

    def validate(self) -> None:
        if not self.c > 0.0:
            raise InvalidHyperparamsError(f"C must be > 0, got {self.c}")
        if self.epsilon < 0.0:
            raise InvalidHyperparamsError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.gamma != "auto" and not (isinstance(self.gamma, (int, float)) and self.gamma > 0):
            raise InvalidHyperparamsError(f"gamma must be 'auto' or > 0, got {self.gamma!r}")
        if self.tolerance <= 0.0:
            raise InvalidHyperparamsError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_passes < 1:
            raise InvalidHyperparamsError(f"max_passes must be >= 1, got {self.max_passes}")


@dataclass(frozen=True)
class Standardization:
    """Per-feature mean/std from a training matrix (population convention)."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != len(self.mean):
            raise DimensionMismatchError(
                f"expected {len(self.mean)} features, got {x.shape[1]}"
            )
        return (x - self.mean) / self.std


def standardize_fit(x: np.ndarray) -> Standardization:
    """Column means and population standard deviations; zero std becomes 1 so
    constant columns pass through as 0."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.size == 0 or x.shape[0] < 1:
        raise EmptyMatrixError("cannot standardize an empty matrix")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return Standardization(mean=mean, std=std)


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * |u - v|^2) for every row pair."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class SvrModel:
    """Trained SVR: support vectors live in standardized feature space."""

    support_vectors: np.ndarray
    coefficients: np.ndarray  # alpha_i - alpha_i*, one per support vector
    bias: float
    gamma: float
    scaler: Standardization
    c: float
    epsilon: float
    dual_objective: float
    iterations: int
    kkt_gap: float
    objective_history: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: dict[str, int]
    seed: int

    def fold_of(self, item_id: str) -> int:
        return self.assignment[item_id]

    def items_in(self, fold: int) -> list[str]:
        return [i for i, f in self.assignment.items() if f == fold]


# ---------------------------------------------------------------------------
# SMO optimizer on the 2n-variable dual

def _smo_loop_py(kernel, y, c, epsilon, tolerance, max_iterations, history):
    """Working-pair iterations; `history` is a preallocated objective buffer
    (len 0 disables recording).  Kept numba-compatible: plain loops only."""
    n = len(y)
    two_n = 2 * n
    record = len(history) > 0
    lam = np.zeros(two_n)
    grad = np.empty(two_n)
    for m in range(n):
        grad[m] = epsilon - y[m]
        grad[n + m] = epsilon + y[m]
    objective = 0.0  # running value of 1/2 lam'Q lam + p'lam (starts at 0)

    iterations = 0
    gap = np.inf
    while iterations < max_iterations:
        best_up = -np.inf
        best_down = np.inf
        i = -1
        j = -1
        for t in range(two_n):
            if t < n:
                val = -grad[t]
                can_up = lam[t] < c
                can_down = lam[t] > 0.0
            else:
                val = grad[t]
                can_up = lam[t] > 0.0
                can_down = lam[t] < c
            if can_up and val > best_up:
                best_up = val
                i = t
            if can_down and val < best_down:
                best_down = val
                j = t
        if i < 0 or j < 0:
            gap = 0.0
            break
        gap = best_up - best_down
        if gap <= tolerance:
            break

        ki = i % n
        kj = j % n
        eta = kernel[ki, ki] + kernel[kj, kj] - 2.0 * kernel[ki, kj]
        sign_i = 1.0 if i < n else -1.0
        sign_j = 1.0 if j < n else -1.0
        # move lam_i by sign_i*step and lam_j by -sign_j*step within the box
        t_max_i = c - lam[i] if sign_i > 0 else lam[i]
        t_max_j = lam[j] if sign_j > 0 else c - lam[j]
        step = t_max_i if t_max_i < t_max_j else t_max_j
        if eta > 1e-12 and gap / eta < step:
            step = gap / eta
        if step <= 0.0:
            break  # numerically stuck: no further progress possible
        new_i = lam[i] + sign_i * step
        new_j = lam[j] - sign_j * step
        lam[i] = min(max(new_i, 0.0), c)
        lam[j] = min(max(new_j, 0.0), c)
        # exact two-variable objective change along the feasible direction
        objective += -gap * step + 0.5 * eta * step * step
        for m in range(n):
            d = step * (kernel[ki, m] - kernel[kj, m])
            grad[m] += d
            grad[n + m] -= d
        if record:
            history[iterations] = objective
        iterations += 1

    return lam, grad, iterations, gap, objective


try:  # the jitted loop runs the identical arithmetic, just compiled
    from numba import njit

    _smo_loop = njit(cache=True, fastmath=False)(_smo_loop_py)
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _smo_loop = _smo_loop_py


def smo_solve(
    kernel: np.ndarray,
    y: np.ndarray,
    c: float,
    epsilon: float,
    tolerance: float,
    max_iterations: int,
    record_objective: bool = False,
):
    """Minimize 1/2 lam'Q lam + p'lam over the box [0, C]^{2n} with the usual
    alpha/alpha-star equality coupling.

    The maximal-KKT-violation pair is optimized at each step (ties to the
    lowest index), until the violation gap drops to `tolerance`.  Returns
    (beta, bias, iterations, kkt_gap, objective, history) with beta the
    alpha - alpha* vector and `objective` the final dual value in
    minimization form; history holds it after every accepted step when
    requested.
    """
    n = len(y)
    kernel = np.ascontiguousarray(kernel, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    buffer = np.empty(max_iterations if record_objective else 0)
    lam, grad, iterations, gap, objective = _smo_loop(
        kernel, y, float(c), float(epsilon), float(tolerance), int(max_iterations), buffer
    )
    history = buffer[:iterations] if record_objective else None

    sign = np.concatenate([np.ones(n), -np.ones(n)])
    vals = -sign * grad
    free = (lam > 0.0) & (lam < c)
    if free.any():
        bias = float(np.mean(vals[free]))
    else:
        up_vals = np.where(np.where(sign > 0, lam < c, lam > 0.0), vals, -np.inf)
        down_vals = np.where(np.where(sign > 0, lam > 0.0, lam < c), vals, np.inf)
        bias = float((np.max(up_vals) + np.min(down_vals)) / 2.0)

    beta = lam[:n] - lam[n:]
    # recompute the final objective exactly; the loop tracks it incrementally
    p_lin = np.concatenate([epsilon - y, epsilon + y])
    exact = float(0.5 * beta @ (kernel @ beta) + p_lin @ lam)
    return beta, bias, iterations, gap, exact, history


def _resolve_gamma(gamma: float | str, x_std: np.ndarray) -> float:
    if gamma == "auto":
        var = float(x_std.var())
        if var <= 0.0:
            var = 1.0
        return 1.0 / (x_std.shape[1] * var)
    return float(gamma)


def svr_train(
    x: np.ndarray,
    y: np.ndarray,
    hyper: SvrHyperparams = SvrHyperparams(),
    record_objective: bool = False,
) -> SvrModel:
    """Train an RBF epsilon-SVR.  Features are standardized internally;
    targets are used unscaled."""
    hyper.validate()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != len(y):
        raise DimensionMismatchError(f"{x.shape[0]} rows vs {len(y)} targets")
    if len(y) < 1:
        raise EmptyMatrixError("need at least one training sample")

    scaler = standardize_fit(x)
    xs = scaler.apply(x)
    gamma = _resolve_gamma(hyper.gamma, xs)
    kernel = rbf_kernel(xs, xs, gamma)

    max_iterations = hyper.max_passes * 2 * len(y)
    beta, bias, iterations, gap, obj, history = smo_solve(
        kernel, y, hyper.c, hyper.epsilon, hyper.tolerance, max_iterations,
        record_objective=record_objective,
    )

    sv_mask = beta != 0.0
    return SvrModel(
        support_vectors=xs[sv_mask],
        coefficients=beta[sv_mask],
        bias=bias,
        gamma=gamma,
        scaler=scaler,
        c=hyper.c,
        epsilon=hyper.epsilon,
        dual_objective=-obj,  # report in maximization form
        iterations=iterations,
        kkt_gap=gap,
        objective_history=np.asarray(history) if record_objective else None,
    )


def svr_predict(model: SvrModel, x: np.ndarray) -> np.ndarray | float:
    """Sum_i coef_i * k(sv_i, x) + bias, after standardizing x."""
    single = np.asarray(x).ndim == 1
    xs = model.scaler.apply(x)
    if len(model.coefficients) == 0:
        pred = np.full(xs.shape[0], model.bias)
    else:
        pred = rbf_kernel(xs, model.support_vectors, model.gamma) @ model.coefficients + model.bias
    return float(pred[0]) if single else pred


def kfold_split(item_ids: list[str], k: int, seed: int) -> FoldAssignment:
    """Seeded shuffle then round-robin fold assignment; sizes differ by <= 1."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(item_ids) < k:
        raise TooFewItemsError(f"{len(item_ids)} items cannot fill {k} folds")
    if len(set(item_ids)) != len(item_ids):
        raise ValueError("item ids must be unique")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(item_ids))
    assignment = {item_ids[int(idx)]: pos % k for pos, idx in enumerate(order)}
    return FoldAssignment(k=k, assignment=assignment, seed=seed)


def svr_grid_search(
    x: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    base: SvrHyperparams = SvrHyperparams(),
) -> SvrHyperparams:
    """Pick (C, epsilon, gamma) from a 3x3x3 log grid by inner 3-fold CV MSE.

    Deterministic: ties keep the earliest grid entry.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    ids = [str(i) for i in range(len(y))]
    folds = kfold_split(ids, 3, seed)
    fold_idx = np.array([folds.assignment[i] for i in ids])

    gamma_mid = _resolve_gamma("auto", standardize_fit(x).apply(x))
    best = None
    best_mse = np.inf
    for c in (1.0, 10.0, 100.0):
        for eps in (0.001, 0.01, 0.1):
            for gam in (gamma_mid * 0.1, gamma_mid, gamma_mid * 10.0):
                hyper = SvrHyperparams(
                    c=c, epsilon=eps, gamma=gam,
                    tolerance=base.tolerance, max_passes=base.max_passes,
                )
                errs = []
                for fold in range(3):
                    train = fold_idx != fold
                    test = ~train
                    model = svr_train(x[train], y[train], hyper)
                    pred = np.atleast_1d(svr_predict(model, x[test]))
                    errs.append(np.mean((pred - y[test]) ** 2))
                mse = float(np.mean(errs))
                if mse < best_mse - 1e-15:
                    best_mse = mse
                    best = hyper
    return best
