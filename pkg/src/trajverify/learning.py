"""Learning an affine surrogate of the prediction-error surface from
samples, with probabilistic guarantees.

The surrogate dlt(x) = x . alpha + beta is fit by minimax (Chebyshev)
regression: minimize the largest absolute residual lambda over all sampled
(input, error) pairs. With enough samples for the requested error rate
epsilon and significance eta, the band dlt(x) +/- lambda* covers the true
error surface except on a set of probability at most epsilon, with
confidence 1 - eta.

For high-dimensional scenes a focused two-phase procedure first fits an
ordinary least-squares model on t1 samples to rank coordinates, then runs
the minimax fit on t2 fresh samples over only the top-ranked coordinates,
which shrinks the sample requirement from one driven by the full dimension
to one driven by the number of free coefficients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import linprog
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import Scene
from .errors import BudgetError, InvalidArgumentError, NumericError
from .predictors import Predictor
from .sampling import (
    DeltaKind,
    PerturbationSpec,
    PureMode,
    center_reference_set,
    collect_samples,
    max_sample,
)
from .seeding import derive_seed

# seed-path branches for the two sampling phases and the reference set
_PHASE1_STREAM = 11
_PHASE2_STREAM = 12
_REFSET_STREAM = 13


def required_samples(epsilon: float, eta: float, t_past: int,
                     n_agents_total: int) -> int:
    """Smallest sample count K with K >= (2/epsilon) * (ln(1/eta)
    + 2 * t_past * n_agents_total + 1)."""
    _check_rate(epsilon, "epsilon")
    _check_rate(eta, "eta")
    if t_past < 1 or n_agents_total < 1:
        raise InvalidArgumentError("t_past and n_agents_total must be >= 1")
    bound = (2.0 / epsilon) * (math.log(1.0 / eta) + 2.0 * t_past * n_agents_total + 1.0)
    return int(math.ceil(bound))


def max_key_features(epsilon: float, eta: float, t2: int) -> int:
    """Largest coefficient count supportable by t2 minimax samples:
    floor(epsilon * t2 / 2 - ln(1/eta) - 1)."""
    _check_rate(epsilon, "epsilon")
    _check_rate(eta, "eta")
    if t2 < 1:
        raise InvalidArgumentError("t2 must be >= 1")
    value = math.floor(epsilon * t2 / 2.0 - math.log(1.0 / eta) - 1.0)
    if value < 1:
        raise BudgetError(
            f"t2 = {t2} supports no free coefficients at epsilon = {epsilon}, "
            f"eta = {eta}; increase t2 to at least "
            f"{int(math.ceil(2.0 * (math.log(1.0 / eta) + 2.0) / epsilon))}"
        )
    return value


def _check_rate(value: float, name: str):
    if not (0.0 < value < 1.0):
        raise InvalidArgumentError(f"{name} must lie in (0, 1), got {value}")


@dataclass(frozen=True)
class PacBudget:
    """Sample counts and rates for the two-phase fit. k_features must fit
    within what t2 supports."""

    epsilon: float
    eta: float
    t1: int
    t2: int
    k_features: int

    def __post_init__(self):
        _check_rate(self.epsilon, "epsilon")
        _check_rate(self.eta, "eta")
        if self.t1 < 1 or self.t2 < 1:
            raise InvalidArgumentError("t1 and t2 must be >= 1")
        if self.k_features < 1:
            raise InvalidArgumentError("k_features must be >= 1")
        cap = max_key_features(self.epsilon, self.eta, self.t2)
        if self.k_features > cap:
            raise BudgetError(
                f"k_features = {self.k_features} exceeds the budget cap {cap} "
                f"for t2 = {self.t2}, epsilon = {self.epsilon}, eta = {self.eta}"
            )


def _as_xy(samples_or_inputs, targets):
    if targets is None:
        X = np.stack([s.input.values for s in samples_or_inputs])
        y = np.array([s.delta for s in samples_or_inputs], dtype=float)
    else:
        X = np.asarray(samples_or_inputs, dtype=float)
        y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise InvalidArgumentError("need inputs (n, d) with matching targets (n,)")
    if X.shape[0] < 1:
        raise InvalidArgumentError("need at least one sample")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("inputs and targets must be finite")
    return X, y


def least_squares_fit(samples_or_inputs, targets=None) -> Tuple[np.ndarray, float]:
    """Ordinary least-squares affine fit (alpha, beta).

    Solved via centered normal equations; a tiny trace-scaled ridge term is
    added only when the Gram matrix is rank deficient, so degenerate inputs
    (constant coordinates, too few samples) stay well-posed.
    """
    X, y = _as_xy(samples_or_inputs, targets)
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc
    rhs = Xc.T @ yc
    try:
        factor = scipy.linalg.cho_factor(gram)
        alpha = scipy.linalg.cho_solve(factor, rhs)
    except np.linalg.LinAlgError:
        trace = float(np.trace(gram))
        ridge = 1e-10 * (trace / gram.shape[0] if trace > 0 else 1.0)
        alpha = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), rhs)
    beta = float(y_mean - alpha @ x_mean)
    return alpha, beta


@dataclass(frozen=True)
class LpSolution:
    """Result of a minimax fit: full coefficient vector, intercept, optimal
    margin, and the number of active constraints at the optimum (a vertex
    of the LP has at least free_count + 2 of them; fewer signals a
    degenerate instance, which is diagnostic, not an error)."""

    alpha: np.ndarray
    beta: float
    lambda_star: float
    active_constraints: int
    free_count: int

    @property
    def vertex_ok(self) -> bool:
        return self.active_constraints >= self.free_count + 2


def chebyshev_lp(samples_or_inputs, targets=None, free_indices=None,
                 fixed_alpha=None) -> LpSolution:
    """Exact minimax affine fit.

    Minimizes lambda subject to |x_i . alpha + beta - y_i| <= lambda for
    every sample, with alpha restricted to ``free_indices`` (all indices
    when None) and the remaining entries pinned to ``fixed_alpha``.
    """
    X, y = _as_xy(samples_or_inputs, targets)
    n, d = X.shape
    if free_indices is None:
        free = list(range(d))
    else:
        free = sorted(set(int(i) for i in free_indices))
        if any(i < 0 or i >= d for i in free):
            raise InvalidArgumentError("free index out of range")
    fixed = [i for i in range(d) if i not in set(free)]
    alpha_full = np.zeros(d)
    if fixed:
        if fixed_alpha is None:
            raise InvalidArgumentError("fixed_alpha required when some indices are fixed")
        fixed_alpha = np.asarray(fixed_alpha, dtype=float)
        if fixed_alpha.shape != (d,):
            raise InvalidArgumentError(f"fixed_alpha must have length {d}")
        alpha_full[fixed] = fixed_alpha[fixed]

    # fold the fixed part into the targets, then center the free columns
    # so the intercept variable is well-conditioned
    t = y - X[:, fixed] @ alpha_full[fixed] if fixed else y.copy()
    Xf = X[:, free]
    mu = Xf.mean(axis=0) if free else np.zeros(0)
    Xc = Xf - mu

    m = len(free)
    # variables z = [alpha_free (m), beta_centered, lambda]
    cost = np.zeros(m + 2)
    cost[-1] = 1.0
    ones = np.ones((n, 1))
    lam = -np.ones((n, 1))
    a_ub = np.vstack([np.hstack([Xc, ones, lam]), np.hstack([-Xc, -ones, lam])])
    b_ub = np.concatenate([t, -t])
    bounds = [(None, None)] * (m + 1) + [(0, None)]
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        # the problem is always feasible; offer a valid fallback fit
        mid = (t.max() + t.min()) / 2.0
        incumbent = LpSolution(alpha_full, float(mid), float((t.max() - t.min()) / 2.0),
                               0, m)
        raise NumericError(f"minimax fit did not converge: {res.message}",
                           incumbent=incumbent)
    z = res.x
    alpha_full[free] = z[:m]
    beta = float(z[m] - (z[:m] @ mu if m else 0.0))
    lambda_star = max(0.0, float(z[m + 1]))
    resid = np.abs(X @ alpha_full + beta - y)
    scale = max(1.0, float(np.max(np.abs(t))))
    active = int(np.sum(resid >= lambda_star - 1e-7 * scale))
    # report the exact achieved margin so the soundness invariant is exact
    lambda_star = max(lambda_star, float(resid.max()))
    return LpSolution(alpha_full, beta, lambda_star, active, m)


@dataclass(frozen=True)
class SurrogateProvenance:
    epsilon: float
    eta: float
    t1: int
    t2: int
    k_features: int
    key_indices: Tuple[int, ...]
    seed: Optional[int]
    max_sampled_delta: float
    worst_input: Optional[np.ndarray] = None
    worst_eval_seed: Optional[int] = None


@dataclass(frozen=True)
class AffineSurrogate:
    """The learned affine error model dlt(x) = x . alpha + beta with
    optimal margin lambda_star."""

    alpha: np.ndarray
    beta: float
    lambda_star: float
    kind: DeltaKind
    provenance: Optional[SurrogateProvenance] = None

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 1 or not np.all(np.isfinite(alpha)):
            raise InvalidArgumentError("alpha must be a finite vector")
        if not (np.isfinite(self.beta) and np.isfinite(self.lambda_star)):
            raise InvalidArgumentError("beta and lambda_star must be finite")
        if self.lambda_star < 0:
            raise InvalidArgumentError("lambda_star must be >= 0")
        alpha.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "kind", DeltaKind(self.kind))

    @property
    def dim(self) -> int:
        return self.alpha.shape[0]

    def predict_delta(self, values):
        """Surrogate value at one flat input (d,) or a batch (n, d)."""
        values = np.asarray(values, dtype=float)
        if values.shape == (self.dim,):
            return float(values @ self.alpha + self.beta)
        if values.ndim == 2 and values.shape[1] == self.dim:
            return values @ self.alpha + self.beta
        raise InvalidArgumentError(f"expected shape ({self.dim},) or (n, {self.dim})")

    def to_json_dict(self) -> dict:
        if self.provenance is None:
            raise InvalidArgumentError("cannot serialize a surrogate without provenance")
        p = self.provenance
        return {
            "kind": self.kind.value,
            "alpha": [float(a) for a in self.alpha],
            "beta": float(self.beta),
            "lambda_star": float(self.lambda_star),
            "epsilon": p.epsilon,
            "eta": p.eta,
            "t1": p.t1,
            "t2": p.t2,
            "key_indices": [int(i) for i in p.key_indices],
            "max_sampled_delta": p.max_sampled_delta,
            "seed": p.seed,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "AffineSurrogate":
        try:
            provenance = SurrogateProvenance(
                epsilon=float(doc["epsilon"]),
                eta=float(doc["eta"]),
                t1=int(doc["t1"]),
                t2=int(doc["t2"]),
                k_features=len(doc["key_indices"]) + 1,
                key_indices=tuple(int(i) for i in doc["key_indices"]),
                seed=None if doc["seed"] is None else int(doc["seed"]),
                max_sampled_delta=float(doc["max_sampled_delta"]),
            )
            return cls(
                alpha=np.array(doc["alpha"], dtype=float),
                beta=float(doc["beta"]),
                lambda_star=float(doc["lambda_star"]),
                kind=DeltaKind(doc["kind"]),
                provenance=provenance,
            )
        except KeyError as exc:
            raise InvalidArgumentError(f"surrogate document missing key {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "AffineSurrogate":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _select_free_features(alpha1: np.ndarray, beta1: float, k_features: int) -> list:
    # rank all candidate coefficients (bias gets pseudo-index -1) by
    # magnitude; ties go to the lower index. The bias is always freed: if
    # it ranks inside the top k it takes one slot, otherwise it replaces
    # the weakest ranked feature so the coefficient budget still holds.
    scores = {-1: abs(beta1)}
    scores.update({i: abs(a) for i, a in enumerate(alpha1)})
    order = sorted(scores, key=lambda i: (-scores[i], i))
    top = order[:k_features]
    if -1 in top:
        return sorted(i for i in top if i >= 0)
    return sorted(order[:k_features - 1])


def learn_surrogate(center: Scene, spec: PerturbationSpec, budget: PacBudget,
                    kind: DeltaKind, predictor: Predictor, seed=None,
                    k: int = 20, mode: PureMode = PureMode.FRESH,
                    references=None, workers: int = 1) -> AffineSurrogate:
    """Two-phase surrogate fit.

    Phase 1 draws t1 samples and ranks coordinates by least-squares
    coefficient magnitude. Phase 2 draws t2 fresh samples and runs the
    minimax fit over the top-ranked coordinates, with the others pinned to
    their phase-1 values. The returned surrogate carries the largest error
    observed across both phases and the sample that produced it.
    """
    kind = DeltaKind(kind)
    if kind is DeltaKind.PURE and mode is PureMode.REFSET and references is None:
        ref_seed = None if seed is None else derive_seed(seed, _REFSET_STREAM)
        references = center_reference_set(center, predictor, m=20, seed=ref_seed)

    phase_seed = [None if seed is None else derive_seed(seed, stream)
                  for stream in (_PHASE1_STREAM, _PHASE2_STREAM)]
    samples1 = collect_samples(center, spec, budget.t1, kind, predictor, k=k,
                               seed=phase_seed[0], mode=mode,
                               references=references, workers=workers)
    alpha1, beta1 = least_squares_fit(samples1)
    free = _select_free_features(alpha1, beta1, budget.k_features)

    samples2 = collect_samples(center, spec, budget.t2, kind, predictor, k=k,
                               seed=phase_seed[1], mode=mode,
                               references=references, workers=workers)
    solution = chebyshev_lp(samples2, free_indices=free, fixed_alpha=alpha1)

    worst = max_sample(list(samples1) + list(samples2))
    provenance = SurrogateProvenance(
        epsilon=budget.epsilon,
        eta=budget.eta,
        t1=budget.t1,
        t2=budget.t2,
        k_features=budget.k_features,
        key_indices=tuple(free),
        seed=None if seed is None else int(seed),
        max_sampled_delta=worst.delta,
        worst_input=worst.input.values,
        worst_eval_seed=worst.eval_seed,
    )
    return AffineSurrogate(
        alpha=solution.alpha,
        beta=solution.beta,
        lambda_star=solution.lambda_star,
        kind=kind,
        provenance=provenance,
    )


class LeastSquaresRegressor(BaseEstimator, RegressorMixin):
    """Affine least-squares regressor with the degenerate-input fallback of
    :func:`least_squares_fit`."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.coef_, self.intercept_ = least_squares_fit(X, y)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_


class ChebyshevRegressor(BaseEstimator, RegressorMixin):
    """Affine minimax regressor: fits by minimizing the largest absolute
    residual; the achieved margin is exposed as ``lambda_``."""

    def __init__(self, free_indices=None, fixed_alpha=None):
        self.free_indices = free_indices
        self.fixed_alpha = fixed_alpha

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        solution = chebyshev_lp(X, y, free_indices=self.free_indices,
                                fixed_alpha=self.fixed_alpha)
        self.coef_ = solution.alpha
        self.intercept_ = solution.beta
        self.lambda_ = solution.lambda_star
        self.solution_ = solution
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_
