"""Batch and online least squares over feature panels.

The learner's model is y_t = theta_0 + sum_{k in omega} theta_k x_{k,t};
design matrices carry a leading unit column for the bias. The quadratic
loss is the squared residual norm over the fitted window. Online updates
use the standard recursive least-squares recursion with an optional
exponential forgetting factor.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

RLS_PRIOR_SCALE = 1e6
RIDGE_RTOL = 1e-8


class SingularDesignError(ValueError):
    """Raised when the design matrix is rank deficient and ridge is disabled."""


@dataclass(frozen=True)
class RegressionFit:
    """Result of a batch fit: estimate, achieved loss, columns used."""

    theta_hat: np.ndarray
    loss: float
    feature_set: tuple
    ridged: bool = False

    def __post_init__(self):
        theta = np.asarray(self.theta_hat, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "feature_set", tuple(sorted(self.feature_set)))


@dataclass(frozen=True)
class RlsState:
    """Online estimator state: parameters, inverse information, forgetting."""

    theta: np.ndarray
    P: np.ndarray
    lam: float = 1.0
    loss: float = 0.0
    steps: int = 0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        P = np.asarray(self.P, dtype=float)
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("forgetting factor must lie in (0,1]")
        if P.shape != (theta.size, theta.size):
            raise ValueError("P must be square and match theta's dimension")
        try:
            np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            raise ValueError("P must be symmetric positive definite") from None
        theta.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "P", P)


def design_matrix(panel, features) -> np.ndarray:
    """[1, x_features] with columns in sorted feature order."""
    cols = sorted(features)
    out = np.ones((panel.tau, len(cols) + 1))
    if cols:
        out[:, 1:] = panel.x[:, cols]
    return out


def fit_batch(panel, features, ridge: bool = True) -> RegressionFit:
    """Minimise ||y - X~ theta||^2 over the selected feature columns.

    Rank-deficient designs (e.g. perfectly correlated duplicate columns)
    fall back to a small ridge penalty 1e-8 * trace(X'X)/d, flagged in the
    result; with ``ridge=False`` they raise SingularDesignError naming the
    offending columns.
    """
    features = tuple(sorted(features))
    xt = design_matrix(panel, features)
    d = xt.shape[1]
    if panel.tau <= d:
        raise ValueError(f"need more than {d} observations to fit {d} parameters")
    theta, _, rank, _ = np.linalg.lstsq(xt, panel.y, rcond=None)
    ridged = False
    if rank < d:
        if not ridge:
            raise SingularDesignError(
                "design matrix is rank deficient; offending columns: "
                f"{_dependent_columns(xt, features)}"
            )
        gram = xt.T @ xt
        penalty = RIDGE_RTOL * np.trace(gram) / d
        theta = np.linalg.solve(gram + penalty * np.eye(d), xt.T @ panel.y)
        ridged = True
    resid = panel.y - xt @ theta
    return RegressionFit(theta_hat=theta, loss=float(resid @ resid),
                         feature_set=features, ridged=ridged)


def _dependent_columns(xt, features):
    """Name the pivoted-away feature columns of a rank-deficient design."""
    _, r, piv = scipy.linalg.qr(xt, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(xt.shape) * np.finfo(float).eps
    labels = ["bias"] + [f"x{j + 1}" for j in features]
    dropped = [labels[piv[i]] for i in range(len(diag)) if diag[i] <= tol]
    dropped += [labels[p] for p in piv[len(diag):]]
    return sorted(dropped)


def rls_init(dim: int, lam: float = 1.0, prior_scale: float = RLS_PRIOR_SCALE) -> RlsState:
    """Zero-information prior: theta = 0, P = prior_scale * I."""
    return RlsState(theta=np.zeros(dim), P=prior_scale * np.eye(dim), lam=lam)


def rls_from_fit(panel, fit: RegressionFit, lam: float = 1.0) -> RlsState:
    """Seed an online estimator from a batch fit (P = inverse information)."""
    xt = design_matrix(panel, fit.feature_set)
    gram = xt.T @ xt
    if fit.ridged:
        gram = gram + RIDGE_RTOL * np.trace(gram) / gram.shape[0] * np.eye(gram.shape[0])
    return RlsState(theta=fit.theta_hat.copy(), P=np.linalg.inv(gram), lam=lam,
                    loss=fit.loss, steps=panel.tau)


def rls_update(state: RlsState, x_t, y_t: float) -> RlsState:
    """One recursive least-squares step; returns a new state.

    Gain k = P x / (lam + x' P x); the loss accumulator adds the product of
    a-priori and a-posteriori residuals, which for lam = 1 reproduces the
    batch loss of the (negligibly) regularised problem.
    """
    x = np.asarray(x_t, dtype=float)
    y = float(y_t)
    if not (np.isfinite(x).all() and np.isfinite(y)):
        raise ValueError("non-finite regression inputs")
    if x.shape != state.theta.shape:
        raise ValueError("regressor length must match the state dimension")
    px = state.P @ x
    denom = state.lam + x @ px
    gain = px / denom
    err_pre = y - x @ state.theta
    theta = state.theta + gain * err_pre
    p_new = (state.P - np.outer(gain, px)) / state.lam
    p_new = (p_new + p_new.T) / 2.0
    err_post = y - x @ theta
    return RlsState(theta=theta, P=p_new, lam=state.lam,
                    loss=state.lam * state.loss + err_pre * err_post,
                    steps=state.steps + 1)


def checkpoint_grid(tau: int, step: int = 1000) -> tuple:
    return tuple(range(step, tau + 1, step))


def scenario_losses(panel, scenarios, step: int = 1000) -> dict:
    """Running per-scenario loss estimates at regular checkpoints.

    Each scenario is a feature set that must contain the central agent's
    features. The online estimate at checkpoint t is the accumulated RLS
    loss divided by t; the returned values are normalised by the maximum
    across all scenarios and checkpoints (max -> 1).
    """
    scenarios = [tuple(sorted(s)) for s in scenarios]
    if not scenarios:
        raise ValueError("at least one participation scenario is required")
    central = set(panel.features_of(0))
    for s in scenarios:
        if not central <= set(s):
            raise ValueError(f"scenario {s} must contain the central agent's features")
    checkpoints = checkpoint_grid(panel.tau, step)
    raw = {}
    for s in scenarios:
        xt = design_matrix(panel, s)
        state = rls_init(xt.shape[1])
        series = []
        marks = iter(checkpoints)
        mark = next(marks, None)
        for t in range(panel.tau):
            state = rls_update(state, xt[t], panel.y[t])
            if mark is not None and t + 1 == mark:
                series.append(max(state.loss, 0.0) / (t + 1))
                mark = next(marks, None)
        raw[s] = series
    peak = max(max(v) for v in raw.values())
    scale = peak if peak > 0 else 1.0
    return {s: tuple(v / scale for v in series) for s, series in raw.items()}


def export_losses_csv(losses: dict, path, step: int = 1000) -> None:
    """Write scenario loss series as CSV: t,scenario,normalized_loss."""
    with open(path, "w") as fh:
        fh.write("t,scenario,normalized_loss\n")
        for s, series in losses.items():
            label = "+".join(f"x{j + 1}" for j in s)
            for i, v in enumerate(series):
                fh.write(f"{(i + 1) * step},{label},{v!r}\n")
