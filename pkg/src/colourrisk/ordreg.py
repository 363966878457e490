"""Cumulative-logit (proportional-odds) regression for three ordered risk levels.

Model: logit(P(Y <= l)) = eta_l + beta . s for l in {1, 2}, with levels
ordered low < medium < high. Note the sign: a larger linear predictor raises
the probability of the *lower* risk levels.

Labels are passed as integer indices 0 (low), 1 (medium), 2 (high); see
`panel.RiskLevel.index` for the mapping from level codes.

Optimization runs in the unconstrained parameterization
theta = (eta_1, delta, beta) with eta_2 = eta_1 + exp(delta), which keeps the
thresholds strictly ordered at every iterate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OrdinalModel",
    "FitResult",
    "NumericalError",
    "class_probabilities",
    "nll_grad_hess",
    "fit",
    "predict",
    "predict_index",
    "misclassification_error",
]

N_LEVELS = 3
PROB_FLOOR = 1e-300
SEPARATION_LIMIT = 1e5
MAX_HALVINGS = 30
# Total NLL below this means every observation is fitted with probability
# ~1: a quasi-perfect fit whose parameters are still escaping to infinity,
# so a small gradient there is not an interior optimum.
NLL_ESCAPE_FLOOR = 1e-10


class NumericalError(RuntimeError):
    """A non-finite intermediate appeared during likelihood evaluation."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"{message} (row {row})")


@dataclass(frozen=True, eq=False)
class OrdinalModel:
    """Thresholds eta = (eta_1, eta_2) with eta_1 < eta_2, and slopes beta."""

    eta: np.ndarray
    beta: np.ndarray

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, OrdinalModel)
            and np.array_equal(self.eta, other.eta)
            and np.array_equal(self.beta, other.beta)
        )

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if eta.shape != (2,):
            raise ValueError(f"eta must have shape (2,), got {eta.shape}")
        if not eta[0] < eta[1]:
            raise ValueError(f"thresholds must be ordered: {eta[0]} >= {eta[1]}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "beta", beta)

    @property
    def r(self) -> int:
        return self.beta.shape[0]

    def to_dict(self) -> dict:
        return {"eta": self.eta.tolist(), "beta": self.beta.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "OrdinalModel":
        return cls(
            eta=np.asarray(d["eta"], dtype=float),
            beta=np.asarray(d["beta"], dtype=float),
        )


@dataclass(frozen=True)
class FitResult:
    model: OrdinalModel
    nll: float
    iterations: int
    converged: bool
    separation_flag: bool
    gradient_norm: float

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "nll": self.nll,
            "iterations": self.iterations,
            "converged": self.converged,
            "separation_flag": self.separation_flag,
            "gradient_norm": self.gradient_norm,
        }


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # 1/(1+exp(-x)) is safe in double for every x: the exp overflows to inf
    # (giving 0) or underflows to 0 (giving 1), never NaN. Values below the
    # PROB_FLOOR are floored downstream, so deep-tail subnormals don't matter.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _check_scores(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S.reshape(-1, 1)
    if S.ndim != 2:
        raise ValueError(f"scores must be 1-d or 2-d, got shape {S.shape}")
    if not np.isfinite(S).all():
        bad = int(np.flatnonzero(~np.isfinite(S).all(axis=1))[0])
        raise NumericalError("non-finite score value", row=bad)
    return S


def _check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {y.shape}")
    y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= N_LEVELS:
        raise ValueError("label indices must lie in 0..2 (low..high)")
    return y


def class_probabilities(model: OrdinalModel, s) -> np.ndarray:
    """Probabilities (p_low, p_med, p_high) for one score vector."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.shape != (model.r,):
        raise ValueError(f"score vector must have shape ({model.r},), got {s.shape}")
    return _probability_matrix(model, s.reshape(1, -1))[0]


def _probability_matrix(model: OrdinalModel, S: np.ndarray) -> np.ndarray:
    t = S @ model.beta
    g1 = _sigmoid(model.eta[0] + t)
    g2 = _sigmoid(model.eta[1] + t)
    return np.column_stack([g1, g2 - g1, 1.0 - g2])


def _theta_from_model(model: OrdinalModel) -> np.ndarray:
    gap = model.eta[1] - model.eta[0]
    theta = np.empty(2 + model.r)
    theta[0] = model.eta[0]
    theta[1] = np.log(gap)
    theta[2:] = model.beta
    return theta


def _model_from_theta(theta: np.ndarray) -> OrdinalModel:
    eta1 = theta[0]
    return OrdinalModel(
        eta=np.array([eta1, eta1 + np.exp(theta[1])]), beta=theta[2:].copy()
    )


def _nll_only(theta, S, mL, mM, mH) -> float:
    n, r = S.shape
    with np.errstate(over="ignore"):
        t = S @ theta[2:] if r else np.zeros(n)
        a1 = theta[0] + t
        a2 = a1 + np.exp(theta[1])
        g1 = _sigmoid(a1)
        g2 = _sigmoid(a2)
        p = np.empty(n)
        p[mL] = g1[mL]
        p[mM] = g2[mM] - g1[mM]
        p[mH] = 1.0 - g2[mH]
        np.maximum(p, PROB_FLOOR, out=p)
        return float(-np.log(p).sum())


def _nll_grad_hess_theta(theta, S, mL, mM, mH):
    """Negative log-likelihood with gradient and Hessian in (eta_1, delta, beta).

    Derivatives chain through a1 = eta_1 + beta.s, a2 = a1 + exp(delta); the
    only curvature beyond the quadratic form is the exp(delta) term in the
    (delta, delta) entry.
    """
    n, r = S.shape
    with np.errstate(over="ignore"):
        gap = np.exp(theta[1])
        t = S @ theta[2:] if r else np.zeros(n)
        a1 = theta[0] + t
        a2 = a1 + gap
        g1 = _sigmoid(a1)
        g2 = _sigmoid(a2)

        p = np.empty(n)
        p[mL] = g1[mL]
        p[mM] = g2[mM] - g1[mM]
        p[mH] = 1.0 - g2[mH]
        np.maximum(p, PROB_FLOOR, out=p)
        nll = float(-np.log(p).sum())

        s1 = g1 * (1.0 - g1)
        s2 = g2 * (1.0 - g2)

        # u, v: d log p / d a1, d a2; w**: second derivatives.
        u = np.zeros(n)
        v = np.zeros(n)
        w11 = np.zeros(n)
        w12 = np.zeros(n)
        w22 = np.zeros(n)

        u[mL] = 1.0 - g1[mL]
        w11[mL] = -s1[mL]
        v[mH] = -g2[mH]
        w22[mH] = -s2[mH]

        pm = p[mM]
        um = -s1[mM] / pm
        vm = s2[mM] / pm
        u[mM] = um
        v[mM] = vm
        w11[mM] = -(s1[mM] * (1.0 - 2.0 * g1[mM])) / pm - um * um
        w22[mM] = (s2[mM] * (1.0 - 2.0 * g2[mM])) / pm - vm * vm
        w12[mM] = -um * vm

        c = w11 + 2.0 * w12 + w22
        d = w12 + w22
        uv = u + v

        grad = np.empty(2 + r)
        grad[0] = -uv.sum()
        grad[1] = -gap * v.sum()
        H = np.empty((2 + r, 2 + r))
        H[0, 0] = -c.sum()
        H[0, 1] = H[1, 0] = -gap * d.sum()
        H[1, 1] = -(gap * gap * w22.sum() + gap * v.sum())
        if r:
            grad[2:] = -(S.T @ uv)
            Sc = S.T @ c
            Sd = S.T @ d
            H[0, 2:] = H[2:, 0] = -Sc
            H[1, 2:] = H[2:, 1] = -gap * Sd
            H[2:, 2:] = -(S.T * c) @ S

    if not (np.isfinite(nll) and np.isfinite(grad).all() and np.isfinite(H).all()):
        finite_rows = np.isfinite(u) & np.isfinite(v) & np.isfinite(w11) & np.isfinite(w22)
        bad = int(np.flatnonzero(~finite_rows)[0]) if not finite_rows.all() else None
        raise NumericalError("non-finite likelihood intermediate", row=bad)
    return nll, grad, H


def nll_grad_hess(model: OrdinalModel, S, y):
    """NLL with analytic gradient and Hessian at the model's parameters.

    Returns (nll, gradient, hessian) in the (eta_1, delta, beta)
    parameterization, delta = log(eta_2 - eta_1).
    """
    S = _check_scores(S)
    y = _check_labels(y, S.shape[0])
    if S.shape[1] != model.r:
        raise ValueError(f"scores have {S.shape[1]} columns, model has r={model.r}")
    theta = _theta_from_model(model)
    return _nll_grad_hess_theta(theta, S, y == 0, y == 1, y == 2)


def _start_theta(n: int, r: int, n_low: int, n_med: int) -> np.ndarray:
    """Empirical cumulative logits for the thresholds, zero slopes.

    Cumulative proportions are clamped away from {0, 1} and forced strictly
    increasing so the starting point is always feasible.
    """
    c1 = min(max(float(n_low), 0.5), n - 0.5) / n
    c2 = min(max(float(n_low + n_med), 0.5), n - 0.5) / n
    if c2 <= c1:
        c2 = min(c1 + 0.25 / n, 1.0 - 0.25 / n)
    eta1 = np.log(c1 / (1.0 - c1))
    eta2 = np.log(c2 / (1.0 - c2))
    theta = np.zeros(2 + r)
    theta[0] = eta1
    theta[1] = np.log(eta2 - eta1)
    return theta


def _solve_newton_step(H: np.ndarray, grad: np.ndarray) -> np.ndarray | None:
    """Solve H d = -grad, adding an escalating ridge if the solve fails."""
    k = H.shape[0]
    ridge = 0.0
    scale = max(1.0, float(np.abs(np.diag(H)).max()))
    for _ in range(12):
        try:
            d = np.linalg.solve(H + ridge * np.eye(k), -grad)
        except np.linalg.LinAlgError:
            d = None
        if d is not None and np.isfinite(d).all():
            return d
        ridge = 1e-10 * scale if ridge == 0.0 else ridge * 100.0
    return None


def _max_abs_natural(theta: np.ndarray) -> float:
    eta2 = theta[0] + np.exp(theta[1])
    return float(max(abs(theta[0]), abs(eta2), np.abs(theta[2:]).max(initial=0.0)))


def fit(S, y, max_iter: int = 200, tol: float = 1e-8) -> FitResult:
    """Maximum-likelihood fit by Newton iterations with step-halving.

    Starts at zero slopes with thresholds at the empirical cumulative logits.
    A step is accepted only if it strictly decreases the NLL (up to
    MAX_HALVINGS halvings); a stalled line search ends the fit at the current
    iterate. Quasi-separated data is detected by parameter escape past
    SEPARATION_LIMIT (or a stall after unbounded growth) and flagged rather
    than raised, since such fits still carry usable classifications.
    """
    S = _check_scores(S)
    n, r = S.shape
    if r >= n:
        raise ValueError(f"unidentifiable fit: {r} predictors for {n} observations")
    if n < 3:
        raise ValueError(f"need at least 3 observations, got {n}")
    y = _check_labels(y, n)
    counts = np.bincount(y, minlength=N_LEVELS)
    if (counts > 0).sum() < 2:
        raise ValueError("need at least two distinct label classes")

    mL = y == 0
    mM = y == 1
    mH = y == 2
    theta = _start_theta(n, r, int(counts[0]), int(counts[1]))
    start_scale = max(1.0, _max_abs_natural(theta))

    nll, grad, H = _nll_grad_hess_theta(theta, S, mL, mM, mH)
    iterations = 0
    stalled = False
    for iterations in range(0, max_iter + 1):
        if np.abs(grad).max() <= tol and nll > NLL_ESCAPE_FLOOR:
            break
        if iterations == max_iter:
            break
        d = _solve_newton_step(H, grad)
        if d is None:
            stalled = True
            break
        step = 1.0
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + step * d
            cand_nll = _nll_only(cand, S, mL, mM, mH)
            if cand_nll < nll:
                accepted = (cand, cand_nll)
                break
            step *= 0.5
        if accepted is None:
            stalled = True
            break
        theta, nll = accepted
        if _max_abs_natural(theta) > SEPARATION_LIMIT:
            iterations += 1
            break
        try:
            nll, grad, H = _nll_grad_hess_theta(theta, S, mL, mM, mH)
        except NumericalError:
            # Second-order terms overflow only in deep quasi-separation;
            # keep the accepted iterate and let the flags tell the story.
            grad = np.full_like(grad, np.inf)
            stalled = True
            break

    gradient_norm = float(np.abs(grad).max())
    max_abs = _max_abs_natural(theta)
    separation = max_abs > SEPARATION_LIMIT or (
        stalled and max_abs > 1e3 * start_scale
    )
    converged = gradient_norm <= tol and not separation
    return FitResult(
        model=_model_from_theta(theta),
        nll=nll,
        iterations=iterations,
        converged=converged,
        separation_flag=separation,
        gradient_norm=gradient_norm,
    )


def predict_index(model: OrdinalModel, S) -> np.ndarray:
    """Most probable level index per row; exact ties go to the lower level."""
    S = _check_scores(S)
    if S.shape[1] != model.r:
        raise ValueError(f"scores have {S.shape[1]} columns, model has r={model.r}")
    # argmax picks the first maximum, i.e. the lower risk level on ties.
    return np.argmax(_probability_matrix(model, S), axis=1)


def predict(model: OrdinalModel, s):
    """Predicted risk level (panel.RiskLevel) for one score vector."""
    from .panel import RiskLevel

    s = np.atleast_1d(np.asarray(s, dtype=float))
    idx = int(predict_index(model, s.reshape(1, -1))[0])
    return RiskLevel.from_index(idx)


def misclassification_error(model: OrdinalModel, S, y) -> float:
    """Fraction of observations whose predicted level differs from the label."""
    S = _check_scores(S)
    y = _check_labels(y, S.shape[0])
    pred = predict_index(model, S)
    return float(np.count_nonzero(pred != y)) / S.shape[0]
