"""Dynamic behaviour prediction: a linear SVM over historical experience.

The classifier is trained on the dual problem

    max  sum(mu) - 1/2 sum_rq mu_r mu_q p_r p_q (x_r . x_q)
    s.t. sum(mu_r p_r) = 0,  0 <= mu_r <= C   (C = inf for a hard margin)

with pairwise (SMO) coordinate ascent, then ``psi = sum mu_r p_r x_r``.
Label +1 marks an intensive DMB attacker, -1 a trusted user.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

log = logging.getLogger(__name__)

FEATURE_NAMES = ("lt_ij", "gt_i", "t_i", "f_i", "L_j", "N_j", "F_k")
N_FEATURES = len(FEATURE_NAMES)
NEWCOMER_FEEDBACK = 1.0


class TrainingError(ValueError):
    pass


class NonSeparableError(TrainingError):
    def __init__(self, msg, pair=None):
        super().__init__(msg)
        self.pair = pair


class ModelStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    features: tuple
    label: int

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.label}")
        if len(self.features) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {len(self.features)}")


def extract_features(record) -> np.ndarray:
    """Project an experience record onto the 7 feature slots, in table order."""
    return np.array([record.lt_ij, record.gt_i, record.t_i, record.f_i,
                     record.L_j, record.N_j, record.F_k], dtype=float)


def newcomer_features(theta: float, L_j: int, N_j: int,
                      feedback: float = NEWCOMER_FEEDBACK) -> np.ndarray:
    return np.array([theta, theta, 0, 0, L_j, N_j, feedback], dtype=float)


def latest_features(sidechain, users, chain_id: int, L_j: int, N_j: int,
                    feedback_mode: str = "latest") -> np.ndarray:
    """Feature rows for ``users`` on ``chain_id`` from the side chain.

    Per-user fields (global trust, true/false totals) come from the user's most
    recent record on any chain; per-chain fields (local trust, feedback) from
    the most recent record on ``chain_id``. Missing values take newcomer
    defaults. ``L_j`` and ``N_j`` are the chain's current values.
    """
    users = np.asarray(users, dtype=np.int64)
    theta = sidechain.theta
    X = np.empty((users.size, N_FEATURES))
    lt = sidechain.last_lt[users, chain_id]
    gt = sidechain.last_gt[users]
    X[:, 0] = np.where(np.isnan(lt), theta, lt)
    X[:, 1] = np.where(np.isnan(gt), theta, gt)
    X[:, 2] = sidechain.last_t[users]
    X[:, 3] = sidechain.last_f[users]
    X[:, 4] = L_j
    X[:, 5] = N_j
    X[:, 6] = sidechain.feedback(users, chain_id, feedback_mode, NEWCOMER_FEEDBACK)
    return X


@dataclass
class Scaler:
    mean: np.ndarray
    scale: np.ndarray
    lo: np.ndarray  # clipping range in scaled units
    hi: np.ndarray

    @classmethod
    def identity(cls, d: int = N_FEATURES) -> "Scaler":
        return cls(np.zeros(d), np.ones(d), np.full(d, -np.inf), np.full(d, np.inf))

    @classmethod
    def fit(cls, X: np.ndarray, clip: bool = True) -> "Scaler":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        scale = np.where(std > 1e-12, std, 1.0)
        Z = (X - mean) / scale
        if clip:
            lo, hi = Z.min(axis=0), Z.max(axis=0)
        else:
            lo, hi = np.full(X.shape[1], -np.inf), np.full(X.shape[1], np.inf)
        return cls(mean, scale, lo, hi)

    def transform(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.scale
        # keeps drifting counters (chain length, block totals) inside the fitted range
        return np.clip(Z, self.lo, self.hi)

    def to_json(self) -> dict:
        enc = lambda a: [None if not math.isfinite(v) else float(v) for v in a]
        return {"mean": enc(self.mean), "scale": enc(self.scale), "lo": enc(self.lo), "hi": enc(self.hi)}

    @classmethod
    def from_json(cls, d) -> "Scaler":
        dec = lambda a, fill: np.array([fill if v is None else v for v in a], dtype=float)
        return cls(dec(d["mean"], 0.0), dec(d["scale"], 1.0), dec(d["lo"], -np.inf), dec(d["hi"], np.inf))


@dataclass
class SvmModel:
    psi: np.ndarray | None = None
    gamma: float = 0.0
    mu: np.ndarray | None = None
    scaler: Scaler = field(default_factory=Scaler.identity)
    penalty: float | None = None  # None: hard margin
    metadata: dict = field(default_factory=dict)

    @property
    def trained(self) -> bool:
        return self.psi is not None

    def decision(self, X) -> np.ndarray:
        if not self.trained:
            raise ModelStateError("model has not been trained")
        Z = self.scaler.transform(np.atleast_2d(X))
        return Z @ self.psi + self.gamma

    def margin(self) -> float:
        """Gap between the two support hyperplanes, 2 / ||psi||."""
        return 2.0 / float(np.linalg.norm(self.psi))

    def save(self, path) -> None:
        doc = {
            "feature_names": list(FEATURE_NAMES),
            "psi": [float(v) for v in self.psi],
            "gamma": float(self.gamma),
            "scaler": self.scaler.to_json(),
            "penalty": self.penalty,
            "metadata": self.metadata,
        }
        Path(path).write_text(json.dumps(doc, indent=2))

    @classmethod
    def load(cls, path) -> "SvmModel":
        doc = json.loads(Path(path).read_text())
        psi = np.array(doc["psi"], dtype=float)
        if psi.shape != (N_FEATURES,):
            raise ValueError(f"model file must hold {N_FEATURES} weights")
        return cls(psi, float(doc["gamma"]), None, Scaler.from_json(doc["scaler"]),
                   doc.get("penalty"), doc.get("metadata", {}))


def predict(model: SvmModel | None, features) -> int:
    """+1 (intensive attacker) or -1 (trusted); a zero decision value counts as trusted."""
    if model is None or not model.trained:
        raise ModelStateError("model has not been trained")
    return 1 if float(model.decision(features)[0]) > 0 else -1


def predict_many(model: SvmModel, X) -> np.ndarray:
    return np.where(model.decision(X) > 0, 1, -1)


def margin_distance(model: SvmModel, features) -> float:
    """Distance from the point to the separating hyperplane, in model space."""
    norm = float(np.linalg.norm(model.psi))
    if norm == 0.0:
        raise ModelStateError("degenerate model: zero weight vector")
    return abs(float(model.decision(features)[0])) / norm


def detect_intensive(phi1, chain_id: int, model: SvmModel, sidechain, L_j: int, N_j: int,
                     feedback_mode: str = "latest") -> set:
    users = np.array(sorted(phi1), dtype=np.int64)
    if users.size == 0:
        return set()
    X = latest_features(sidechain, users, chain_id, L_j, N_j, feedback_mode)
    return {int(u) for u in users[predict_many(model, X) == 1]}


# -- training -----------------------------------------------------------------

def is_separable(Z: np.ndarray, y: np.ndarray) -> bool:
    """LP feasibility of p_r (w . z_r + b) >= 1 for all r."""
    m, d = Z.shape
    A = -y[:, None] * np.hstack([Z, np.ones((m, 1))])
    res = linprog(np.zeros(d + 1), A_ub=A, b_ub=-np.ones(m),
                  bounds=[(None, None)] * (d + 1), method="highs")
    return res.status == 0


def _smo(Z, y, C, tol, max_iter):
    """Second-order working-set SMO for the linear-kernel dual.

    Minimises 1/2 a'Qa - e'a with Q_rq = y_r y_q z_r.z_q. Returns (alpha, G, iters, gap).
    """
    m = len(y)
    alpha = np.zeros(m)
    G = -np.ones(m)
    diag = np.einsum("ij,ij->i", Z, Z)
    tau = 1e-12
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * G
        s_up = np.where(up, score, -np.inf)
        i = int(np.argmax(s_up))
        g_max = s_up[i]
        s_low = np.where(low, score, np.inf)
        gap = g_max - s_low.min()
        if gap < tol:
            break
        # second-order choice of j among violating candidates
        Ki = Z @ Z[i]
        b = g_max - score
        a = diag[i] + diag - 2.0 * Ki
        a = np.where(a > tau, a, tau)
        cand = low & (b > 0)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))

        yi, yj = y[i], y[j]
        ai_old, aj_old = alpha[i], alpha[j]
        # move along the feasible direction keeping sum(alpha * y) fixed
        quad = max(diag[i] + diag[j] - 2.0 * Ki[j], tau)
        step = (-yi * G[i] + yj * G[j]) / quad
        ai_new = ai_old + yi * step
        aj_new = aj_old - yj * step
        # clip to the box, preserving yi*ai + yj*aj
        s = yi * ai_old + yj * aj_old
        if ai_new < 0:
            ai_new = 0.0
        elif ai_new > C:
            ai_new = C
        aj_new = yj * (s - yi * ai_new)
        if aj_new < 0:
            aj_new = 0.0
            ai_new = yi * (s - yj * aj_new)
        elif aj_new > C:
            aj_new = C
            ai_new = yi * (s - yj * aj_new)
        d_i = ai_new - ai_old
        d_j = aj_new - aj_old
        alpha[i], alpha[j] = ai_new, aj_new
        G += y * (Z @ (yi * d_i * Z[i] + yj * d_j * Z[j]))
    return alpha, G, it, gap


def _bias(alpha, G, y, C, sv_tol):
    free = (alpha > sv_tol) & (alpha < C - sv_tol)
    if free.any():
        return float(np.mean(-y[free] * G[free]))
    # no free vectors: centre of the interval allowed by the bound constraints
    lower, upper = -np.inf, np.inf
    at_zero = alpha <= sv_tol
    at_c = ~at_zero
    for mask, sign in ((at_zero, 1.0), (at_c, -1.0)):
        pos = mask & (y * sign > 0)
        neg = mask & (y * sign < 0)
        if pos.any():
            lower = max(lower, float(np.max(-G[pos] * y[pos])))
        if neg.any():
            upper = min(upper, float(np.min(-G[neg] * y[neg])))
    if math.isinf(lower) and math.isinf(upper):
        return 0.0
    if math.isinf(lower):
        return upper
    if math.isinf(upper):
        return lower
    return 0.5 * (lower + upper)


def _polish(Z, y, alpha, sv_tol):
    """Solve the equality KKT system on the support set; None if it is not valid."""
    S = np.flatnonzero(alpha > sv_tol)
    if S.size == 0:
        return None
    Zs, ys = Z[S], y[S]
    Q = (ys[:, None] * ys[None, :]) * (Zs @ Zs.T)
    k = S.size
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = Q
    A[:k, k] = ys
    A[k, :k] = ys
    rhs = np.concatenate([np.ones(k), [0.0]])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    a_s, b = sol[:k], float(sol[k])
    if np.any(a_s < -1e-12) or np.abs(A @ sol - rhs).max() > 1e-9:
        return None
    new = np.zeros_like(alpha)
    new[S] = np.maximum(a_s, 0.0)
    w = (new * y) @ Z
    if np.min(y * (Z @ w + b)) < 1 - 1e-9:
        return None
    return new, b


def _sv_residual(Z, y, alpha, b):
    w = (alpha * y) @ Z
    sv = alpha > 0
    return float(np.abs(1.0 - y[sv] * (Z[sv] @ w + b)).max()) if sv.any() else math.inf


def _violating_pair(Z, y):
    """Worst-classified +1 and -1 samples under a soft-margin fit."""
    alpha, G, *_ = _smo(Z, y, 1.0, 1e-4, 20000)
    w = (alpha * y) @ Z
    b = _bias(alpha, G, y, 1.0, 1e-9)
    slack = y * (Z @ w + b)
    pos = np.flatnonzero(y > 0)
    neg = np.flatnonzero(y < 0)
    return int(pos[np.argmin(slack[pos])]), int(neg[np.argmin(slack[neg])])


def train(samples=None, *, X=None, y=None, penalty: float | None = None,
          standardize: bool = True, clip: bool = True, tol: float = 1e-9,
          max_iter: int = 200_000) -> SvmModel:
    """Fit the maximum-margin hyperplane.

    ``penalty=None`` requests a hard margin and raises :class:`NonSeparableError`
    if no separating hyperplane exists; a positive ``penalty`` fits the soft
    margin variant.
    """
    if samples is not None:
        X = np.array([s.features for s in samples], dtype=float)
        y = np.array([s.label for s in samples], dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise TrainingError("need a non-empty sample set with one label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise TrainingError("labels must be +1 or -1")
    if not ((y > 0).any() and (y < 0).any()):
        raise TrainingError("training data must contain both labels")
    if not np.all(np.isfinite(X)):
        raise TrainingError("features must be finite")

    scaler = Scaler.fit(X, clip=clip) if standardize else Scaler.identity(X.shape[1])
    Z = (X - scaler.mean) / scaler.scale

    hard = penalty is None
    C = math.inf if hard else float(penalty)
    if hard and not is_separable(Z, y):
        i, j = _violating_pair(Z, y)
        raise NonSeparableError(
            f"samples are not linearly separable (hard margin infeasible); "
            f"worst violating pair: +1 sample {i}, -1 sample {j}", pair=(i, j))

    alpha, G, iters, gap = _smo(Z, y, C, tol, max_iter)
    if gap >= tol:
        log.warning("SMO stopped after %d iterations with KKT gap %.3g", iters, gap)
    sv_tol = 1e-12 * max(1.0, float(alpha.max()))
    b = _bias(alpha, G, y, C, sv_tol)
    if hard:
        polished = _polish(Z, y, alpha, sv_tol)
        if polished is not None and _sv_residual(Z, y, *polished) < _sv_residual(Z, y, alpha, b):
            alpha, b = polished
    psi = (alpha * y) @ Z
    n_sv = int(np.count_nonzero(alpha > sv_tol))
    meta = {"n_samples": int(len(y)), "n_support": n_sv, "iterations": int(iters),
            "kkt_gap": float(gap), "soft_margin": not hard}
    return SvmModel(psi, float(b), alpha, scaler, None if hard else C, meta)


def kkt_residuals(model: SvmModel, X, y) -> dict:
    """Dual feasibility, stationarity and complementary-slackness residuals."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    Z = (X - model.scaler.mean) / model.scaler.scale
    mu = model.mu
    f = Z @ model.psi + model.gamma
    slack = 1.0 - y * f
    if model.penalty is not None:
        C = model.penalty
        # soft margin: slack is absorbed where mu == C
        cs = np.where(mu < C - 1e-12, mu * slack, 0.0)
    else:
        cs = mu * slack
    return {
        "min_mu": float(mu.min()),
        "balance": float(abs(mu @ y)),
        "stationarity": float(np.linalg.norm(model.psi - (mu * y) @ Z)),
        "slackness": float(np.abs(cs).max()),
        "primal": float(max(0.0, slack.max())) if model.penalty is None else 0.0,
    }
