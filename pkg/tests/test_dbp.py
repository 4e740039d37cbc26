import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from podt import dbp
from podt.dbp import (LabeledSample, ModelStateError, NonSeparableError, Scaler, SvmModel,
                      TrainingError, kkt_residuals, margin_distance, predict, train)
from podt.sidechain import ExperienceRecord, SideChain


def embed(points):
    """Lift 2-D points into the 7-slot feature space (other slots zero)."""
    X = np.zeros((len(points), dbp.N_FEATURES))
    X[:, :2] = points
    return X


def oracle_psi_norm(P, y):
    """Max-margin ||psi|| by searching over hyperplane directions in 2-D.

    For a unit direction w the best achievable half-gap is
    (min_{+} w.x - max_{-} w.x) / 2, and ||psi|| = 1 / (best half-gap).
    """
    pos, neg = P[y > 0], P[y < 0]

    def neg_gap(a):
        w = np.array([np.cos(a), np.sin(a)])
        return -((pos @ w).min() - (neg @ w).max()) / 2

    grid = np.linspace(0, 2 * np.pi, 7201)
    vals = np.array([neg_gap(a) for a in grid])
    a0 = grid[int(np.argmin(vals))]
    step = grid[1] - grid[0]
    res = minimize_scalar(neg_gap, bounds=(a0 - step, a0 + step), method="bounded",
                          options={"xatol": 1e-12})
    return 1.0 / -min(res.fun, vals.min())


def separable_instance(rng):
    while True:
        k = int(rng.integers(2, 9))
        P = rng.uniform(-3, 3, size=(k, 2))
        a = rng.uniform(0, 2 * np.pi)
        w = np.array([np.cos(a), np.sin(a)])
        s = P @ w - rng.uniform(-1, 1)
        keep = np.abs(s) > 0.2
        P, s = P[keep], s[keep]
        y = np.where(s > 0, 1.0, -1.0)
        if (y > 0).any() and (y < 0).any():
            return P, y


class TestTwoPoint:
    def test_exact(self):
        m = train(X=embed([[0, 0], [2, 0]]), y=[-1, 1], standardize=False)
        assert m.psi.tolist() == [1.0, 0, 0, 0, 0, 0, 0]
        assert m.gamma == -1.0
        assert m.margin() == 2.0
        assert m.mu.tolist() == [0.5, 0.5]

    def test_brute_force_grid(self):
        # any (psi, gamma) meeting both constraints has ||psi|| >= 1
        best = min(abs(p) for p in np.linspace(-3, 3, 601) for g in np.linspace(-3, 3, 601)
                   if -(0 * p + g) >= 1 and (2 * p + g) >= 1)
        assert best == pytest.approx(1.0)


def test_margin_oracle_and_kkt():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        P, y = separable_instance(rng)
        m = train(X=embed(P), y=y, standardize=False)
        ref = oracle_psi_norm(P, y)
        assert np.linalg.norm(m.psi) == pytest.approx(ref, rel=1e-3)
        r = kkt_residuals(m, embed(P), y)
        assert r["min_mu"] >= -1e-12
        assert r["balance"] < 1e-6 and r["stationarity"] < 1e-6
        assert r["slackness"] < 1e-6 and r["primal"] < 1e-6
        assert (np.sign(m.decision(embed(P))) == y).all()


def test_xor_not_separable():
    X = embed([[0, 0], [1, 1], [0, 1], [1, 0]])
    with pytest.raises(NonSeparableError) as exc:
        train(X=X, y=[1, 1, -1, -1])
    i, j = exc.value.pair
    assert i in (0, 1) and j in (2, 3)


def test_soft_margin_on_xor():
    X = embed([[0, 0], [1, 1], [0, 1], [1, 0]])
    m = train(X=X, y=[1, 1, -1, -1], penalty=1.0)
    assert (m.mu <= 1.0 + 1e-9).all() and m.metadata["soft_margin"]


@pytest.mark.parametrize("labels", [[1, 1], [-1, -1, -1]])
def test_single_class(labels):
    with pytest.raises(TrainingError):
        train(X=np.ones((len(labels), 7)), y=labels)


def test_samples_api():
    s = [LabeledSample((0,) * 7, -1), LabeledSample((2,) + (0,) * 6, 1)]
    assert train(s, standardize=False).gamma == -1.0
    with pytest.raises(ValueError):
        LabeledSample((0,) * 7, 0)
    with pytest.raises(ValueError):
        LabeledSample((0,) * 6, 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 20))
def test_scaling_invariance(seed, c):
    P, y = separable_instance(np.random.default_rng(seed))
    a = train(X=embed(P), y=y, standardize=False)
    b = train(X=embed(P * c), y=y, standardize=False)
    assert np.allclose(b.psi, a.psi / c, rtol=1e-6, atol=1e-9)
    Q = np.random.default_rng(seed + 1).uniform(-3, 3, size=(20, 2))
    da, db = a.decision(embed(Q)), b.decision(embed(Q * c))
    clear = np.abs(da) > 1e-6
    assert (np.sign(da[clear]) == np.sign(db[clear])).all()


def test_interior_point_keeps_predictions():
    P = np.array([[0, 0], [0, 1], [4, 0], [4, 1]], float)
    y = np.array([-1, -1, 1, 1.0])
    a = train(X=embed(P), y=y, standardize=False)
    # add a point far on the correct side (outside the margin band: not a support vector)
    b = train(X=embed(np.vstack([P, [[6, 0.5]]])), y=np.append(y, 1), standardize=False)
    Q = embed(np.random.default_rng(0).uniform(-2, 6, size=(200, 2)))
    assert (np.sign(a.decision(Q)) == np.sign(b.decision(Q))).all()


class TestPrediction:
    model = SvmModel(np.array([0, 0, 0, 1.0, 0, 0, 0]), -2.5)

    def test_sign(self):
        x = np.zeros(7)
        x[3] = 4
        assert predict(self.model, x) == 1
        x[3] = 1
        assert predict(self.model, x) == -1

    def test_tie_is_trusted(self):
        x = np.zeros(7)
        x[3] = 2.5
        assert predict(self.model, x) == -1

    def test_untrained(self):
        with pytest.raises(ModelStateError):
            predict(SvmModel(), np.zeros(7))
        with pytest.raises(ModelStateError):
            predict(None, np.zeros(7))

    def test_margin_distance(self):
        m = SvmModel(np.array([1.0, 0, 0, 0, 0, 0, 0]), 0.0)
        assert margin_distance(m, np.array([3.0, 0, 0, 0, 0, 0, 0])) == 3.0
        assert margin_distance(m, np.zeros(7)) == 0.0
        with pytest.raises(ModelStateError):
            margin_distance(SvmModel(np.zeros(7), 1.0), np.zeros(7))

    def test_support_vector_distance(self):
        m = train(X=embed([[0, 0], [1, 3], [5, 1]]), y=[-1, -1, 1], standardize=False)
        sv = np.flatnonzero(m.mu > 1e-9)
        for r in sv:
            x = embed([[0, 0], [1, 3], [5, 1]])[r]
            assert margin_distance(m, x) == pytest.approx(m.margin() / 2, rel=1e-9)


class TestFeatures:
    def test_projection(self):
        r = ExperienceRecord(1, 0, 0.7, 0.8, 10, 2, 50, 30, 0.9)
        assert dbp.extract_features(r).tolist() == [0.7, 0.8, 10, 2, 50, 30, 0.9]

    def test_newcomer(self):
        assert dbp.newcomer_features(0.5, 12, 40).tolist() == [0.5, 0.5, 0, 0, 12, 40, 1.0]

    def test_latest_features_mixes_sources(self):
        sc = SideChain(3, 2)
        sc.authorize([0])
        sc.append_block([ExperienceRecord(0, 0, 0.7, 0.8, 4, 1, 9, 9, 0.2)], 0, 0)
        sc.append_block([ExperienceRecord(0, 1, 0.9, 0.85, 5, 1, 9, 9, 1.0)], 0, 1)
        X = dbp.latest_features(sc, [0, 2], 0, L_j=11, N_j=33)
        # per-chain fields from chain 0, per-user fields from the newest record
        assert X[0].tolist() == [0.7, 0.85, 5, 1, 11, 33, 0.2]
        assert X[1].tolist() == [0.5, 0.5, 0, 0, 11, 33, 1.0]

    def test_detect_intensive(self):
        sc = SideChain(3, 1)
        sc.authorize([0])
        sc.append_block([ExperienceRecord(0, 0, 0.7, 0.8, 4, 3, 9, 9, 0.0),
                         ExperienceRecord(1, 0, 0.9, 0.9, 8, 0, 9, 9, 1.0)], 0, 0)
        m = SvmModel(np.array([0, 0, 0, 1.0, 0, 0, 0]), -0.5)
        assert dbp.detect_intensive({0, 1, 2}, 0, m, sc, 9, 9) == {0}
        assert dbp.detect_intensive(set(), 0, m, sc, 9, 9) == set()


def test_scaler_clips_drift():
    X = np.array([[0.0] * 7, [1.0] * 7])
    s = Scaler.fit(X)
    Z = s.transform(np.full((1, 7), 50.0))
    assert np.allclose(Z, s.hi)


def test_model_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 7))
    y = np.where(X[:, 3] > 0, 1.0, -1.0)
    m = train(X=X, y=y, penalty=10.0)
    m.save(tmp_path / "m.json")
    back = SvmModel.load(tmp_path / "m.json")
    Q = rng.normal(size=(30, 7)) * 5
    assert np.array_equal(back.decision(Q), m.decision(Q))
