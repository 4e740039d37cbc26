"""Cycle-based simulation: every chain runs one round of block creation per cycle.

A round samples generators from the chain's trusted miners, lets a disjoint
sample of validators vote on each block, and asks the chain leader to
confirm. The trust ledger and the side chain are updated after every round.
"""

from __future__ import annotations

import logging
import time
from collections import defaultdict

import numpy as np

from . import dbp
from .behaviors import Kind, Population, assign_kill_chains
from .config import ConfigError, SimConfig
from .metrics import MetricsSeries, RoundOutcome, compute_metrics
from .selection import (MinerSets, majority_size, refresh_network_miners,
                        select_chain_miners, select_network_miners)
from .sidechain import RECORD_DTYPE, SideChain
from .trust import TrustLedger

log = logging.getLogger(__name__)

_KIND_ORDER = (("ordinary", Kind.ORDINARY), ("normal_dmb", Kind.NORMAL_DMB),
               ("intensive_dmb", Kind.INTENSIVE_DMB))
MAJORITY_K_GEN = 3


def assign_kinds(rng, n: int, fractions: dict) -> np.ndarray:
    """Random kind per user; attacker counts are the rounded fractions of n."""
    kinds = np.full(n, Kind.HONEST, dtype=np.int8)
    perm = rng.permutation(n)
    start = 0
    for name, kind in _KIND_ORDER:
        count = int(round(float(fractions.get(name, 0.0)) * n))
        count = min(count, n - start)
        kinds[perm[start:start + count]] = kind
        start += count
    return kinds


def _distinct_rows(rng, P: int, B: int, V: int) -> np.ndarray:
    """B rows of V distinct indices in [0, P)."""
    idx = rng.integers(0, P, size=(B, V))
    if V > 1:
        s = np.sort(idx, axis=1)
        bad = np.flatnonzero((s[:, 1:] == s[:, :-1]).any(axis=1))
        for b in bad:
            idx[b] = rng.choice(P, size=V, replace=False)
    return idx


def tally(truth, inverts, leader_inverts: bool):
    """Votes, feedback and acceptance for a batch of blocks.

    ``inverts`` is (B, V): True where the validator votes against the truth.
    A block is accepted when a strict majority votes true and the leader
    confirms; a leader that inverts on this chain confirms only false blocks.
    """
    truth = np.asarray(truth, dtype=bool)
    votes = truth[:, None] ^ np.asarray(inverts, dtype=bool)
    yes = votes.sum(axis=1)
    V = votes.shape[1]
    confirm = ~truth if leader_inverts else np.ones(truth.size, dtype=bool)
    return votes, yes / V, (2 * yes > V) & confirm


class Simulation:
    """Mutable state of one run. ``model`` optionally supplies a pre-trained classifier."""

    def __init__(self, config: SimConfig, model: dbp.SvmModel | None = None,
                 keep_ids: bool = False):
        cfg = config.validate()
        self.cfg = cfg
        self.keep_ids = keep_ids
        self.rng = np.random.default_rng(cfg.rng_seed)
        n, h = cfg.n_users, cfg.n_chains
        self.n, self.h = n, h

        kinds = assign_kinds(self.rng, n, cfg.attacker_fractions)
        kill = np.zeros((n, h), dtype=bool)
        dmb = np.flatnonzero(kinds >= Kind.NORMAL_DMB)
        if cfg.shared_kill_chains:
            self.kill_chains = sorted(assign_kill_chains(self.rng, h, cfg.kill_chain_count))
            kill[np.ix_(dmb, self.kill_chains)] = True
        else:
            for u in dmb:
                kill[u, sorted(assign_kill_chains(self.rng, h, cfg.kill_chain_count))] = True
            self.kill_chains = sorted(int(c) for c in np.flatnonzero(kill.any(axis=0)))
        self.population = Population(kinds, kill, cfg.normal_boost_on_kill)
        self.ledger = TrustLedger(n, h, cfg.theta)
        self.sidechain = SideChain(n, h, cfg.theta, cfg.sidechain_capacity_mb, cfg.feedback_window)
        self.miners = MinerSets()
        self.chain_length = np.zeros(h, dtype=np.int64)
        self.active_counts: list[list[int]] = [[] for _ in range(h)]

        self.use_dbp = cfg.scheme == "PoDT"
        self.model = model
        self.flagged_ever = np.zeros(n, dtype=bool)
        self.events: list[str] = []

        self.cycle = 0
        self.outcomes: list[list[RoundOutcome]] = []
        self.wall_times: list[float] = []
        self.chain_sizes: list[int] = []
        self.checks = {"network_selections": 0, "network_violations": 0,
                       "chain_selections": 0, "chain_violations": 0, "skipped_rounds": 0}
        self.tracked = {name: int(np.flatnonzero(kinds == kind)[0])
                        for name, kind in _KIND_ORDER if np.any(kinds == kind)}
        self.traces: dict[str, list[float]] = defaultdict(list)

    # -- helpers -------------------------------------------------------------
    @property
    def kinds(self) -> np.ndarray:
        return self.population.kinds

    def _active(self, chain_id: int) -> np.ndarray:
        if self.cfg.activity_rate >= 1.0:
            return np.arange(self.n, dtype=np.int64)
        return np.flatnonzero(self.rng.random(self.n) < self.cfg.activity_rate)

    def _m_j(self, chain_id: int, active_count: int) -> int:
        hist = self.active_counts[chain_id]
        hist.append(active_count)
        window = hist[-self.cfg.m_window:] if self.cfg.m_window else hist
        return max(window)

    def _refresh_network(self, gt_all) -> np.ndarray:
        cfg = self.cfg
        if cfg.scheme in ("AllMiners", "RandomMiners"):
            self.miners.theta_net = np.arange(self.n, dtype=np.int64)
        else:
            trust = self.ledger.baseline_trust_all() if cfg.scheme == "Baseline" else gt_all
            if self.miners.theta_net.size == 0:
                self.miners.theta_net = select_network_miners(np.arange(self.n), trust,
                                                              cfg.theta, self.rng)
            else:
                self.miners.theta_net, _ = refresh_network_miners(self.miners.theta_net, trust,
                                                                  cfg.theta, self.rng)
        self.checks["network_selections"] += 1
        if not self.miners.theta_net.size > self.n / 2:
            self.checks["network_violations"] += 1
        return self.miners.net_mask(self.n)

    def _flags(self, chain_id, active, net_mask, lt, N_j, gt_all) -> np.ndarray | None:
        if not (self.use_dbp and self.model is not None):
            return None
        phi1 = (gt_all >= self.cfg.theta) & (self.ledger.low_counts_all() == 0)
        cand = active[net_mask[active] & (lt[active] >= self.cfg.theta) & phi1[active]]
        flagged = np.zeros(self.n, dtype=bool)
        if cand.size:
            X = dbp.latest_features(self.sidechain, cand, chain_id, int(self.chain_length[chain_id]),
                                    N_j, self.cfg.feedback_mode)
            flagged[cand[self.model.decision(X) > 0]] = True
        self.flagged_ever |= flagged
        return flagged

    def _chain_miners(self, chain_id, active, net_mask, m_j, gt_all):
        cfg = self.cfg
        if cfg.scheme == "AllMiners":
            return active
        if cfg.scheme == "RandomMiners":
            k = min(majority_size(m_j), active.size)
            return np.sort(self.rng.choice(active, size=k, replace=False))
        if cfg.scheme == "Baseline":
            gate = self.ledger.baseline_trust_all()
        else:
            gate = self.ledger.local_trust_column(chain_id)
        flagged = self._flags(chain_id, active, net_mask, gate, active.size, gt_all)
        chosen, _ = select_chain_miners(active, net_mask, gate, cfg.theta, m_j, self.rng,
                                        flagged, cfg.enforce_rule4)
        return chosen

    def _leader_inputs(self, chain_id):
        if self.cfg.scheme == "Baseline":
            return self.ledger.total_false(), self.ledger.baseline_trust_all()
        return self.ledger.fal[:, chain_id], self.ledger.local_trust_column(chain_id)

    def _n_blocks(self, active_count: int) -> tuple[int, int]:
        """(blocks, generators per block) for one round."""
        cfg = self.cfg
        if cfg.block_mode == "majority":
            return 1, cfg.k_gen or MAJORITY_K_GEN
        if cfg.k_gen is not None:
            return cfg.k_gen, 1
        return max(1, int(round(cfg.gen_fraction * active_count))), 1

    # -- one round -------------------------------------------------------------
    def run_round(self, chain_id: int) -> RoundOutcome:
        cfg = self.cfg
        j = chain_id
        pop, ledger = self.population, self.ledger
        kill_chain = j in self.kill_chains
        active = self._active(j)
        m_j = self._m_j(j, active.size)
        gt_all = ledger.global_trust_all()
        net_mask = self._refresh_network(gt_all)

        theta_chain = self._chain_miners(j, active, net_mask, m_j, gt_all)
        self.miners.theta_chain[j] = theta_chain
        self.checks["chain_selections"] += 1
        if not theta_chain.size > m_j / 2:
            self.checks["chain_violations"] += 1
        if theta_chain.size < 2:
            log.warning("chain %d: %d chain miners, round skipped", j, theta_chain.size)
            self.checks["skipped_rounds"] += 1
            return RoundOutcome.skipped_round(j, kill_chain)

        fal, rank = self._leader_inputs(j)
        self.miners.refresh_leader(j, fal, rank, cfg.leader_term)
        leader = self.miners.leader[j]

        # generation
        B, g = self._n_blocks(active.size)
        size = theta_chain.size
        if B * g >= size:
            if g > 1:
                g = size - 1
            else:
                B = size - 1
        gens = self.rng.choice(theta_chain, size=B * g, replace=False)
        lt_col = ledger.local_trust_column(j)
        intents = pop.decide(gens, j, gt_all[gens], lt_col[gens],
                             cfg.theta, cfg.xi1, cfg.xi2).reshape(B, g)
        gens = gens.reshape(B, g)
        truth = 2 * intents.sum(axis=1) > g

        # validation
        pool = np.setdiff1d(theta_chain, gens.ravel(), assume_unique=True)
        if cfg.scheme == "AllMiners":
            V, fanout = pool.size, size
            validators = np.broadcast_to(pool, (B, V))
            inverts = np.broadcast_to(pop.inverts(pool, j), (B, V))
        else:
            V, fanout = min(cfg.k_val, pool.size), 1
            validators = pool[_distinct_rows(self.rng, pool.size, B, V)]
            inverts = pop.inverts(validators, j)
        _, feedback, accepted = tally(truth, inverts, bool(pop.inverts(np.array([leader]), j)[0]))

        # bookkeeping
        ledger.record_blocks(gens.ravel(), j, np.repeat(truth, g))
        self.chain_length[j] += int(accepted.sum())
        self._append_experience(gens, j, feedback, active.size, leader, theta_chain)

        messages = B * size + B * V * fanout + active.size
        replicas = self.n if cfg.scheme == "AllMiners" else size
        self.chain_sizes.append(size)
        return RoundOutcome(j, gens, validators, leader, truth, accepted, feedback, int(messages),
                            intents, pop.kinds[gens], replicas, kill_chain)

    def _append_experience(self, gens, chain_id, feedback, N_j, leader, theta_chain):
        users = gens.ravel()
        ledger = self.ledger
        t_tot = ledger.tru[users].sum(axis=1)
        f_tot = ledger.fal[users].sum(axis=1)
        rec = np.zeros(users.size, dtype=RECORD_DTYPE)
        rec["user_id"] = users
        rec["chain_id"] = chain_id
        rec["lt"] = ledger.local_trust_column(chain_id)[users]
        rec["gt"] = (t_tot + ledger.theta) / (t_tot + f_tot + 1)
        rec["t"] = t_tot
        rec["f"] = f_tot
        rec["L"] = self.chain_length[chain_id]
        rec["N"] = N_j
        rec["F"] = np.repeat(feedback, gens.shape[1])
        self.sidechain.authorize(np.union1d(self.miners.theta_net, theta_chain))
        self.sidechain.append_block(rec, leader, chain_id)

    # -- behaviour prediction ------------------------------------------------
    def training_set(self, labels: str = "truth"):
        """Feature rows and labels from the side chain for trustworthy users.

        ``labels="truth"`` uses each user's real kind (honest -1, intensive +1,
        others skipped); ``labels="feedback"`` marks +1 any user whose recent
        blocks on the chain include one the validators voted down.
        """
        phi1 = self.ledger.trustworthy_mask()
        if labels == "truth":
            keep = phi1 & np.isin(self.kinds, (Kind.HONEST, Kind.INTENSIVE_DMB))
        else:
            keep = phi1
        Xs, ys = [], []
        for j in range(self.h):
            users = np.flatnonzero(keep & ~np.isnan(self.sidechain.last_lt[:, j]))
            if users.size == 0:
                continue
            N_j = self.active_counts[j][-1] if self.active_counts[j] else self.n
            Xs.append(dbp.latest_features(self.sidechain, users, j, int(self.chain_length[j]),
                                          N_j, self.cfg.feedback_mode))
            if labels == "truth":
                ys.append(np.where(self.kinds[users] == Kind.INTENSIVE_DMB, 1.0, -1.0))
            else:
                ys.append(np.where(self.sidechain.feedback_min(users, j) < 0.5, 1.0, -1.0))
        if not Xs:
            return np.zeros((0, dbp.N_FEATURES)), np.zeros(0)
        X, y = np.vstack(Xs), np.concatenate(ys)
        if y.size > self.cfg.svm_max_samples:
            idx = np.sort(self.rng.choice(y.size, self.cfg.svm_max_samples, replace=False))
            X, y = X[idx], y[idx]
        return X, y

    def fit_model(self, labels: str = "truth") -> dbp.SvmModel | None:
        X, y = self.training_set(labels)
        try:
            try:
                model = dbp.train(X=X, y=y)
            except dbp.NonSeparableError as exc:
                msg = (f"cycle {self.cycle}: hard margin infeasible on {y.size} samples; "
                       f"soft margin with C={self.cfg.svm_penalty}")
                log.info("%s (%s)", msg, exc)
                self.events.append(msg)
                model = dbp.train(X=X, y=y, penalty=self.cfg.svm_penalty)
        except dbp.TrainingError as exc:
            self.events.append(f"cycle {self.cycle}: behaviour model not trained ({exc})")
            log.warning("behaviour model not trained: %s", exc)
            return self.model
        self.events.append(f"cycle {self.cycle}: behaviour model trained on {y.size} samples "
                           f"({int((y > 0).sum())} positive)")
        self.model = model
        return model

    # -- cycles ----------------------------------------------------------------
    def run_cycle(self) -> list[RoundOutcome]:
        t0 = time.perf_counter()
        rounds = [self.run_round(j) for j in range(self.h)]
        self.cycle += 1
        cfg = self.cfg
        if self.use_dbp:
            calib = cfg.calibration_cycles
            if self.model is None and self.cycle == calib:
                self.fit_model("truth")
            elif (cfg.retrain_every and self.cycle > calib
                  and (self.cycle - calib) % cfg.retrain_every == 0):
                self.fit_model("feedback")
        self.wall_times.append(time.perf_counter() - t0)
        self._trace()
        if not self.keep_ids:
            for r in rounds:
                r.validator_ids = r.validator_ids[:, :0]
        self.outcomes.append(rounds)
        return rounds

    def _trace(self):
        gt = self.ledger.global_trust_all()
        for name, u in self.tracked.items():
            self.traces[f"gt_{name}"].append(float(gt[u]))
            if name == "ordinary":
                continue
            for c in np.flatnonzero(self.population.kill[u]):
                self.traces[f"lt_{name}_c{c}"].append(float(self.ledger.local_trust(u, int(c))))

    def run(self) -> MetricsSeries:
        for _ in range(self.cfg.cycles):
            self.run_cycle()
        return self.metrics()

    def metrics(self) -> MetricsSeries:
        detection = None
        if self.use_dbp:
            detection = {"flagged": self.flagged_ever,
                         "intensive": self.kinds == Kind.INTENSIVE_DMB,
                         "honest": self.kinds == Kind.HONEST}
        series = compute_metrics(self.outcomes, self.cfg.block_size_mb, detection, self.wall_times)
        series.traces = {k: np.array(v) for k, v in self.traces.items()}
        s = series.summary
        s["scheme"] = self.cfg.scheme
        s["rng_seed"] = self.cfg.rng_seed
        s["n_users"] = self.n
        s["kill_chains"] = list(self.kill_chains)
        s["mean_chain_miners"] = float(np.mean(self.chain_sizes)) if self.chain_sizes else 0.0
        s["selection_checks"] = dict(self.checks)
        s["sidechain_head"] = self.sidechain.head_hash().hex()
        s["events"] = list(self.events)
        if self.use_dbp and self.model is not None:
            s["model"] = {"psi": [float(v) for v in self.model.psi], "gamma": float(self.model.gamma),
                          **self.model.metadata}
        return series


def run_simulation(config: SimConfig, model: dbp.SvmModel | None = None) -> MetricsSeries:
    return Simulation(config, model).run()


def run_baseline(config: SimConfig) -> MetricsSeries:
    if config.scheme == "PoDT":
        raise ConfigError("run_baseline needs a comparison scheme, not PoDT")
    return run_simulation(config)
