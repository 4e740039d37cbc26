"""Trusted miner selection: network miners, per-chain miners and chain leaders.

User sets are passed around as sorted ``int64`` arrays. Every selection pads
with uniformly random, not-yet-selected users until the set holds the
smallest integer strictly above half of its reference population.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class LeaderElectionError(RuntimeError):
    pass


def majority_size(m: int) -> int:
    """Smallest integer strictly greater than m / 2."""
    return m // 2 + 1


def _pad(rng, selected: np.ndarray, pool: np.ndarray, target: int) -> np.ndarray:
    missing = target - selected.size
    if missing <= 0:
        return selected
    rest = np.setdiff1d(pool, selected, assume_unique=True)
    if rest.size == 0:
        return selected
    extra = rng.choice(rest, size=min(missing, rest.size), replace=False)
    return np.sort(np.concatenate([selected, extra]))


def select_network_miners(users, trust, theta: float, rng) -> np.ndarray:
    """Users with trust >= theta, padded at random until the set exceeds n/2."""
    users = np.asarray(users, dtype=np.int64)
    trust = np.asarray(trust, dtype=float)
    qualified = users[trust >= theta]
    return _pad(rng, qualified, users, majority_size(users.size))


def refresh_network_miners(current, trust_all, theta: float, rng) -> tuple[np.ndarray, bool]:
    """Drop members below theta; reselect from scratch if at most n/2 remain.

    ``trust_all`` is indexed by user id and covers the whole population.
    Returns the new set and whether a full reselection ran.
    """
    trust_all = np.asarray(trust_all, dtype=float)
    n = trust_all.size
    current = np.asarray(current, dtype=np.int64)
    kept = current[trust_all[current] >= theta]
    if kept.size > n / 2:
        return kept, False
    return select_network_miners(np.arange(n), trust_all, theta, rng), True


def select_chain_miners(active, net_mask, lt, theta: float, m_j: int, rng,
                        flagged=None, enforce_rule4: bool = False) -> tuple[np.ndarray, int]:
    """Chain miners for one chain.

    ``active`` is the chain's active users; ``net_mask``, ``lt`` and ``flagged``
    are indexed by user id (``flagged`` marks a +1 behaviour prediction).
    Qualified users are active network miners with lt >= theta and no flag;
    padding draws from the active users (network miners only when
    ``enforce_rule4``). Returns the set and the number of qualified members.
    """
    active = np.asarray(active, dtype=np.int64)
    ok = net_mask[active] & (lt[active] >= theta)
    if flagged is not None:
        ok &= ~flagged[active]
    qualified = active[ok]
    pool = active[net_mask[active]] if enforce_rule4 else active
    return _pad(rng, qualified, pool, majority_size(m_j)), int(qualified.size)


def elect_leader(members, fal, lt) -> int:
    """Member with no false block on the chain and the highest local trust.

    Ties go to the lowest user id. If every member has a false block the
    highest local trust over all members wins.
    """
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise LeaderElectionError("cannot elect a leader from an empty chain-miner set")
    clean = members[fal[members] == 0]
    if clean.size == 0:
        log.warning("every chain miner has a false block; electing over the full set")
        clean = members
    # members are sorted, so argmax returns the lowest id among ties
    return int(clean[int(np.argmax(lt[clean]))])


@dataclass
class MinerSets:
    theta_net: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    theta_chain: dict = field(default_factory=dict)
    leader: dict = field(default_factory=dict)
    leader_term: dict = field(default_factory=dict)

    def net_mask(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        mask[self.theta_net] = True
        return mask

    def refresh_leader(self, chain_id: int, fal, lt, term: int) -> bool:
        """Re-elect when the leader has a false block, left the set, or its term ran out.

        Returns True when an election took place.
        """
        members = self.theta_chain[chain_id]
        current = self.leader.get(chain_id)
        remaining = self.leader_term.get(chain_id, 0)
        stale = (current is None or remaining <= 0 or fal[current] >= 1
                 or not np.isin(current, members))
        if stale:
            self.leader[chain_id] = elect_leader(members, fal, lt)
            self.leader_term[chain_id] = term
        self.leader_term[chain_id] -= 1
        return stale
