"""Agent behaviour: honest users, ordinary attackers and the two DMB attacker kinds.

DMB attackers split chains into kill-chains (sabotage targets) and
mask-chains (where they behave to keep trust up). Attack phases use two
thresholds, ``theta + xi1`` (warning line) and ``theta + xi2`` (high line),
so a Boosting -> Attacking switch needs a climb of ``xi2 - xi1``.

* NormalDMB: one global phase driven by global trust. Kill-chains always get
  false blocks; with ``boost_on_kill`` a Boosting attacker instead behaves
  honestly everywhere until its global trust recovers.
* IntensiveDMB: one phase per kill-chain driven by local trust on that chain.
  Attacking alternates true/false (true first); Boosting creates true blocks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError


class Kind(enum.IntEnum):
    HONEST = 0
    ORDINARY = 1
    NORMAL_DMB = 2
    INTENSIVE_DMB = 3


class Action(enum.Enum):
    CREATE_TRUE = True
    CREATE_FALSE = False


class Phase(enum.Enum):
    ATTACKING = "Attacking"
    BOOSTING = "Boosting"


@dataclass
class BehaviorProfile:
    kind: Kind
    kill_chains: frozenset = frozenset()
    phase: Phase = Phase.ATTACKING  # NormalDMB only
    chain_phase: dict = field(default_factory=dict)  # IntensiveDMB, per kill-chain
    alternation_state: dict = field(default_factory=dict)  # True -> next alternating action is false

    def __post_init__(self):
        self.kind = Kind(self.kind)
        self.kill_chains = frozenset(self.kill_chains)
        if self.kind in (Kind.HONEST, Kind.ORDINARY) and self.kill_chains:
            raise ValueError(f"{self.kind.name} profiles carry no kill-chains")

    def inverts_on(self, chain_id: int) -> bool:
        """Whether this agent votes against the truth when validating on ``chain_id``."""
        if self.kind == Kind.ORDINARY:
            return True
        return self.kind != Kind.HONEST and chain_id in self.kill_chains


def _next_phase(phase: Phase, trust: float, low: float, high: float) -> Phase:
    if phase is Phase.ATTACKING and trust <= low:
        return Phase.BOOSTING
    if phase is Phase.BOOSTING and trust >= high:
        return Phase.ATTACKING
    return phase


def decide_action(profile: BehaviorProfile, chain_id: int, gt: float, lt: float,
                  theta: float, xi1: float, xi2: float, boost_on_kill: bool = False) -> Action:
    """Decide whether the agent creates a true or a false block on ``chain_id``.

    Mutates the profile's phase / alternation state.
    """
    low, high = theta + xi1, theta + xi2
    kind = profile.kind
    if kind == Kind.HONEST:
        return Action.CREATE_TRUE
    if kind == Kind.ORDINARY:
        return Action.CREATE_FALSE
    if kind == Kind.NORMAL_DMB:
        profile.phase = _next_phase(profile.phase, gt, low, high)
        if chain_id in profile.kill_chains and not (boost_on_kill and profile.phase is Phase.BOOSTING):
            return Action.CREATE_FALSE
        return Action.CREATE_TRUE
    # intensive
    if chain_id not in profile.kill_chains:
        return Action.CREATE_TRUE
    phase = _next_phase(profile.chain_phase.get(chain_id, Phase.ATTACKING), lt, low, high)
    profile.chain_phase[chain_id] = phase
    if phase is Phase.BOOSTING:
        return Action.CREATE_TRUE
    next_false = profile.alternation_state.get(chain_id, False)
    profile.alternation_state[chain_id] = not next_false
    return Action.CREATE_FALSE if next_false else Action.CREATE_TRUE


def assign_kill_chains(rng: np.random.Generator, h: int, k: int) -> frozenset:
    if not 0 <= k <= h:
        raise ConfigError(f"kill-chain count {k} must lie in [0, {h}]")
    return frozenset(int(c) for c in rng.choice(h, size=k, replace=False))


class Population:
    """Array-backed behaviour state for every user; the engine's fast path.

    Produces the same decisions as calling :func:`decide_action` on one
    :class:`BehaviorProfile` per user.
    """

    def __init__(self, kinds, kill_mask, boost_on_kill: bool = False):
        self.boost_on_kill = boost_on_kill
        self.kinds = np.asarray(kinds, dtype=np.int8)
        self.kill = np.asarray(kill_mask, dtype=bool)
        n, h = self.kill.shape
        dmb = np.isin(self.kinds, (Kind.NORMAL_DMB, Kind.INTENSIVE_DMB))
        if np.any(self.kill[~dmb]):
            raise ValueError("only DMB attackers may hold kill-chains")
        self.normal_boost = np.zeros(n, dtype=bool)
        self.chain_boost = np.zeros((n, h), dtype=bool)
        self.next_false = np.zeros((n, h), dtype=bool)

    @property
    def n(self) -> int:
        return self.kinds.size

    def of_kind(self, kind: Kind) -> np.ndarray:
        return np.flatnonzero(self.kinds == kind)

    def inverts(self, users, chain_id: int) -> np.ndarray:
        k = self.kinds[users]
        return (k == Kind.ORDINARY) | ((k >= Kind.NORMAL_DMB) & self.kill[users, chain_id])

    def decide(self, users, chain_id: int, gt, lt, theta, xi1, xi2) -> np.ndarray:
        """Return a boolean array, True where the user creates a true block.

        ``users`` must not contain duplicates.
        """
        users = np.asarray(users, dtype=np.int64)
        gt = np.asarray(gt, dtype=float)
        lt = np.asarray(lt, dtype=float)
        low, high = theta + xi1, theta + xi2
        k = self.kinds[users]
        on_kill = self.kill[users, chain_id]
        out = k != Kind.ORDINARY

        nm = k == Kind.NORMAL_DMB
        if nm.any():
            u = users[nm]
            boost = self.normal_boost[u]
            boost = np.where(boost, gt[nm] < high, gt[nm] <= low)
            self.normal_boost[u] = boost
            out[nm] = (boost & self.boost_on_kill) | ~on_kill[nm]

        im = (k == Kind.INTENSIVE_DMB) & on_kill
        if im.any():
            u = users[im]
            boost = self.chain_boost[u, chain_id]
            boost = np.where(boost, lt[im] < high, lt[im] <= low)
            self.chain_boost[u, chain_id] = boost
            nf = self.next_false[u, chain_id]
            alternating = ~boost
            self.next_false[u, chain_id] = np.where(alternating, ~nf, nf)
            out[im] = boost | ~nf
        return out

    def profile(self, user_id: int) -> BehaviorProfile:
        """Snapshot one user's state as a :class:`BehaviorProfile`."""
        kind = Kind(int(self.kinds[user_id]))
        kills = frozenset(int(c) for c in np.flatnonzero(self.kill[user_id]))
        p = BehaviorProfile(kind, kills if kind >= Kind.NORMAL_DMB else frozenset())
        if kind == Kind.NORMAL_DMB:
            p.phase = Phase.BOOSTING if self.normal_boost[user_id] else Phase.ATTACKING
        if kind == Kind.INTENSIVE_DMB:
            for c in kills:
                p.chain_phase[c] = Phase.BOOSTING if self.chain_boost[user_id, c] else Phase.ATTACKING
                p.alternation_state[c] = bool(self.next_false[user_id, c])
        return p
