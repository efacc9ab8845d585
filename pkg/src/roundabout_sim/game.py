"""Finite sequential game over acceleration strategies.

Each decision round is a perfect-information sequential game: players move in
a fixed order, every player sees the choices made before it, and each picks
the strategy minimising its own discounted cost given that all later players
will do the same.  The solution is the subgame-perfect equilibrium found by
backward induction; ties always resolve to the earliest strategy in the
canonical alphabet order, so the outcome is deterministic.

A strategy is a horizon-long acceleration schedule.  The alphabet used here
varies only the first stage — brake hard, brake, coast, accelerate, floor it
— and coasts afterwards, which matches receding-horizon execution where only
the first stage is ever applied.

Two solvers are provided: ``solve`` walks the game tree lazily through a
payoff callable (one evaluation per leaf), while ``tensor_equilibrium`` runs
the same induction as vectorised argmin/gather passes over precomputed cost
tensors with one axis per player.  They agree exactly on identical payoffs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Tuple

import numpy as np

__all__ = [
    "DEFAULT_ACCELS",
    "GameParams",
    "SequentialGame",
    "build_strategies",
    "order_players",
    "solve",
    "tensor_equilibrium",
]

#: first-stage acceleration alphabet [m/s^2]
DEFAULT_ACCELS = (-50.0, -10.0, 0.0, 10.0, 30.0)


@dataclass(frozen=True)
class GameParams:
    """Shape of the decision game."""

    horizon: int = 4
    strategy_accels: tuple = DEFAULT_ACCELS

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2 for strategies to matter")
        if len(self.strategy_accels) < 2:
            raise ValueError("need at least two strategies")

    def strategies(self) -> np.ndarray:
        return build_strategies(self.strategy_accels, self.horizon)


def build_strategies(accels: Sequence[float] = DEFAULT_ACCELS, horizon: int = 4) -> np.ndarray:
    """(S, horizon) schedule matrix: one acceleration now, coast afterwards."""
    out = np.zeros((len(accels), horizon))
    out[:, 0] = accels
    return out


def order_players(weights: Mapping[int, float]) -> list:
    """Decision order: most aggressive first, ties to the lower id."""
    return sorted(weights, key=lambda vid: (-weights[vid], vid))


@dataclass
class SequentialGame:
    """Game tree described by a leaf-payoff callable.

    ``players`` lists ids in decision order; ``payoff`` maps a full strategy
    profile (indices, decision order) to the per-player cost vector in the
    same order.
    """

    players: Sequence[int]
    n_strategies: Sequence[int]
    payoff: Callable[[Tuple[int, ...]], Sequence[float]]
    evaluations: int = field(default=0, init=False)

    def __post_init__(self):
        if len(self.players) != len(self.n_strategies):
            raise ValueError("one strategy count per player required")


def solve(game: SequentialGame):
    """Backward-induction equilibrium by lazy depth-first search.

    Evaluates the payoff callable exactly ``prod(n_strategies)`` times (once
    per leaf).  Returns ``(profile, payoffs)`` with both in decision order.
    Ties at any node keep the earliest strategy.
    """
    K = len(game.players)

    def descend(prefix):
        k = len(prefix)
        if k == K:
            game.evaluations += 1
            return prefix, np.asarray(game.payoff(prefix), dtype=float)
        best = None
        for s in range(game.n_strategies[k]):
            cand = descend(prefix + (s,))
            if best is None or cand[1][k] < best[1][k]:
                best = cand
        return best

    profile, payoffs = descend(())
    return profile, payoffs


def tensor_equilibrium(costs: Sequence[np.ndarray], order: Sequence[int]):
    """Backward induction over per-player cost tensors.

    ``costs[p]`` has one axis per player (axis ``p`` is player ``p``'s own
    strategy); ``order`` lists the player axes in decision order.  Returns
    ``(profile, payoffs)`` indexed by axis (player), not by decision order.
    """
    K = len(costs)
    if sorted(order) != list(range(K)):
        raise ValueError("order must be a permutation of the player axes")
    cur = list(costs)
    chosen = {}
    for k in reversed(range(K)):
        ax = order[k]
        idx = np.argmin(cur[ax], axis=ax, keepdims=True)  # first minimum wins
        chosen[ax] = idx
        cur = [np.take_along_axis(c, idx, axis=ax) for c in cur]
    profile = {}
    for k in range(K):
        ax = order[k]
        at = tuple(profile.get(a, 0) for a in range(K))
        profile[ax] = int(chosen[ax][at])
    prof = tuple(profile[a] for a in range(K))
    payoffs = np.array([float(costs[p][prof]) for p in range(K)])
    return prof, payoffs
