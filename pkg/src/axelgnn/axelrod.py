"""Axelrod's cultural dissemination model on an L x L grid.

Each agent carries ``f`` integer traits in ``{0..q-1}``. A step picks a
random agent ``k`` and a random neighbor ``r``; with probability equal to
their trait overlap ``k`` copies one of the traits where they differ.
The dynamics stop changing once every adjacent pair is either identical or
shares no trait at all.

Randomness is drawn in fixed blocks of four uniforms per step (agent,
neighbor, interaction, trait), so single :meth:`CultureGrid.step` calls and
the batched loop in :meth:`CultureGrid.advance` follow the same trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

_BLOCK = 1 << 16


@dataclass(frozen=True)
class StepOutcome:
    interacted: bool
    copied_dim: int | None = None


@dataclass
class EquilibriumResult:
    steps_taken: int
    reached: bool
    trajectory: list[tuple[int, float, int, bool]] = field(default_factory=list)


def grid_neighbors(L: int, periodic: bool = False, neighborhood: str = "von_neumann") -> list[list[int]]:
    """Neighbor lists for row-major agent ids on an L x L lattice."""
    if neighborhood == "von_neumann":
        offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    elif neighborhood == "moore":
        offsets = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    else:
        raise ValueError(f"unknown neighborhood {neighborhood!r}")
    out = []
    for r in range(L):
        for c in range(L):
            nb = []
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if periodic:
                    rr, cc = rr % L, cc % L
                elif not (0 <= rr < L and 0 <= cc < L):
                    continue
                j = rr * L + cc
                if j != r * L + c and j not in nb:
                    nb.append(j)
            out.append(nb)
    return out


class CultureGrid:
    def __init__(self, L: int, f: int, q: int, seed=None, *, periodic: bool = False,
                 neighborhood: str = "von_neumann", traits=None):
        if L < 1 or f < 1 or q < 1:
            raise ValueError("L, f and q must be positive")
        self.L, self.f, self.q = L, f, q
        self.rng = np.random.default_rng(seed)
        self.neighbors = grid_neighbors(L, periodic, neighborhood)
        if traits is None:
            traits = self.rng.integers(0, q, size=(L * L, f))
        traits = np.asarray(traits)
        if traits.shape != (L * L, f) or traits.min() < 0 or traits.max() >= q:
            raise ValueError("traits must be an (L*L, f) array with values in [0, q)")
        self._traits = [list(map(int, row)) for row in traits]
        pairs = [(i, j) for i, nb in enumerate(self.neighbors) for j in nb if i < j]
        self._pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        self._buf = np.empty(0)
        self._pos = 0
        self.steps = 0

    @property
    def n_agents(self) -> int:
        return self.L * self.L

    @property
    def traits(self) -> np.ndarray:
        return np.array(self._traits, dtype=np.int64)

    def _draws(self, k: int) -> np.ndarray:
        if self._pos + k > len(self._buf):
            rest = self._buf[self._pos:]
            self._buf = np.concatenate([rest, self.rng.random(_BLOCK * 4)])
            self._pos = 0
        out = self._buf[self._pos:self._pos + k]
        self._pos += k
        return out

    def similarity(self, i: int, j: int) -> float:
        a, b = self._traits[i], self._traits[j]
        return sum(x == y for x, y in zip(a, b)) / self.f

    def interact(self, k: int, r: int, u: float, w: float) -> StepOutcome:
        """Let ``k`` interact with ``r`` given uniforms ``u`` (gate) and ``w`` (trait pick)."""
        a, b = self._traits[k], self._traits[r]
        diff = [i for i in range(self.f) if a[i] != b[i]]
        if not u < (self.f - len(diff)) / self.f:
            return StepOutcome(False)
        if not diff:
            return StepOutcome(True)
        d = diff[int(w * len(diff))]
        a[d] = b[d]
        return StepOutcome(True, d)

    def step(self) -> StepOutcome:
        x = self._draws(4)
        k = int(x[0] * self.n_agents)
        nb = self.neighbors[k]
        self.steps += 1
        if not nb:
            return StepOutcome(False)
        r = nb[int(x[1] * len(nb))]
        return self.interact(k, r, x[2], x[3])

    def advance(self, n_steps: int) -> int:
        """Run ``n_steps`` steps; returns how many of them changed a trait."""
        traits, neighbors, f, n = self._traits, self.neighbors, self.f, self.n_agents
        changed = 0
        done = 0
        while done < n_steps:
            chunk = min(n_steps - done, _BLOCK)
            x = self._draws(4 * chunk).tolist()
            for t in range(0, 4 * chunk, 4):
                k = int(x[t] * n)
                nb = neighbors[k]
                if not nb:
                    continue
                a = traits[k]
                b = traits[nb[int(x[t + 1] * len(nb))]]
                diff = [i for i in range(f) if a[i] != b[i]]
                nd = len(diff)
                if nd == 0 or nd == f or not x[t + 2] < (f - nd) / f:
                    continue
                d = diff[int(x[t + 3] * nd)]
                a[d] = b[d]
                changed += 1
            done += chunk
        self.steps += n_steps
        return changed

    def pair_similarities(self) -> np.ndarray:
        t = self.traits
        if len(self._pairs) == 0:
            return np.zeros(0)
        return (t[self._pairs[:, 0]] == t[self._pairs[:, 1]]).sum(axis=1) / self.f

    def mean_similarity(self) -> float:
        s = self.pair_similarities()
        return float(s.mean()) if s.size else 1.0

    def is_equilibrium(self) -> bool:
        s = self.pair_similarities()
        return bool(np.all((s == 0.0) | (s == 1.0)))

    def count_regions(self) -> int:
        """Connected components under "adjacent and culturally identical"."""
        s = self.pair_similarities()
        same = self._pairs[s == 1.0]
        n = self.n_agents
        adj = coo_matrix((np.ones(len(same)), (same[:, 0], same[:, 1])), shape=(n, n))
        return int(connected_components(adj, directed=False)[0])

    def checkpoint(self) -> tuple[int, float, int, bool]:
        return self.steps, self.mean_similarity(), self.count_regions(), self.is_equilibrium()


def trait_similarity(grid: CultureGrid, i: int, j: int) -> float:
    return grid.similarity(i, j)


def run_to_equilibrium(grid: CultureGrid, max_steps: int, check_interval: int | None = None) -> EquilibriumResult:
    """Step until every adjacent pair has similarity 0 or 1, checking every ``check_interval`` steps.

    The state is checked before the first step, so an already-frozen grid
    reports ``steps_taken == 0``.
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    interval = check_interval or 10 * grid.n_agents
    traj = [grid.checkpoint()]
    taken = 0
    while not traj[-1][3] and taken < max_steps:
        chunk = min(interval, max_steps - taken)
        grid.advance(chunk)
        taken += chunk
        traj.append(grid.checkpoint())
    return EquilibriumResult(taken, traj[-1][3], traj)
