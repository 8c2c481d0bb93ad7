"""Planted-structure trajectory generators and exact brute-force information
computations for small discrete systems.

The planted scenarios have analytically known information structure, which
makes them ground truth for the diagnostics: each kind carries the flag
pattern it is designed to produce.  Cells marked ``None`` are deliberately
unconstrained; they correspond to structural zeros where the strict
greater-than-null-mean rule is a finite-sample coin flip rather than a
designed outcome.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .store import (ActionSpace, AgentSpec, Episode, Manifest,
                    TrajectoryDataset)
from .util import derive_rng, encode_rows

MAX_ENUMERABLE_CELLS = 1_000_000

PLANTED_KINDS = (
    "reactive-copy",
    "memory-copy",
    "private-goal",
    "convention-pair",
    "lagged-follower",
    "independent",
)

# Designed flag pattern per kind: metric -> True (must flag), False (must not),
# None (finite-sample coin flip, not asserted).  Derivations live in the tests.
TRUTH_TABLES: dict[str, dict[str, bool | None]] = {
    "reactive-copy":   {"OAR": True,  "HAR": False, "PIF": False, "AA": False, "DAI": False},
    "memory-copy":     {"OAR": False, "HAR": True,  "PIF": False, "AA": None,  "DAI": False},
    "private-goal":    {"OAR": True,  "HAR": None,  "PIF": True,  "AA": False, "DAI": False},
    "convention-pair": {"OAR": False, "HAR": None,  "PIF": False, "AA": True,  "DAI": False},
    "lagged-follower": {"OAR": False, "HAR": None,  "PIF": True,  "AA": False, "DAI": True},
    "independent":     {"OAR": False, "HAR": None,  "PIF": None,  "AA": None,  "DAI": None},
}


@dataclass(frozen=True)
class PlantedScenario:
    kind: str
    n_episodes: int
    horizon: int
    seed: int
    lag: int = 1

    def __post_init__(self):
        if self.kind not in PLANTED_KINDS:
            raise ValueError(f"unknown planted kind {self.kind!r}")
        if self.lag < 1:
            raise ValueError("lag must be >= 1")
        if self.n_episodes < 1 or self.horizon < 1:
            raise ValueError("n_episodes and horizon must be positive")
        if self.kind in ("memory-copy", "lagged-follower") and self.horizon <= self.lag:
            raise ValueError(f"horizon {self.horizon} must exceed lag {self.lag}")

    @property
    def truth(self) -> dict[str, bool | None]:
        return dict(TRUTH_TABLES[self.kind])


def _planted_manifest(scenario: PlantedScenario, algorithm: str,
                      architecture: str) -> Manifest:
    agent = AgentSpec(action_space=ActionSpace("discrete", 2), obs_dim=1, hidden_dim=0)
    return Manifest(
        scenario=scenario.kind,
        algorithm=algorithm,
        architecture=architecture,
        seed=scenario.seed,
        num_agents=2,
        agents=(agent, agent),
        checkpoint_fraction=1.0,
    )


def _shift_back(values: np.ndarray, lag: int) -> np.ndarray:
    """values[t - lag] with zeros before the episode start."""
    out = np.zeros_like(values)
    out[lag:] = values[:-lag]
    return out


def generate(scenario: PlantedScenario, algorithm: str = "planted",
             architecture: str = "FF") -> TrajectoryDataset:
    """Materialize a planted scenario as a two-agent trajectory dataset.

    Kinds (binary alphabets throughout):
      reactive-copy    both agents observe a shared fair bit and copy it.
      memory-copy      each agent acts on its own observation from lag steps back.
      private-goal     agent 0 acts on its private bit; agent 1 sees a constant
                       but acts on agent 0's private bit.
      convention-pair  both agents copy a shared hidden coin; observations constant.
      lagged-follower  agent 0 acts iid; agent 1 repeats agent 0's action lag
                       steps later; observations constant.
      independent      each agent acts on its own private iid coin;
                       observations constant.
    """
    T = scenario.horizon
    episodes = []
    for e in range(scenario.n_episodes):
        rng = derive_rng(scenario.seed, "planted", scenario.kind, e)
        if scenario.kind == "reactive-copy":
            c = rng.integers(0, 2, size=T)
            obs = (c.astype(np.float64), c.astype(np.float64))
            acts = (c.copy(), c.copy())
        elif scenario.kind == "memory-copy":
            o0 = rng.integers(0, 2, size=T)
            o1 = rng.integers(0, 2, size=T)
            obs = (o0.astype(np.float64), o1.astype(np.float64))
            acts = (_shift_back(o0, scenario.lag), _shift_back(o1, scenario.lag))
        elif scenario.kind == "private-goal":
            o0 = rng.integers(0, 2, size=T)
            obs = (o0.astype(np.float64), np.zeros(T))
            acts = (o0.copy(), o0.copy())
        elif scenario.kind == "convention-pair":
            c = rng.integers(0, 2, size=T)
            obs = (np.zeros(T), np.zeros(T))
            acts = (c.copy(), c.copy())
        elif scenario.kind == "lagged-follower":
            a0 = rng.integers(0, 2, size=T)
            obs = (np.zeros(T), np.zeros(T))
            acts = (a0, _shift_back(a0, scenario.lag))
        else:   # independent: private iid coins as actions, uninformative observations
            obs = (np.zeros(T), np.zeros(T))
            acts = (rng.integers(0, 2, size=T), rng.integers(0, 2, size=T))
        episodes.append(Episode(
            episode_id=e,
            length=T,
            obs=tuple(o.reshape(T, 1) for o in obs),
            actions=tuple(a.astype(np.int64) for a in acts),
            hidden=(None, None),
        ))
    return TrajectoryDataset(
        manifest=_planted_manifest(scenario, algorithm, architecture),
        episodes=tuple(episodes),
    )


# ---------------------------------------------------------------------------
# Exact information quantities on enumerated joints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointPmf:
    """Probability table over a tuple of finite variables."""

    arities: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        if self.table.shape != self.arities:
            raise ValueError("table shape must equal arities")
        if (self.table < 0).any():
            raise ValueError("pmf entries must be nonnegative")
        if abs(float(self.table.sum()) - 1.0) > 1e-12:
            raise ValueError("pmf must sum to 1 within 1e-12")


def exact_mi(pmf: JointPmf, x_vars: Sequence[int], y_vars: Sequence[int],
             z_vars: Sequence[int] = ()) -> float:
    """Exact MI / conditional MI by summation over the table, in nats."""
    x_vars, y_vars, z_vars = tuple(x_vars), tuple(y_vars), tuple(z_vars)
    if not x_vars or not y_vars:
        raise ValueError("x_vars and y_vars must be nonempty")
    groups = x_vars + y_vars + z_vars
    if len(set(groups)) != len(groups):
        raise ValueError("variable index sets must be disjoint")
    if any(not (0 <= v < len(pmf.arities)) for v in groups):
        raise ValueError("variable index out of range")
    if pmf.table.size > MAX_ENUMERABLE_CELLS:
        raise ValueError("table too large to enumerate; enumerate smaller")

    drop = tuple(i for i in range(len(pmf.arities)) if i not in groups)
    joint = pmf.table.sum(axis=drop) if drop else pmf.table
    kept = [v for v in range(len(pmf.arities)) if v not in drop]
    order = [kept.index(v) for v in groups]
    joint = np.transpose(joint, order)
    nx = int(np.prod([pmf.arities[v] for v in x_vars]))
    ny = int(np.prod([pmf.arities[v] for v in y_vars]))
    nz = int(np.prod([pmf.arities[v] for v in z_vars])) if z_vars else 1
    p = joint.reshape(nx, ny, nz)

    pz = p.sum(axis=(0, 1))
    pxz = p.sum(axis=1)
    pyz = p.sum(axis=0)
    total = 0.0
    for ix in range(nx):
        for iy in range(ny):
            for iz in range(nz):
                pxyz = p[ix, iy, iz]
                if pxyz <= 0.0:
                    continue
                total += pxyz * np.log(pxyz * pz[iz] / (pxz[ix, iz] * pyz[iy, iz]))
    return float(total)


@dataclass(frozen=True)
class VariableSelector:
    """Selects one discrete variable per pooled (episode, t) sample.

    ``lag`` reads the value at t - lag; samples with t < lag are dropped so
    every selected tuple is fully realized.
    """

    field: str      # "obs" | "action"
    agent: int
    lag: int = 0

    def __post_init__(self):
        if self.field not in ("obs", "action"):
            raise ValueError(f"unknown selector field {self.field!r}")
        if self.lag < 0:
            raise ValueError("lag must be >= 0")


def select_values(dataset: TrajectoryDataset, selector: VariableSelector) -> np.ndarray:
    """Pooled integer labels for a selector, aligned across selectors of equal max-lag pools."""
    spec = dataset.manifest.agents[selector.agent]
    pieces = []
    for ep in dataset.episodes:
        if selector.field == "action":
            if not spec.action_space.is_discrete:
                raise ValueError("empirical_joint requires discrete variables")
            vals = ep.actions[selector.agent].reshape(-1, 1)
        else:
            vals = ep.obs[selector.agent]
            if not np.all(vals == np.floor(vals)):
                raise ValueError("empirical_joint requires integer-valued observations")
        pieces.append(vals)
    pooled = np.concatenate(pieces, axis=0)
    codes, _ = encode_rows(pooled.astype(np.float64))
    return codes


def empirical_joint(dataset: TrajectoryDataset,
                    selectors: Sequence[VariableSelector]) -> JointPmf:
    """Normalized count table over selected variables, pooled over (episode, t).

    Only timesteps where every selector's lag is realized contribute, so that
    the table never mixes padded values with real ones.
    """
    selectors = list(selectors)
    if not selectors:
        raise ValueError("empirical_joint needs at least one selector")
    max_lag = max(s.lag for s in selectors)

    per_sel_codes = []
    for sel in selectors:
        base = select_values(dataset, sel)
        rows = []
        offset = 0
        for ep in dataset.episodes:
            block = base[offset:offset + ep.length]
            lo = max_lag - sel.lag
            hi = ep.length - sel.lag
            if hi > lo:
                rows.append(block[lo:hi])
            offset += ep.length
        per_sel_codes.append(np.concatenate(rows) if rows else np.empty(0, dtype=np.int64))

    n = per_sel_codes[0].shape[0]
    if n == 0:
        raise ValueError("no pooled samples after lag alignment")
    arities = []
    normalized = []
    for codes in per_sel_codes:
        levels, inverse = np.unique(codes, return_inverse=True)
        arities.append(len(levels))
        normalized.append(inverse)
    if int(np.prod(arities)) > MAX_ENUMERABLE_CELLS:
        raise ValueError("joint table too large; enumerate smaller")

    table = np.zeros(tuple(arities), dtype=np.float64)
    np.add.at(table, tuple(normalized), 1.0)
    table /= n
    return JointPmf(arities=tuple(arities), table=table)
