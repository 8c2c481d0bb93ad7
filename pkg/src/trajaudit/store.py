"""Trajectory data model, wire-format IO, history construction and observation noise.

A dataset is a directory holding ``manifest.json`` plus ``episodes.jsonl``
(one JSON object per agent-timestep).  Everything loaded through this module
is validated against the manifest and immutable afterwards; all operations
here are pure functions of their inputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .util import derive_rng


class TrajectoryFormatError(ValueError):
    """Raised when a wire-format file cannot be parsed."""


class TrajectoryValidationError(ValueError):
    """Raised when parsed data violates a manifest invariant."""


class ConfigurationError(ValueError):
    """Raised when an operation is requested with an unusable configuration."""


NOISE_SCALE_MAX = 0.5


@dataclass(frozen=True)
class ActionSpace:
    kind: str          # "discrete" | "continuous"
    size: int          # number of actions, or action vector dimension

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise TrajectoryValidationError(f"unknown action space type {self.kind!r}")
        if self.size < 1:
            raise TrajectoryValidationError("action space size must be positive")

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def encoding_dim(self) -> int:
        """Width of the action encoding used inside window histories."""
        return self.size    # one-hot for discrete, raw vector for continuous


@dataclass(frozen=True)
class AgentSpec:
    action_space: ActionSpace
    obs_dim: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.obs_dim < 1:
            raise TrajectoryValidationError("obs_dim must be positive")
        if self.hidden_dim < 0:
            raise TrajectoryValidationError("hidden_dim must be nonnegative")


@dataclass(frozen=True)
class Manifest:
    scenario: str
    algorithm: str
    architecture: str
    seed: int
    num_agents: int
    agents: tuple[AgentSpec, ...]
    checkpoint_fraction: float = 1.0

    def __post_init__(self):
        if self.num_agents < 2:
            raise TrajectoryValidationError("num_agents must be >= 2")
        if len(self.agents) != self.num_agents:
            raise TrajectoryValidationError(
                f"manifest declares {self.num_agents} agents but lists {len(self.agents)}"
            )
        if not (0.0 <= self.checkpoint_fraction <= 1.0):
            raise TrajectoryValidationError("checkpoint_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class StepRecord:
    """One agent-timestep as it appears on the wire."""

    episode: int
    agent: int
    t: int
    obs: np.ndarray
    action: int | np.ndarray
    hidden: np.ndarray | None = None


@dataclass(frozen=True)
class Episode:
    """Per-agent arrays for one episode; all agents share the same length."""

    episode_id: int
    length: int
    obs: tuple[np.ndarray, ...]              # (T, obs_dim) float64 per agent
    actions: tuple[np.ndarray, ...]          # (T,) int64 or (T, dim) float64
    hidden: tuple[np.ndarray | None, ...]    # (T, hidden_dim) float64 or None


@dataclass(frozen=True)
class TrajectoryDataset:
    manifest: Manifest
    episodes: tuple[Episode, ...]

    @property
    def num_agents(self) -> int:
        return self.manifest.num_agents

    def total_steps(self) -> int:
        return sum(ep.length for ep in self.episodes)


class HistoryMode(Enum):
    HIDDEN = "hidden"
    WINDOW = "window"


@dataclass(frozen=True)
class HistoryRepresentation:
    mode: HistoryMode
    payload: np.ndarray


# ---------------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------------

_MANIFEST_NAME = "manifest.json"
_EPISODES_NAME = "episodes.jsonl"


def _manifest_to_obj(manifest: Manifest) -> dict:
    return {
        "scenario": manifest.scenario,
        "algorithm": manifest.algorithm,
        "architecture": manifest.architecture,
        "seed": manifest.seed,
        "num_agents": manifest.num_agents,
        "agents": [
            {
                "action_space": {"type": a.action_space.kind, "n_or_dim": a.action_space.size},
                "obs_dim": a.obs_dim,
                "hidden_dim": a.hidden_dim,
            }
            for a in manifest.agents
        ],
        "checkpoint_fraction": manifest.checkpoint_fraction,
    }


def _manifest_from_obj(obj: dict, path: str) -> Manifest:
    try:
        agents = tuple(
            AgentSpec(
                action_space=ActionSpace(
                    kind=a["action_space"]["type"],
                    size=int(a["action_space"]["n_or_dim"]),
                ),
                obs_dim=int(a["obs_dim"]),
                hidden_dim=int(a.get("hidden_dim", 0)),
            )
            for a in obj["agents"]
        )
        return Manifest(
            scenario=str(obj["scenario"]),
            algorithm=str(obj["algorithm"]),
            architecture=str(obj["architecture"]),
            seed=int(obj["seed"]),
            num_agents=int(obj["num_agents"]),
            agents=agents,
            checkpoint_fraction=float(obj["checkpoint_fraction"]),
        )
    except (KeyError, TypeError) as exc:
        raise TrajectoryFormatError(f"{path}: malformed manifest ({exc})") from exc


def _validate_step(manifest: Manifest, rec: StepRecord, where: str) -> None:
    spec = manifest.agents[rec.agent]
    if rec.obs.shape != (spec.obs_dim,):
        raise TrajectoryValidationError(
            f"{where}: obs length {rec.obs.shape[0] if rec.obs.ndim == 1 else rec.obs.shape}"
            f" does not match manifest obs_dim {spec.obs_dim}"
        )
    space = spec.action_space
    if space.is_discrete:
        if not isinstance(rec.action, (int, np.integer)):
            raise TrajectoryValidationError(f"{where}: discrete action must be an integer index")
        if not (0 <= int(rec.action) < space.size):
            raise TrajectoryValidationError(
                f"{where}: action out of range (got {rec.action}, space Discrete({space.size}))"
            )
    else:
        if not isinstance(rec.action, np.ndarray) or rec.action.shape != (space.size,):
            raise TrajectoryValidationError(
                f"{where}: continuous action must be a vector of length {space.size}"
            )
    if spec.hidden_dim > 0:
        if rec.hidden is None:
            raise TrajectoryValidationError(f"{where}: hidden vector required (hidden_dim > 0)")
        if rec.hidden.shape != (spec.hidden_dim,):
            raise TrajectoryValidationError(
                f"{where}: hidden length does not match manifest hidden_dim {spec.hidden_dim}"
            )
    elif rec.hidden is not None:
        raise TrajectoryValidationError(f"{where}: hidden vector present but hidden_dim is 0")


def _records_to_episode(manifest: Manifest, episode_id: int,
                        per_agent: dict[int, list[StepRecord]]) -> Episode:
    lengths = set()
    for agent in range(manifest.num_agents):
        recs = per_agent.get(agent)
        if not recs:
            raise TrajectoryValidationError(
                f"episode {episode_id}: no records for agent {agent}"
            )
        lengths.add(len(recs))
    if len(lengths) != 1:
        raise TrajectoryValidationError(
            f"episode {episode_id}: episode length mismatch across agents "
            f"(saw lengths {sorted(lengths)})"
        )
    (length,) = lengths

    obs, actions, hidden = [], [], []
    for agent in range(manifest.num_agents):
        recs = sorted(per_agent[agent], key=lambda r: r.t)
        ts = [r.t for r in recs]
        if ts != list(range(length)):
            raise TrajectoryValidationError(
                f"episode {episode_id} agent {agent}: timesteps must run 0..{length - 1} "
                f"without gaps (got {ts[:5]}...)"
            )
        spec = manifest.agents[agent]
        obs.append(np.asarray([r.obs for r in recs], dtype=np.float64))
        if spec.action_space.is_discrete:
            actions.append(np.asarray([int(r.action) for r in recs], dtype=np.int64))
        else:
            actions.append(np.asarray([r.action for r in recs], dtype=np.float64))
        if spec.hidden_dim > 0:
            hidden.append(np.asarray([r.hidden for r in recs], dtype=np.float64))
        else:
            hidden.append(None)
    return Episode(episode_id=episode_id, length=length,
                   obs=tuple(obs), actions=tuple(actions), hidden=tuple(hidden))


def load_dataset(path: str | os.PathLike) -> TrajectoryDataset:
    """Load and validate a dataset directory holding manifest.json + episodes.jsonl."""
    path = os.fspath(path)
    manifest_path = os.path.join(path, _MANIFEST_NAME)
    episodes_path = os.path.join(path, _EPISODES_NAME)
    for p in (manifest_path, episodes_path):
        if not os.path.exists(p):
            raise TrajectoryFormatError(f"missing dataset file: {p}")

    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            manifest_obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TrajectoryFormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    manifest = _manifest_from_obj(manifest_obj, manifest_path)

    by_episode: dict[int, dict[int, list[StepRecord]]] = {}
    with open(episodes_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrajectoryFormatError(
                    f"{episodes_path}:{lineno}: invalid JSON ({exc})"
                ) from exc
            try:
                episode = int(obj["episode"])
                agent = int(obj["agent"])
                t = int(obj["t"])
                obs = np.asarray(obj["obs"], dtype=np.float64)
                raw_action = obj["action"]
            except (KeyError, TypeError, ValueError) as exc:
                raise TrajectoryFormatError(
                    f"{episodes_path}:{lineno}: malformed record ({exc})"
                ) from exc
            if not (0 <= agent < manifest.num_agents):
                raise TrajectoryValidationError(
                    f"episode {episode} t {t}: agent index {agent} out of range"
                )
            if manifest.agents[agent].action_space.is_discrete:
                if isinstance(raw_action, bool) or not isinstance(raw_action, int):
                    raise TrajectoryFormatError(
                        f"{episodes_path}:{lineno}: discrete action must be an integer"
                    )
                action: int | np.ndarray = raw_action
            else:
                action = np.asarray(raw_action, dtype=np.float64)
            hidden = None
            if "hidden" in obj and obj["hidden"] is not None:
                hidden = np.asarray(obj["hidden"], dtype=np.float64)
            rec = StepRecord(episode=episode, agent=agent, t=t, obs=obs,
                             action=action, hidden=hidden)
            _validate_step(manifest, rec, where=f"episode {episode} agent {agent} t {t}")
            by_episode.setdefault(episode, {}).setdefault(agent, []).append(rec)

    if not by_episode:
        raise TrajectoryValidationError(f"{episodes_path}: dataset holds no episodes")

    episodes = tuple(
        _records_to_episode(manifest, eid, agents)
        for eid, agents in sorted(by_episode.items())
    )
    return TrajectoryDataset(manifest=manifest, episodes=episodes)


def write_dataset(dataset: TrajectoryDataset, path: str | os.PathLike) -> None:
    """Serialize a dataset canonically (stable key order, records sorted by episode/agent/t)."""
    path = os.fspath(path)
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, _MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(_manifest_to_obj(dataset.manifest), fh, indent=2)
        fh.write("\n")
    with open(os.path.join(path, _EPISODES_NAME), "w", encoding="utf-8") as fh:
        for ep in sorted(dataset.episodes, key=lambda e: e.episode_id):
            for agent in range(dataset.num_agents):
                spec = dataset.manifest.agents[agent]
                for t in range(ep.length):
                    obj: dict = {
                        "episode": ep.episode_id,
                        "agent": agent,
                        "t": t,
                        "obs": list(map(float, ep.obs[agent][t])),
                    }
                    if spec.action_space.is_discrete:
                        obj["action"] = int(ep.actions[agent][t])
                    else:
                        obj["action"] = list(map(float, ep.actions[agent][t]))
                    if spec.hidden_dim > 0:
                        obj["hidden"] = list(map(float, ep.hidden[agent][t]))
                    fh.write(json.dumps(obj, separators=(",", ":")))
                    fh.write("\n")


# ---------------------------------------------------------------------------
# History construction
# ---------------------------------------------------------------------------

def encode_action(space: ActionSpace, value) -> np.ndarray:
    """Action encoding used inside window payloads: one-hot for discrete spaces."""
    if space.is_discrete:
        enc = np.zeros(space.size, dtype=np.float64)
        enc[int(value)] = 1.0
        return enc
    return np.asarray(value, dtype=np.float64)


def build_history(manifest: Manifest, episode: Episode, agent: int, t: int,
                  mode: HistoryMode, k: int = 4,
                  include_actions: bool = False) -> HistoryRepresentation:
    """Agent history at time t.

    Window payloads concatenate, oldest step first, the per-step block
    ``(obs, [action encoding], mask)`` for steps t-k..t-1; steps before the
    episode start are zeros with mask 0.  The current observation O_t is never
    part of the payload.  ``include_actions`` selects the action-observation
    history (ending at the action taken at t-1) over the observation-only
    history used for memory probing.

    HiddenState payloads are the recorded hidden vector: the one at t when
    ``include_actions`` is False (the policy's state when acting at t), and
    the one at t-1 (zeros at t=0) when True, so that action-observation
    histories never leak anything from timestep t.
    """
    if not (0 <= t < episode.length):
        raise ConfigurationError(f"timestep {t} outside episode of length {episode.length}")
    spec = manifest.agents[agent]
    if mode is HistoryMode.HIDDEN:
        if spec.hidden_dim == 0:
            raise ConfigurationError(
                f"agent {agent} has no recorded hidden states (hidden_dim = 0)"
            )
        if include_actions and t == 0:
            payload = np.zeros(spec.hidden_dim, dtype=np.float64)
        else:
            idx = t - 1 if include_actions else t
            payload = np.array(episode.hidden[agent][idx], dtype=np.float64)
        return HistoryRepresentation(mode=mode, payload=payload)

    if k < 1:
        raise ConfigurationError("window length k must be >= 1")
    enc_dim = spec.action_space.encoding_dim if include_actions else 0
    step_width = spec.obs_dim + enc_dim + 1
    payload = np.zeros(k * step_width, dtype=np.float64)
    for slot, s in enumerate(range(t - k, t)):
        base = slot * step_width
        if s < 0:
            continue    # padding: zeros, mask stays 0
        payload[base:base + spec.obs_dim] = episode.obs[agent][s]
        if include_actions:
            payload[base + spec.obs_dim:base + spec.obs_dim + enc_dim] = encode_action(
                spec.action_space, episode.actions[agent][s]
            )
        payload[base + step_width - 1] = 1.0
    return HistoryRepresentation(mode=HistoryMode.WINDOW, payload=payload)


# ---------------------------------------------------------------------------
# Observation noise
# ---------------------------------------------------------------------------

def feature_std(dataset: TrajectoryDataset, agent: int) -> np.ndarray:
    """Per-feature standard deviation of an agent's observations over the whole dataset."""
    pooled = np.concatenate([ep.obs[agent] for ep in dataset.episodes], axis=0)
    return pooled.std(axis=0)


def perturb_observations(dataset: TrajectoryDataset, scale: float,
                         seed: int) -> TrajectoryDataset:
    """Add feature-scaled Gaussian noise to every observation.

    Each feature x becomes x + eps with eps ~ N(0, (scale * sigma_x)^2), where
    sigma_x is that feature's standard deviation over this dataset.  Actions
    and hidden states are untouched.  Noise streams are derived per episode
    from the seed, so the result does not depend on evaluation order.
    """
    if not (0.0 <= scale <= NOISE_SCALE_MAX):
        raise ConfigurationError(
            f"noise scale must lie in [0, {NOISE_SCALE_MAX}] (got {scale})"
        )
    if scale == 0.0:
        return dataset

    sigmas = [feature_std(dataset, agent) for agent in range(dataset.num_agents)]
    episodes = []
    for ep_index, ep in enumerate(dataset.episodes):
        rng = derive_rng(seed, "perturb", ep_index)
        new_obs = []
        for agent in range(dataset.num_agents):
            noise = rng.standard_normal(ep.obs[agent].shape) * (scale * sigmas[agent])
            obs = ep.obs[agent].copy()
            varying = sigmas[agent] > 0.0    # constant features stay bit-identical
            obs[:, varying] += noise[:, varying]
            new_obs.append(obs)
        episodes.append(Episode(episode_id=ep.episode_id, length=ep.length,
                                obs=tuple(new_obs), actions=ep.actions, hidden=ep.hidden))
    return TrajectoryDataset(manifest=dataset.manifest, episodes=tuple(episodes))
