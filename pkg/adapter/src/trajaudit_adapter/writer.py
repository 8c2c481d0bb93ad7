"""Rollout capture: writes trajaudit's wire format directly from training loops.

The writer owns its copy of the wire-format contract (manifest.json plus
episodes.jsonl) so that training code does not need the auditing toolkit
installed; files it emits load through the core with zero validation errors.
Shape checks happen at record time so a malformed rollout fails during
training, not at audit time.
"""

from __future__ import annotations

import json
import os
from typing import Sequence


class RolloutShapeError(ValueError):
    """A recorded step does not match the declared agent spaces."""


class AgentSpace:
    def __init__(self, spec: dict):
        space = spec["action_space"]
        self.action_type = space["type"]
        if self.action_type not in ("discrete", "continuous"):
            raise RolloutShapeError(f"unknown action space type {self.action_type!r}")
        self.action_size = int(space["n_or_dim"])
        self.obs_dim = int(spec["obs_dim"])
        self.hidden_dim = int(spec.get("hidden_dim", 0))
        if self.action_size < 1 or self.obs_dim < 1 or self.hidden_dim < 0:
            raise RolloutShapeError("agent dimensions must be positive (hidden_dim >= 0)")

    def manifest_entry(self) -> dict:
        return {
            "action_space": {"type": self.action_type, "n_or_dim": self.action_size},
            "obs_dim": self.obs_dim,
            "hidden_dim": self.hidden_dim,
        }


class RolloutWriter:
    """Append-only sink for one dataset directory.

    Declare the run configuration up front; call ``record_step`` once per
    agent-timestep; ``close`` (or the context manager) writes the manifest.
    """

    def __init__(self, path: str | os.PathLike, *, scenario: str, algorithm: str,
                 architecture: str, seed: int, agents: Sequence[dict],
                 checkpoint_fraction: float = 1.0):
        self.path = os.fspath(path)
        self.agents = [AgentSpace(spec) for spec in agents]
        if len(self.agents) < 2:
            raise RolloutShapeError("need at least 2 agents")
        if not (0.0 <= checkpoint_fraction <= 1.0):
            raise RolloutShapeError("checkpoint_fraction must lie in [0, 1]")
        self._manifest = {
            "scenario": scenario,
            "algorithm": algorithm,
            "architecture": architecture,
            "seed": int(seed),
            "num_agents": len(self.agents),
            "agents": [a.manifest_entry() for a in self.agents],
            "checkpoint_fraction": float(checkpoint_fraction),
        }
        os.makedirs(self.path, exist_ok=True)
        self._sink = open(os.path.join(self.path, "episodes.jsonl"), "w",
                          encoding="utf-8")
        self._closed = False

    # -- recording -----------------------------------------------------------

    def record_step(self, episode: int, agent: int, t: int, obs, action,
                    hidden=None) -> None:
        if self._closed:
            raise RuntimeError("writer is closed")
        if not (0 <= agent < len(self.agents)):
            raise RolloutShapeError(f"agent index {agent} out of range")
        where = f"agent {agent} t {t}"
        space = self.agents[agent]

        obs = [float(v) for v in obs]
        if len(obs) != space.obs_dim:
            raise RolloutShapeError(
                f"{where}: obs has length {len(obs)}, expected {space.obs_dim}"
            )
        record: dict = {"episode": int(episode), "agent": int(agent), "t": int(t),
                        "obs": obs}
        if space.action_type == "discrete":
            idx = int(action)
            if not (0 <= idx < space.action_size):
                raise RolloutShapeError(
                    f"{where}: action {idx} outside Discrete({space.action_size})"
                )
            record["action"] = idx
        else:
            vec = [float(v) for v in action]
            if len(vec) != space.action_size:
                raise RolloutShapeError(
                    f"{where}: continuous action has length {len(vec)}, "
                    f"expected {space.action_size}"
                )
            record["action"] = vec
        if space.hidden_dim > 0:
            if hidden is None:
                raise RolloutShapeError(f"{where}: hidden vector required")
            vec = [float(v) for v in hidden]
            if len(vec) != space.hidden_dim:
                raise RolloutShapeError(
                    f"{where}: hidden has length {len(vec)}, expected {space.hidden_dim}"
                )
            record["hidden"] = vec
        elif hidden is not None:
            raise RolloutShapeError(f"{where}: hidden given but hidden_dim is 0")

        self._sink.write(json.dumps(record, separators=(",", ":")))
        self._sink.write("\n")

    # -- lifecycle --------------------------------------------------------------

    def close(self) -> None:
        if self._closed:
            return
        self._sink.close()
        with open(os.path.join(self.path, "manifest.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(self._manifest, fh, indent=2)
            fh.write("\n")
        self._closed = True

    def __enter__(self) -> "RolloutWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
