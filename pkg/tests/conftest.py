import numpy as np
import pytest

from trajaudit.store import (ActionSpace, AgentSpec, Episode, Manifest,
                             TrajectoryDataset)


def make_manifest(num_agents=2, n_actions=2, obs_dim=1, hidden_dim=0,
                  architecture="FF", algorithm="alg", scenario="test", seed=0,
                  action_kind="discrete"):
    agent = AgentSpec(
        action_space=ActionSpace(action_kind, n_actions),
        obs_dim=obs_dim,
        hidden_dim=hidden_dim,
    )
    return Manifest(scenario=scenario, algorithm=algorithm, architecture=architecture,
                    seed=seed, num_agents=num_agents,
                    agents=(agent,) * num_agents, checkpoint_fraction=1.0)


def make_dataset(obs_per_episode, acts_per_episode, hidden_per_episode=None,
                 **manifest_kw):
    """Dataset from nested lists: episodes -> agents -> arrays."""
    first_obs = np.atleast_2d(np.asarray(obs_per_episode[0][0], dtype=np.float64))
    manifest_kw.setdefault("obs_dim", first_obs.shape[-1])
    manifest_kw.setdefault("num_agents", len(obs_per_episode[0]))
    manifest = make_manifest(**manifest_kw)
    episodes = []
    for e, (obs_agents, act_agents) in enumerate(zip(obs_per_episode, acts_per_episode)):
        obs = tuple(np.asarray(o, dtype=np.float64).reshape(len(o), -1)
                    for o in obs_agents)
        if manifest.agents[0].action_space.is_discrete:
            acts = tuple(np.asarray(a, dtype=np.int64) for a in act_agents)
        else:
            acts = tuple(np.asarray(a, dtype=np.float64).reshape(len(a), -1)
                         for a in act_agents)
        if hidden_per_episode is not None:
            hid = tuple(np.asarray(h, dtype=np.float64) for h in hidden_per_episode[e])
        else:
            hid = (None,) * manifest.num_agents
        episodes.append(Episode(episode_id=e, length=obs[0].shape[0],
                                obs=obs, actions=acts, hidden=hid))
    return TrajectoryDataset(manifest=manifest, episodes=tuple(episodes))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
