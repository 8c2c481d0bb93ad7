"""The five trajectory diagnostics, per agent or ordered agent pair.

  OAR   observation-action relevance        I(O_t ; A_t) / H(A_t)
  HAR   history-action relevance            I(H_t ; A_t | O_t) / H(A_t | O_t)
  PIF   private information flow i->j       I(tau^i, O^i ; A^j | tau^j, O^j) / H(A^j | tau^j, O^j)
  AA    action-action coupling              I(A^i ; A^j | O^i, O^j) / H(A^j | O^i, O^j)
  DAI   directed action information i->j    mean_t I(tau^i ; A^j_t | tau^j) / mean_t H(A^j_t | tau^j)

All quantities pool (episode, t) samples; DAI pools episodes at each t and
averages over t >= 1.  When every involved channel is recognizably discrete
(integer-valued, small alphabet) the exact plug-in estimators run and
normalized values are exact fractions in [0, 1]; otherwise the kNN estimators
run with discrete columns one-hot embedded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import estimators as est
from .estimators import EstimateNats, SampleColumn
from .store import ConfigurationError, HistoryMode, Manifest, TrajectoryDataset
from .util import combine_codes, derive_rng, derive_seed, encode_rows

METRICS = ("OAR", "HAR", "PIF", "AA", "DAI")
PER_AGENT_METRICS = ("OAR", "HAR")
PER_PAIR_METRICS = ("PIF", "AA", "DAI")

EPS_DENOMINATOR = 1e-3      # below this the normalized value is Undefined
MAX_DISCRETE_ROWS = 4096    # alphabet cap for treating a float channel as discrete
_PAD = -1                   # window slot code for pre-episode padding


@dataclass(frozen=True)
class DiagnosticConfig:
    history_mode: str = "auto"          # "auto" | "hidden" | "window"
    window: int = 4
    k_neighbors: int = est.DEFAULT_NEIGHBORS
    sample_cap: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if self.history_mode not in ("auto", "hidden", "window"):
            raise ConfigurationError(f"unknown history mode {self.history_mode!r}")
        if self.window < 1:
            raise ConfigurationError("window length must be >= 1")
        if self.k_neighbors < 1:
            raise ConfigurationError("k_neighbors must be >= 1")
        if self.sample_cap < 1:
            raise ConfigurationError("sample_cap must be >= 1")


@dataclass(frozen=True)
class NullSummary:
    samples: tuple[float, ...]
    mean: float
    n_permutations: int
    seed: int
    basis: str = "normalized"       # which value the samples are drawn from
    n_undefined: int = 0            # permutations whose normalized value was Undefined

    def __post_init__(self):
        if self.n_permutations != len(self.samples) or self.n_permutations < 1:
            raise ValueError("n_permutations must equal len(samples) >= 1")


@dataclass(frozen=True)
class DiagnosticResult:
    metric_id: str
    subject: tuple[int, ...]            # (agent,) or (source, target)
    raw: EstimateNats
    denominator: EstimateNats
    normalized: float | None            # Undefined when denominator <= eps
    null: NullSummary | None = None
    flagged: bool | None = None
    notes: tuple[str, ...] = ()

    @property
    def comparison_value(self) -> float:
        """Value entering the null comparison: normalized when defined, else raw."""
        return self.raw.value if self.normalized is None else self.normalized


def subjects_for(metric: str, num_agents: int) -> list[tuple[int, ...]]:
    if metric in PER_AGENT_METRICS:
        return [(i,) for i in range(num_agents)]
    return [(i, j) for i in range(num_agents) for j in range(num_agents) if i != j]


def _entropy_from_codes(codes: np.ndarray) -> float:
    counts = np.bincount(codes)
    # Sorting makes the summation canonical: any two encodings of the same
    # partition yield bit-identical entropies, so structural zeros cancel
    # exactly in the plug-in CMI expressions below.
    counts = np.sort(counts[counts > 0])
    p = counts / codes.shape[0]
    return float(max(0.0, -np.sum(p * np.log(p))))


def _shift_codes(codes: np.ndarray, t_idx: np.ndarray, s: int) -> np.ndarray:
    """codes at (episode, t - s), PAD where t < s; relies on pooled (episode, t) order."""
    out = np.full(codes.shape[0], _PAD, dtype=np.int64)
    ok = t_idx >= s
    out[ok] = codes[np.flatnonzero(ok) - s]
    return out


def _shift_rows(rows: np.ndarray, t_idx: np.ndarray, s: int) -> tuple[np.ndarray, np.ndarray]:
    out = np.zeros_like(rows)
    ok = t_idx >= s
    out[ok] = rows[np.flatnonzero(ok) - s]
    return out, ok


class _AgentChannels:
    """Pooled per-agent sample channels plus cached discrete encodings."""

    def __init__(self, dataset: TrajectoryDataset, agent: int,
                 t_idx: np.ndarray):
        spec = dataset.manifest.agents[agent]
        self.spec = spec
        self.t_idx = t_idx
        self.obs_rows = np.concatenate([ep.obs[agent] for ep in dataset.episodes], axis=0)
        if spec.action_space.is_discrete:
            self.act_int = np.concatenate([ep.actions[agent] for ep in dataset.episodes])
            self.act_rows = None
        else:
            self.act_int = None
            self.act_rows = np.concatenate([ep.actions[agent] for ep in dataset.episodes], axis=0)
        if spec.hidden_dim > 0:
            self.hidden_rows = np.concatenate([ep.hidden[agent] for ep in dataset.episodes], axis=0)
        else:
            self.hidden_rows = None

        self.obs_code = self._discretize(self.obs_rows)

    @staticmethod
    def _discretize(rows: np.ndarray) -> np.ndarray | None:
        if not np.all(rows == np.floor(rows)):
            return None
        codes, n_distinct = encode_rows(rows)
        if n_distinct > MAX_DISCRETE_ROWS:
            return None
        return codes

    @property
    def plugin_ready(self) -> bool:
        return self.obs_code is not None and self.act_int is not None


class DiagnosticPipeline:
    """Shared machinery for computing all diagnostics of one dataset.

    Observation-side work (encodings, window gathers) happens once at
    construction; per-permutation recomputation only touches action channels.
    ``compute_all`` is a pure function of the action arrays it is given.
    """

    def __init__(self, dataset: TrajectoryDataset, config: DiagnosticConfig):
        self.dataset = dataset
        self.config = config
        self.manifest = dataset.manifest
        self.mode = self._resolve_mode()

        lengths = [ep.length for ep in dataset.episodes]
        self.t_idx = np.concatenate([np.arange(T) for T in lengths])
        self.ep_idx = np.concatenate([np.full(T, i) for i, T in enumerate(lengths)])
        self.n_pooled = int(self.t_idx.shape[0])
        self.agents = [_AgentChannels(dataset, a, self.t_idx)
                       for a in range(self.manifest.num_agents)]

        cap = config.sample_cap
        if self.n_pooled > cap:
            rng = derive_rng(config.seed, "sample-cap")
            self.keep = np.sort(rng.choice(self.n_pooled, size=cap, replace=False))
        else:
            self.keep = None

        self._plugin = all(a.plugin_ready for a in self.agents)
        if self.mode is HistoryMode.HIDDEN:
            self._plugin = False
        if self._plugin:
            # Obs-only window codes never change under action permutation.
            self._obs_wincodes = [
                self._window_codes(a.obs_code) for a in self.agents
            ]

    def _resolve_mode(self) -> HistoryMode:
        mode = self.config.history_mode
        hidden_ok = all(spec.hidden_dim > 0 for spec in self.manifest.agents)
        if mode == "hidden":
            if not hidden_ok:
                raise ConfigurationError(
                    "hidden-state histories requested but the dataset records none"
                )
            return HistoryMode.HIDDEN
        if mode == "window":
            return HistoryMode.WINDOW
        return HistoryMode.HIDDEN if hidden_ok else HistoryMode.WINDOW

    # -- encoding helpers ---------------------------------------------------

    def _window_codes(self, step_codes: np.ndarray) -> np.ndarray:
        """Label codes of the (t-k..t-1) step-code window, oldest slot first."""
        k = self.config.window
        cols = [_shift_codes(step_codes, self.t_idx, s) for s in range(k, 0, -1)]
        codes, _ = encode_rows(np.stack(cols, axis=1))
        return codes

    def _window_matrix(self, agent: int, act_rows: np.ndarray | None) -> np.ndarray:
        """Float window payloads (kNN path), matching store.build_history layout."""
        k = self.config.window
        a = self.agents[agent]
        obs_dim = a.obs_rows.shape[1]
        enc_dim = act_rows.shape[1] if act_rows is not None else 0
        stepw = obs_dim + enc_dim + 1
        out = np.zeros((self.n_pooled, k * stepw), dtype=np.float64)
        for slot, s in enumerate(range(k, 0, -1)):
            base = slot * stepw
            shifted_obs, ok = _shift_rows(a.obs_rows, self.t_idx, s)
            out[:, base:base + obs_dim] = shifted_obs
            if act_rows is not None:
                shifted_act, _ = _shift_rows(act_rows, self.t_idx, s)
                out[:, base + obs_dim:base + obs_dim + enc_dim] = shifted_act
            out[ok, base + stepw - 1] = 1.0
        return out

    def _one_hot_actions(self, agent: int, act_int: np.ndarray) -> np.ndarray:
        n = self.agents[agent].spec.action_space.size
        out = np.zeros((act_int.shape[0], n), dtype=np.float64)
        out[np.arange(act_int.shape[0]), act_int] = 1.0
        return out

    def _tau_hidden(self, agent: int) -> np.ndarray:
        """Action-observation history via hidden state: the vector from t-1."""
        rows, _ = _shift_rows(self.agents[agent].hidden_rows, self.t_idx, 1)
        return rows

    # -- metric computations --------------------------------------------------

    def compute_all(self, actions: Sequence[np.ndarray]) -> dict:
        """All (metric, subject) -> DiagnosticResult for the given action channels.

        ``actions`` holds one pooled action array per agent ((n,) ints or
        (n, d) floats), typically the dataset's own or a permuted variant.
        """
        results = {}
        for metric in METRICS:
            for subject in subjects_for(metric, self.manifest.num_agents):
                results[(metric, subject)] = self._compute(metric, subject, actions)
        return results

    def original_actions(self) -> list[np.ndarray]:
        return [a.act_int if a.act_int is not None else a.act_rows for a in self.agents]

    def compute(self, metric: str, subject: tuple[int, ...]) -> "DiagnosticResult":
        return self._compute(metric, subject, self.original_actions())

    def _sub(self, arr: np.ndarray) -> np.ndarray:
        return arr if self.keep is None else arr[self.keep]

    def _est_seed(self, metric: str, subject: tuple[int, ...]) -> int:
        return derive_seed(self.config.seed, metric, *subject)

    def _compute(self, metric: str, subject: tuple[int, ...],
                 actions: Sequence[np.ndarray]) -> "DiagnosticResult":
        if self._plugin:
            raw, den, n, notes = self._compute_plugin(metric, subject, actions)
            raw_est = EstimateNats(raw, n, "plugin.cmi" if metric != "OAR" else "plugin.mi")
            den_est = EstimateNats(den, n, "plugin.cond_entropy" if metric != "OAR"
                                   else "plugin.entropy")
        else:
            raw_est, den_est, notes = self._compute_knn(metric, subject, actions)
        normalized = None
        if den_est.value > EPS_DENOMINATOR:
            normalized = raw_est.value / den_est.value
        return DiagnosticResult(metric_id=metric, subject=subject, raw=raw_est,
                                denominator=den_est, normalized=normalized,
                                notes=tuple(notes))

    # Exact plug-in path ------------------------------------------------------

    def _plugin_cmi(self, xc, yc, zc) -> tuple[float, float]:
        """(I(X;Y|Z), H(Y|Z)) from label codes; exact plug-in, clamped into [0, den].

        The grouping makes structural zeros exact: when x adds nothing to z the
        first difference vanishes bit-for-bit, and when y is determined by z
        the denominator does.
        """
        xz = combine_codes(xc, zc)
        yz = combine_codes(yc, zc)
        hxz = _entropy_from_codes(xz)
        hyz = _entropy_from_codes(yz)
        hz = _entropy_from_codes(zc)
        hxyz = _entropy_from_codes(combine_codes(xz, yc))
        den = max(0.0, hyz - hz)
        raw = min(den, max(0.0, (hxz - hz) + (hyz - hxyz)))
        return raw, den

    def _plugin_mi(self, xc, yc) -> tuple[float, float]:
        hx = _entropy_from_codes(xc)
        hy = _entropy_from_codes(yc)
        hxy = _entropy_from_codes(combine_codes(xc, yc))
        den = hy
        raw = min(den, max(0.0, (hx - hxy) + hy))
        return raw, den

    def _tau_codes(self, agent: int, act_int: np.ndarray) -> np.ndarray:
        step = combine_codes(self.agents[agent].obs_code, act_int)
        return self._window_codes(step)

    def _compute_plugin(self, metric, subject, actions):
        notes: list[str] = [f"history={self.mode.value}"]
        if metric == "OAR":
            (i,) = subject
            xc, yc = self._sub(self.agents[i].obs_code), self._sub(actions[i])
            raw, den = self._plugin_mi(xc, yc)
            return raw, den, xc.shape[0], notes
        if metric == "HAR":
            (i,) = subject
            xc = self._sub(self._obs_wincodes[i])
            yc = self._sub(actions[i])
            zc = self._sub(self.agents[i].obs_code)
            raw, den = self._plugin_cmi(xc, yc, zc)
            return raw, den, xc.shape[0], notes
        if metric == "PIF":
            i, j = subject
            src = combine_codes(self._tau_codes(i, actions[i]), self.agents[i].obs_code)
            cond = combine_codes(self._tau_codes(j, actions[j]), self.agents[j].obs_code)
            raw, den = self._plugin_cmi(self._sub(src), self._sub(actions[j]),
                                        self._sub(cond))
            return raw, den, self._sub(src).shape[0], notes
        if metric == "AA":
            i, j = subject
            zc = combine_codes(self.agents[i].obs_code, self.agents[j].obs_code)
            raw, den = self._plugin_cmi(self._sub(actions[i]), self._sub(actions[j]),
                                        self._sub(zc))
            return raw, den, self._sub(zc).shape[0], notes
        # DAI
        terms, skipped = self.dai_term_list(subject, actions)
        return self._average_dai(terms, skipped, notes)

    def dai_term_list(self, subject: tuple[int, int],
                      actions: Sequence[np.ndarray]) -> tuple[list, list]:
        """Per-timestep DAI terms [(t, raw, denominator, n_t), ...] plus skipped ts.

        Episodes are pooled at each fixed t >= 1; ts with fewer than
        5 * k_neighbors pooled episodes are skipped.
        """
        i, j = subject
        if self._plugin:
            tau_i = self._tau_codes(i, actions[i])
            tau_j = self._tau_codes(j, actions[j])

            def term(sel):
                return self._plugin_cmi(tau_i[sel], actions[j][sel], tau_j[sel])
        else:
            term = self._knn_dai_term_fn(subject, actions)

        min_n = 5 * self.config.k_neighbors
        max_t = int(self.t_idx.max())
        if max_t < 1:
            raise ConfigurationError("episodes too short for cross-timestep terms (T < 2)")
        terms, skipped = [], []
        for t in range(1, max_t + 1):
            sel = np.flatnonzero(self.t_idx == t)
            if sel.shape[0] < min_n:
                skipped.append(t)
                continue
            raw_t, den_t = term(sel)
            terms.append((t, raw_t, den_t, int(sel.shape[0])))
        if not terms:
            raise ConfigurationError(
                f"every timestep is sample-starved (need {min_n} episodes per t)"
            )
        return terms, skipped

    @staticmethod
    def _average_dai(terms, skipped, notes):
        if skipped:
            notes.append(f"skipped sample-starved t: {skipped}")
        raw = float(np.mean([x[1] for x in terms]))
        den = float(np.mean([x[2] for x in terms]))
        total_n = int(sum(x[3] for x in terms))
        return raw, den, total_n, notes

    # kNN path ----------------------------------------------------------------

    def _action_channel(self, agent: int, actions) -> tuple[SampleColumn, np.ndarray]:
        """(target column, float encoding rows) for one agent's actions."""
        arr = actions[agent]
        if self.agents[agent].spec.action_space.is_discrete:
            return est.discrete_column(arr), self._one_hot_actions(agent, arr)
        return est.continuous_column(arr), arr

    def _history_channel(self, agent: int, act_rows: np.ndarray | None) -> np.ndarray:
        if self.mode is HistoryMode.HIDDEN:
            if act_rows is None:
                return self.agents[agent].hidden_rows
            return self._tau_hidden(agent)
        return self._window_matrix(agent, act_rows)

    def _compute_knn(self, metric, subject, actions):
        notes = [f"history={self.mode.value}"]
        k = self.config.k_neighbors
        seed = self._est_seed(metric, subject)
        cont = est.continuous_column

        if metric == "OAR":
            (i,) = subject
            ycol, _ = self._action_channel(i, actions)
            xcol = cont(self._sub(self.agents[i].obs_rows))
            ycol = self._sub_column(ycol)
            if ycol.is_discrete:
                raw = est.mi_mixed(xcol, ycol, k=k, seed=seed)
                den = est.entropy_discrete(ycol)
            else:
                raw = est.mi_ksg(xcol, ycol, k=k, seed=seed)
                den = est.marginal_entropy(ycol, k=k, seed=seed)
            return raw, den, notes

        if metric == "HAR":
            (i,) = subject
            ycol, _ = self._action_channel(i, actions)
            hist = self._history_channel(i, act_rows=None)
            xcol = cont(self._sub(hist))
            zcol = cont(self._sub(self.agents[i].obs_rows))
            raw = est.cmi_knn(xcol, self._sub_column(ycol), zcol, k=k, seed=seed)
            den = est.cond_entropy(self._sub_column(ycol), zcol, k=k, seed=seed)
            return raw, den, notes

        if metric == "PIF":
            i, j = subject
            _, enc_i = self._action_channel(i, actions)
            ycol, enc_j = self._action_channel(j, actions)
            src = np.hstack([self._history_channel(i, enc_i), self.agents[i].obs_rows])
            cond = np.hstack([self._history_channel(j, enc_j), self.agents[j].obs_rows])
            raw = est.cmi_knn(cont(self._sub(src)), self._sub_column(ycol),
                              cont(self._sub(cond)), k=k, seed=seed)
            den = est.cond_entropy(self._sub_column(ycol), cont(self._sub(cond)),
                                   k=k, seed=seed)
            return raw, den, notes

        if metric == "AA":
            i, j = subject
            xcol, _ = self._action_channel(i, actions)
            ycol, _ = self._action_channel(j, actions)
            z = np.hstack([self.agents[i].obs_rows, self.agents[j].obs_rows])
            zcol = cont(self._sub(z))
            raw = est.cmi_knn(self._sub_column(xcol), self._sub_column(ycol), zcol,
                              k=k, seed=seed)
            den = est.cond_entropy(self._sub_column(ycol), zcol, k=k, seed=seed)
            return raw, den, notes

        # DAI
        ycol, _ = self._action_channel(subject[1], actions)
        terms, skipped = self.dai_term_list(subject, actions)
        raw, den, n, notes = self._average_dai(terms, skipped, list(notes))
        raw_est = EstimateNats(raw, n, "fp.cmi", k)
        den_est = EstimateNats(den, n, "kl.cond_entropy" if not ycol.is_discrete
                               else "ross.cond_entropy", k)
        return raw_est, den_est, notes

    def _knn_dai_term_fn(self, subject, actions):
        i, j = subject
        k = self.config.k_neighbors
        seed = self._est_seed("DAI", subject)
        cont = est.continuous_column
        _, enc_i = self._action_channel(i, actions)
        ycol, enc_j = self._action_channel(j, actions)
        tau_i = self._history_channel(i, enc_i)
        tau_j = self._history_channel(j, enc_j)

        def term(sel):
            ysel = SampleColumn(ycol.kind, ycol.values[sel])
            raw_t = est.cmi_knn(cont(tau_i[sel]), ysel, cont(tau_j[sel]),
                                k=k, seed=seed)
            den_t = est.cond_entropy(ysel, cont(tau_j[sel]), k=k, seed=seed)
            return raw_t.value, den_t.value

        return term

    def _sub_column(self, col: SampleColumn) -> SampleColumn:
        if self.keep is None:
            return col
        return SampleColumn(col.kind, col.values[self.keep])


# ---------------------------------------------------------------------------
# Public per-metric entry points
# ---------------------------------------------------------------------------

def _single(dataset: TrajectoryDataset, metric: str, subject: tuple[int, ...],
            config: DiagnosticConfig) -> DiagnosticResult:
    num = dataset.manifest.num_agents
    for idx in subject:
        if not (0 <= idx < num):
            raise ConfigurationError(f"agent index {idx} out of range")
    if len(subject) == 2 and subject[0] == subject[1]:
        raise ConfigurationError(f"{metric} needs an ordered pair of distinct agents")
    return DiagnosticPipeline(dataset, config).compute(metric, subject)


def compute_oar(dataset, agent: int, config: DiagnosticConfig) -> DiagnosticResult:
    return _single(dataset, "OAR", (agent,), config)


def compute_har(dataset, agent: int, config: DiagnosticConfig) -> DiagnosticResult:
    return _single(dataset, "HAR", (agent,), config)


def compute_pif(dataset, i: int, j: int, config: DiagnosticConfig) -> DiagnosticResult:
    return _single(dataset, "PIF", (i, j), config)


def compute_aa(dataset, i: int, j: int, config: DiagnosticConfig) -> DiagnosticResult:
    return _single(dataset, "AA", (i, j), config)


def compute_dai(dataset, i: int, j: int, config: DiagnosticConfig) -> DiagnosticResult:
    return _single(dataset, "DAI", (i, j), config)


def dai_timestep_terms(dataset, i: int, j: int,
                       config: DiagnosticConfig) -> list[tuple[int, float, float, int]]:
    """The per-timestep (t, raw, denominator, n_t) terms behind compute_dai."""
    pipeline = DiagnosticPipeline(dataset, config)
    terms, _ = pipeline.dai_term_list((i, j), pipeline.original_actions())
    return terms
