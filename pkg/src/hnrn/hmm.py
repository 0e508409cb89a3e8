"""Hazard evaluation over laser observations.

A diagonal-Gaussian hidden Markov model is fit to reduced laser scans with
expectation-maximization. Because state labels carry no fixed meaning across
fits, states are re-ordered by the mean proximity reward of the frames they
claim; the rank, scaled into [0, 1], is the hazard coefficient used to gate
collision avoidance.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .sim import ContractError, LaserScan

log = logging.getLogger(__name__)

_CHECKPOINT_MAGIC = b"HZRDHMM\x00"
_CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Model estimation failed or was fed unusable data."""


class RankingError(RuntimeError):
    """State ranking could not assign every hidden state at least one frame."""


@dataclass
class ObservationSeq:
    """One agent-episode worth of reduced scans, optionally with per-frame rewards."""

    frames: np.ndarray  # shape (T, D)
    episode: int = 0
    rewards: np.ndarray | None = None  # shape (T,) when present


@dataclass
class GaussianHmm:
    transitions: np.ndarray  # (K, K) row-stochastic
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D), diagonal, >= variance_floor
    initial: np.ndarray  # (K,)

    @property
    def n_states(self) -> int:
        return len(self.initial)

    @property
    def obs_dim(self) -> int:
        return self.means.shape[1]


@dataclass
class StateRanking:
    order: np.ndarray  # permutation of states, least hazardous first
    mean_reward: np.ndarray  # (K,) average proximity reward per state
    hazard_of: np.ndarray  # (K,) hazard coefficient per state, in [0, 1]


def reduce_scan(scan: LaserScan, obs_dim: int) -> np.ndarray:
    """Sector minima: the d-th observation is the nearest return in the d-th
    contiguous block of beams."""
    n = scan.n_beams
    if obs_dim < 1 or n % obs_dim != 0:
        raise ContractError(f"obs_dim {obs_dim} must divide beam count {n}")
    return scan.ranges.reshape(obs_dim, n // obs_dim).min(axis=1)


def collision_reward(scan: LaserScan) -> float:
    """Sum of range deficits below max range; 0 only for an empty scan,
    bounded below by -N * max_range."""
    return float(np.sum(scan.ranges - scan.max_range))


def _log_emissions(hmm: GaussianHmm, frames: np.ndarray) -> np.ndarray:
    """Per-frame log density under each state's diagonal Gaussian, shape (T, K)."""
    diff = frames[:, None, :] - hmm.means[None, :, :]  # (T, K, D)
    inv_var = 1.0 / hmm.variances
    quad = np.einsum("tkd,kd->tk", diff * diff, inv_var)
    log_norm = np.sum(np.log(2.0 * np.pi * hmm.variances), axis=1)  # (K,)
    return -0.5 * (quad + log_norm[None, :])


def _scaled_forward(
    hmm: GaussianHmm, log_b: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Forward recursion with per-step normalization.

    Emission densities are exponentiated after subtracting their per-frame
    maximum, so the recursion never under- or overflows; the shifts are folded
    back into the returned log-likelihood.
    """
    t_len, k = log_b.shape
    shifts = log_b.max(axis=1)
    b = np.exp(log_b - shifts[:, None])  # (T, K), max entry 1 per row

    alpha = np.empty((t_len, k))
    scales = np.empty(t_len)
    a = hmm.initial * b[0]
    scales[0] = a.sum()
    if scales[0] <= 0.0:
        raise TrainingError("zero forward mass at t=0")
    alpha[0] = a / scales[0]
    for t in range(1, t_len):
        a = (alpha[t - 1] @ hmm.transitions) * b[t]
        scales[t] = a.sum()
        if scales[t] <= 0.0:
            raise TrainingError(f"zero forward mass at t={t}")
        alpha[t] = a / scales[t]
    loglik = float(np.sum(np.log(scales)) + np.sum(shifts))
    return alpha, scales, loglik


def _scaled_backward(hmm: GaussianHmm, log_b: np.ndarray, scales: np.ndarray) -> np.ndarray:
    t_len, k = log_b.shape
    shifts = log_b.max(axis=1)
    b = np.exp(log_b - shifts[:, None])
    beta = np.empty((t_len, k))
    beta[-1] = 1.0
    for t in range(t_len - 2, -1, -1):
        beta[t] = (hmm.transitions @ (b[t + 1] * beta[t + 1])) / scales[t + 1]
    return beta


def forward_filter(hmm: GaussianHmm, frames: np.ndarray) -> np.ndarray:
    """Posterior over the current hidden state given an observation prefix."""
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    if frames.shape[0] < 1:
        raise ContractError("forward_filter needs a non-empty prefix")
    if frames.shape[1] != hmm.obs_dim:
        raise ContractError(
            f"observation dim {frames.shape[1]} does not match model dim {hmm.obs_dim}"
        )
    alpha, _, _ = _scaled_forward(hmm, _log_emissions(hmm, frames))
    return alpha[-1]


def sequence_log_likelihood(hmm: GaussianHmm, frames: np.ndarray) -> float:
    _, _, loglik = _scaled_forward(hmm, _log_emissions(hmm, frames))
    return loglik


def state_posteriors(hmm: GaussianHmm, frames: np.ndarray) -> np.ndarray:
    """Smoothed per-frame state posteriors (gamma), shape (T, K)."""
    log_b = _log_emissions(hmm, frames)
    alpha, scales, _ = _scaled_forward(hmm, log_b)
    beta = _scaled_backward(hmm, log_b, scales)
    gamma = alpha * beta
    return gamma / gamma.sum(axis=1, keepdims=True)


def _init_model(
    frames: np.ndarray, n_states: int, variance_floor: float, rng: np.random.Generator
) -> GaussianHmm:
    t_len, d = frames.shape
    # Farthest-point seeding keeps initial means apart; identical seeds would
    # collapse EM into the symmetric both-states-at-the-global-mean optimum.
    picks = [int(rng.integers(t_len))]
    dist = np.linalg.norm(frames - frames[picks[0]], axis=1)
    while len(picks) < n_states:
        nxt = int(np.argmax(dist))
        if dist[nxt] <= 0.0:
            nxt = int(rng.integers(t_len))
        picks.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(frames - frames[nxt], axis=1))
    means = frames[picks] + rng.normal(0.0, 1e-3, size=(n_states, d))
    global_var = np.maximum(frames.var(axis=0), variance_floor)
    variances = np.tile(global_var, (n_states, 1))
    transitions = np.full((n_states, n_states), 0.2 / max(n_states - 1, 1))
    np.fill_diagonal(transitions, 0.8 if n_states > 1 else 1.0)
    transitions /= transitions.sum(axis=1, keepdims=True)
    initial = np.full(n_states, 1.0 / n_states)
    return GaussianHmm(transitions, means, variances, initial)


def baum_welch(
    sequences: list[ObservationSeq],
    n_states: int,
    max_iters: int = 50,
    tol: float = 1e-4,
    seed: int = 0,
    variance_floor: float = 1e-4,
) -> tuple[GaussianHmm, list[float]]:
    """Fit a diagonal-Gaussian HMM by EM over multiple sequences.

    Returns the model and the per-iteration total log-likelihood history
    (evaluated before each update), which is non-decreasing up to tol.
    """
    if not sequences or any(seq.frames.shape[0] < 1 for seq in sequences):
        raise TrainingError("baum_welch needs at least one non-empty sequence")
    if n_states < 1:
        raise TrainingError("n_states must be >= 1")
    all_frames = np.concatenate([np.asarray(s.frames, dtype=float) for s in sequences])
    if all_frames.shape[0] < n_states:
        raise TrainingError("need at least as many frames as hidden states")

    rng = np.random.default_rng(seed)
    hmm = _init_model(all_frames, n_states, variance_floor, rng)
    history: list[float] = []

    for iteration in range(max_iters):
        trans_num = np.zeros((n_states, n_states))
        gamma_sum = np.zeros(n_states)  # over t = 1..T-1 per sequence
        occupancy = np.zeros(n_states)  # over all frames
        mean_num = np.zeros_like(hmm.means)
        sq_num = np.zeros_like(hmm.variances)
        initial_num = np.zeros(n_states)
        total_loglik = 0.0

        for seq in sequences:
            frames = np.asarray(seq.frames, dtype=float)
            log_b = _log_emissions(hmm, frames)
            alpha, scales, loglik = _scaled_forward(hmm, log_b)
            beta = _scaled_backward(hmm, log_b, scales)
            total_loglik += loglik

            gamma = alpha * beta
            gamma /= gamma.sum(axis=1, keepdims=True)

            if frames.shape[0] > 1:
                shifts = log_b.max(axis=1)
                b = np.exp(log_b - shifts[:, None])
                # Sum of per-step transition responsibilities collapses to one
                # matrix product: sum_t outer(alpha_t, b_{t+1} beta_{t+1}/c_{t+1}).
                weighted = b[1:] * beta[1:] / scales[1:, None]
                trans_num += hmm.transitions * (alpha[:-1].T @ weighted)
                gamma_sum += gamma[:-1].sum(axis=0)

            occupancy += gamma.sum(axis=0)
            mean_num += gamma.T @ frames
            sq_num += gamma.T @ (frames * frames)
            initial_num += gamma[0]

        history.append(total_loglik)
        if len(history) > 1 and history[-1] - history[-2] < tol:
            break

        # M-step; states with no responsibility mass are re-seeded from data.
        dead = occupancy <= 1e-12
        if dead.any():
            log.warning("re-seeding %d degenerate hidden state(s)", int(dead.sum()))
            for s in np.flatnonzero(dead):
                hmm.means[s] = all_frames[rng.integers(all_frames.shape[0])]
                hmm.variances[s] = np.maximum(all_frames.var(axis=0), variance_floor)
            occupancy = np.where(dead, 1.0, occupancy)

        mean_new = mean_num / occupancy[:, None]
        var_new = sq_num / occupancy[:, None] - mean_new**2
        hmm.means = np.where(dead[:, None], hmm.means, mean_new)
        hmm.variances = np.where(
            dead[:, None], hmm.variances, np.maximum(var_new, variance_floor)
        )

        if n_states > 1 and gamma_sum.sum() > 0:
            denom = np.where(gamma_sum > 1e-12, gamma_sum, 1.0)
            trans_new = trans_num / denom[:, None]
            rows = trans_new.sum(axis=1)
            keep = (rows <= 1e-12) | dead
            trans_new = np.where(
                keep[:, None], hmm.transitions, trans_new / np.where(rows > 1e-12, rows, 1.0)[:, None]
            )
            hmm.transitions = _floor_rows(trans_new)
        hmm.initial = _floor_rows(initial_num[None, :] / initial_num.sum())[0]

    return hmm, history


def _floor_rows(rows: np.ndarray, eps: float = 1e-10) -> np.ndarray:
    """Keep every probability strictly positive so unseen states or starts
    cannot zero out a later filtering pass; the perturbation is far below the
    EM monotonicity tolerance."""
    floored = np.maximum(rows, eps)
    return floored / floored.sum(axis=1, keepdims=True)


def classify(
    hmm: GaussianHmm, ranking: StateRanking, frames: np.ndarray
) -> tuple[int, float]:
    """Most likely current state under the forward filter, with its hazard.

    Ties in the posterior break toward the lowest state index.
    """
    posterior = forward_filter(hmm, frames)
    state = int(np.argmax(posterior))
    return state, float(ranking.hazard_of[state])


def rank_states(hmm: GaussianHmm, sequences: list[ObservationSeq]) -> StateRanking:
    """Order hidden states by the mean proximity reward of their frames.

    Every sequence must carry per-frame rewards. Each frame is assigned to its
    argmax smoothed posterior state; a state that claims no frames is an
    error (more data is needed before the ranking is meaningful).
    """
    k = hmm.n_states
    reward_sum = np.zeros(k)
    counts = np.zeros(k, dtype=int)
    for seq in sequences:
        if seq.rewards is None:
            raise ContractError("rank_states needs per-frame rewards on every sequence")
        gamma = state_posteriors(hmm, np.asarray(seq.frames, dtype=float))
        assigned = np.argmax(gamma, axis=1)
        np.add.at(reward_sum, assigned, np.asarray(seq.rewards, dtype=float))
        np.add.at(counts, assigned, 1)
    if (counts == 0).any():
        empty = np.flatnonzero(counts == 0).tolist()
        raise RankingError(f"states {empty} received no frames; collect more data")

    mean_reward = reward_sum / counts
    # Descending mean reward: closer to zero = emptier surroundings = safer.
    order = np.lexsort((np.arange(k), -mean_reward))
    hazard = np.empty(k)
    if k > 1:
        hazard[order] = np.arange(k) / (k - 1)
    else:
        hazard[:] = 0.0
    return StateRanking(order=order, mean_reward=mean_reward, hazard_of=hazard)


def save_hmm(path: str, hmm: GaussianHmm, ranking: StateRanking | None = None) -> None:
    """Write model (and optional ranking) as a flat little-endian binary file."""
    k, d = hmm.n_states, hmm.obs_dim
    if ranking is None:
        ranking = StateRanking(
            order=np.arange(k), mean_reward=np.zeros(k), hazard_of=np.zeros(k)
        )
    with open(path, "wb") as f:
        f.write(_CHECKPOINT_MAGIC)
        f.write(struct.pack("<qqq", _CHECKPOINT_VERSION, k, d))
        for arr in (hmm.transitions, hmm.means, hmm.variances, hmm.initial, ranking.mean_reward):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(ranking.order, dtype="<i8").tobytes())
        f.write(np.ascontiguousarray(ranking.hazard_of, dtype="<f8").tobytes())


def load_hmm(path: str) -> tuple[GaussianHmm, StateRanking]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a hazard-model checkpoint")
        version, k, d = struct.unpack("<qqq", f.read(24))
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")

        def block(count: int, dtype: str) -> np.ndarray:
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError("truncated checkpoint")
            return np.frombuffer(raw, dtype=dtype).copy()

        transitions = block(k * k, "<f8").reshape(k, k)
        means = block(k * d, "<f8").reshape(k, d)
        variances = block(k * d, "<f8").reshape(k, d)
        initial = block(k, "<f8")
        mean_reward = block(k, "<f8")
        order = block(k, "<i8")
        hazard = block(k, "<f8")
    hmm = GaussianHmm(transitions, means, variances, initial)
    ranking = StateRanking(order=order, mean_reward=mean_reward, hazard_of=hazard)
    return hmm, ranking
