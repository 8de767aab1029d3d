"""Blocked Gibbs sampler for the truncated HDP mixture of products of multinomials.

One sweep runs six conditional updates:

1. cell assignments ``z``                          (:func:`step_assignments`)
2. profiles ``phi``                                (:func:`step_profiles`)
3. auxiliaries ``t, s`` and global sticks ``V``    (:func:`step_global_weights`)
4. per-observation sticks ``u`` / weights ``pi``   (:func:`step_group_weights`)
5. concentrations ``gamma`` and ``alpha0``         (:func:`step_concentrations`)
6. missing cells                                   (:func:`step_impute`)

Each step is a plain function returning the redrawn quantities, which keeps
them individually testable against their closed-form conditionals.
:func:`sweep` applies them in order and :func:`run_chain` drives a full run.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import NumericalError, SaturationError
from .model import (
    BETA_FLOOR,
    LOG_CLAMP,
    ChainConfig,
    CountTables,
    Dataset,
    Hyperparameters,
    ModelState,
    compute_counts,
    draw_assignments,
    draw_group_weights,
    draw_profiles,
    init_state,
    padded_phi_support,
    stick_break,
    sticks_from_weights,
)
from .rng import RandomStream, beta_log_draw, gamma_draw

log = logging.getLogger(__name__)

WORKERS_ENV = "HDPMPM_WORKERS"
# Row blocks used when parallel_cells is on; fixed so results do not depend
# on the worker count.
N_ROW_BLOCKS = 16
_TINY = np.finfo(float).tiny


class CellParallelism:
    """Per-block random substreams and a thread pool for Steps 1 and 6.

    Rows are split into :data:`N_ROW_BLOCKS` contiguous blocks, each owning
    an independent substream, so the draws are identical whatever the number
    of worker threads.
    """

    def __init__(self, n, stream: RandomStream, workers=None):
        if workers is None:
            workers = int(os.environ.get(WORKERS_ENV, os.cpu_count() or 1))
        self.blocks = [b for b in np.array_split(np.arange(n), min(N_ROW_BLOCKS, n)) if b.size]
        self.streams = [stream.substream(10_000 + b) for b in range(len(self.blocks))]
        self.pool = ThreadPoolExecutor(max_workers=max(1, workers))

    def map(self, fn):
        return list(self.pool.map(fn, self.blocks, self.streams))

    def close(self):
        self.pool.shutdown(wait=True)


def step_assignments(ds: Dataset, state: ModelState, stream: RandomStream,
                     parallel: Optional[CellParallelism] = None) -> np.ndarray:
    """Redraw every ``z_ij`` with probability proportional to ``pi_ik * phi_k(x_ij)``.

    Raises
    ------
    NumericalError
        If every weight of some cell is zero.
    """
    if parallel is None:
        z, bad = draw_assignments(stream, state.pi, state.phi, state.x)
    else:
        parts = parallel.map(
            lambda rows, s: draw_assignments(s, state.pi[rows], state.phi, state.x[rows]))
        z = np.concatenate([zp for zp, _ in parts])
        bad = np.empty((0, 2), dtype=np.int64)
        for rows, (_, b) in zip(parallel.blocks, parts):
            if b.size:
                bad = np.array([[rows[b[0, 0]], b[0, 1]]])
                break
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise NumericalError(f"zero normalizer in assignment step at cell ({i}, {j})")
    return z


def step_profiles(counts: CountTables, levels, stream: RandomStream) -> np.ndarray:
    """Draw ``phi[k, j] ~ Dirichlet(1 + n_counts[k, j, :D_j])`` independently."""
    n_counts = counts.n_counts
    support = padded_phi_support(levels, n_counts.shape[2])
    return draw_profiles(stream, 1.0 + n_counts, support)


def _table_counts(m, weights, stream):
    """Auxiliary table counts ``s_ik = sum_h Bernoulli(w_k / (w_k + h - 1))``.

    One Bernoulli per assigned cell, so ``m.sum()`` uniforms per call.  The
    ``h = 1`` trial succeeds with probability one.
    """
    n, K = m.shape
    flat = m.ravel()
    total = int(flat.sum())
    owner = np.repeat(np.arange(n * K), flat)
    starts = np.cumsum(flat) - flat
    h = np.arange(total) - np.repeat(starts, flat)  # 0-based trial index (= h - 1)
    w = np.broadcast_to(weights, (n, K)).ravel()[owner]
    with np.errstate(invalid="ignore", divide="ignore"):
        prob = np.where(h == 0, 1.0, w / (w + h))
    hits = stream.generator.random(total) < prob
    return np.bincount(owner, weights=hits, minlength=n * K).astype(np.int64).reshape(n, K)


def step_global_weights(counts: CountTables, state: ModelState, stream: RandomStream):
    """Auxiliary-variable update of the global weights.

    Returns ``(t, s, V, beta, log_t, log1m_V)``: ``t_i ~ Beta(alpha0, sum_k m_ik)``,
    table counts ``s`` given the previous ``beta``, then
    ``V_k ~ Beta(1 + S_k, gamma + sum_{h>k} S_h)`` with ``S = s.sum(0)``.
    ``t`` and ``V`` are drawn in log space; the exact logs are returned too.
    """
    m = counts.m
    alpha0 = max(state.alpha0, _TINY)
    n_i = m.sum(axis=1)
    log_t, _ = beta_log_draw(stream, alpha0, np.maximum(n_i, BETA_FLOOR), check=False)
    s = _table_counts(m, alpha0 * state.beta, stream)
    S = s.sum(axis=0)
    after = np.cumsum(S[::-1])[::-1]  # sum_{h>=k} S_h
    K = S.size
    log_V, log1m_V = beta_log_draw(stream, 1.0 + S[:-1],
                                   np.maximum(state.gamma + after[1:], _TINY), check=False)
    V = np.ones(K)
    V[:-1] = np.exp(log_V)
    return np.exp(log_t), s, V, stick_break(V, check=False), log_t, log1m_V


def step_group_weights(counts: CountTables, state: ModelState, stream: RandomStream):
    """Draw ``u_ik ~ Beta(alpha0 beta_k + m_ik, alpha0 (1 - sum_{h<=k} beta_h) + sum_{h>k} m_ih)``.

    Returns ``(u, pi)`` with ``u[:, -1] == 1``.
    """
    return draw_group_weights(stream, state.alpha0, state.beta, state.n, counts.m)


def _log_terms(state):
    if state.log1m_V is not None:
        log1m_V = state.log1m_V
    else:
        log1m_V = np.log1p(-np.clip(state.V[:-1], LOG_CLAMP, 1.0 - LOG_CLAMP))
    if state.log_t is not None:
        log_t = state.log_t
    else:
        log_t = np.log(np.clip(state.t, LOG_CLAMP, 1.0 - LOG_CLAMP))
    return log1m_V, log_t


def step_concentrations(state: ModelState, hp: Hyperparameters, stream: RandomStream):
    """Gamma updates for ``gamma`` (from ``V``) and ``alpha0`` (from ``s`` and ``t``).

    ``gamma ~ Gamma(a + K - 1, b - sum_{k<K} log(1 - V_k))`` and
    ``alpha0 ~ Gamma(c + sum s, d - sum log t_i)``.  Exact log terms carried
    on the state are used when present; otherwise ``V`` and ``t`` are clamped
    into ``[1e-12, 1 - 1e-12]`` before taking logs.
    """
    log1m_V, log_t = _log_terms(state)
    if not np.all(np.isfinite(log1m_V)):
        k = int(np.nonzero(~np.isfinite(log1m_V))[0][0])
        raise NumericalError(f"non-finite log(1 - V[{k}]) (V[{k}] = {state.V[k]!r}) "
                             "in concentration step")
    if not np.all(np.isfinite(log_t)):
        i = int(np.nonzero(~np.isfinite(log_t))[0][0])
        raise NumericalError(f"non-finite log t[{i}] (t[{i}] = {state.t[i]!r}) "
                             "in concentration step")
    K = state.K
    gamma = gamma_draw(stream, hp.a + K - 1, hp.b - log1m_V.sum(), check=False)
    alpha0 = gamma_draw(stream, hp.c + state.s.sum(), hp.d - log_t.sum(), check=False)
    return max(float(gamma), _TINY), max(float(alpha0), _TINY)


def _impute_rows(stream, phi, z, x, mask, levels):
    i, j = np.nonzero(mask)
    if i.size == 0:
        return x
    probs = phi[z[i, j], j, :]
    cum = np.cumsum(probs, axis=-1)
    target = (1.0 - stream.generator.random(i.size)) * cum[:, -1]
    draws = np.minimum(np.sum(cum < target[:, None], axis=-1), levels[j] - 1) + 1
    x = x.copy()
    x[i, j] = draws
    return x


def step_impute(ds: Dataset, state: ModelState, stream: RandomStream,
                parallel: Optional[CellParallelism] = None) -> np.ndarray:
    """Redraw each missing cell from the profile of its current cluster.

    Observed cells are never touched; with no missing cells the current
    ``x`` is returned as-is and no random numbers are consumed.
    """
    if not ds.mask.any():
        return state.x
    if parallel is None:
        return _impute_rows(stream, state.phi, state.z, state.x, ds.mask, ds.levels)
    parts = parallel.map(lambda rows, s: _impute_rows(
        s, state.phi, state.z[rows], state.x[rows], ds.mask[rows], ds.levels))
    return np.concatenate(parts)


def relabel_state(state: ModelState):
    """Permute cluster labels so that ``beta`` is in decreasing order.

    The sort is stable.  Returns ``(new_state, perm)`` where new label ``k``
    is old label ``perm[k]``; ``V`` and ``u`` are rebuilt from the permuted
    weights.  Per-cell likelihoods ``pi[i, z_ij] * phi[z_ij, j, x_ij]`` are
    unchanged bit for bit.
    """
    perm = np.argsort(-state.beta, kind="stable")
    if np.array_equal(perm, np.arange(perm.size)):
        return state.copy(), perm
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size)
    beta = state.beta[perm]
    pi = state.pi[:, perm]
    new = ModelState(
        z=inverse[state.z], x=state.x.copy(), phi=state.phi[perm].copy(),
        V=sticks_from_weights(beta), beta=beta, u=sticks_from_weights(pi), pi=pi,
        gamma=state.gamma, alpha0=state.alpha0, t=state.t.copy(), s=state.s[:, perm].copy(),
        log_t=None if state.log_t is None else state.log_t.copy(),
    )
    return new, perm


@dataclass
class SweepHooks:
    """Replaceable step functions; used by the joint-distribution test to inject faults."""

    assignments: Callable = step_assignments
    profiles: Callable = step_profiles
    global_weights: Callable = step_global_weights
    group_weights: Callable = step_group_weights
    concentrations: Callable = step_concentrations
    impute: Callable = step_impute


DEFAULT_HOOKS = SweepHooks()


def sweep(ds: Dataset, state: ModelState, hp: Hyperparameters, stream: RandomStream,
          relabel: bool = False, parallel: Optional[CellParallelism] = None,
          hooks: SweepHooks = DEFAULT_HOOKS, concentrations_first: bool = False):
    """Run Steps 1-6 once, updating ``state`` in place.

    With ``relabel`` the state is permuted into decreasing-``beta`` order
    after Step 5.  Returns ``(counts, occupied, perm)``; ``perm`` is ``None``
    when no relabeling happened.

    Step 3 draws ``t`` and ``s`` with ``pi`` integrated out, and Step 5 reads
    only those, so in the default order the new ``alpha0`` ignores the ``pi``
    just drawn in Step 4.  ``concentrations_first`` runs Step 5 before Step 4,
    which makes the sweep an exact partially collapsed Gibbs sampler.
    """
    state.z = hooks.assignments(ds, state, stream, parallel)
    counts = compute_counts(ds, state)
    state.phi = hooks.profiles(counts, ds.levels, stream)
    (state.t, state.s, state.V, state.beta,
     state.log_t, state.log1m_V) = hooks.global_weights(counts, state, stream)
    if concentrations_first:
        state.gamma, state.alpha0 = hooks.concentrations(state, hp, stream)
        state.u, state.pi = hooks.group_weights(counts, state, stream)
    else:
        state.u, state.pi = hooks.group_weights(counts, state, stream)
        state.gamma, state.alpha0 = hooks.concentrations(state, hp, stream)
    perm = None
    if relabel:
        new, perm = relabel_state(state)
        state.__dict__.update(new.__dict__)
        counts = CountTables(m=counts.m[:, perm], n_counts=counts.n_counts[perm])
    state.x = hooks.impute(ds, state, stream, parallel)
    occupied = int(np.count_nonzero(counts.m.sum(axis=0)))
    return counts, occupied, perm


@dataclass
class Draw:
    """One stored posterior draw.  ``pi``/``z`` are present only when stored."""

    iteration: int
    beta: np.ndarray
    phi: np.ndarray
    gamma: float
    alpha0: float
    occupied: int
    pi: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    permutation: Optional[np.ndarray] = None

    @property
    def K(self):
        return self.beta.shape[0]


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws and per-sweep diagnostics of one chain."""

    draws: list
    kept_iterations: list
    occupied_counts: np.ndarray
    config: ChainConfig
    hyperparameters: Hyperparameters
    levels: np.ndarray
    variable_names: tuple = ()
    saturation_events: list = field(default_factory=list)
    restarts: int = 0
    has_pi: bool = True
    has_z: bool = False
    started: float = 0.0
    finished: float = 0.0

    def __len__(self):
        return len(self.draws)

    @property
    def K(self):
        return self.hyperparameters.K


class _Saturated(Exception):
    def __init__(self, sweep_index, K):
        self.sweep_index = sweep_index
        self.K = K


def _snapshot(state, sweep_index, occupied, cfg, relabel_output):
    perm = None
    if relabel_output:
        state, perm = relabel_state(state)
    return Draw(
        iteration=sweep_index, beta=state.beta.copy(), phi=state.phi.copy(),
        gamma=float(state.gamma), alpha0=float(state.alpha0), occupied=occupied,
        pi=state.pi.copy() if cfg.store_pi else None,
        z=state.z.copy() if cfg.store_z else None,
        permutation=perm,
    )


def _run_once(ds, hp, cfg, stream, restart_on_saturation, progress):
    state = init_state(ds, hp, stream)
    parallel = CellParallelism(ds.n, stream) if cfg.parallel_cells else None
    draws, kept, events = [], [], []
    occupied_counts = np.zeros(cfg.iterations, dtype=np.int64)
    try:
        for it in range(1, cfg.iterations + 1):
            try:
                _, occupied, _ = sweep(ds, state, hp, stream, relabel=cfg.relabel_in_chain,
                                       parallel=parallel,
                                       concentrations_first=cfg.concentrations_first)
            except NumericalError as exc:
                raise NumericalError(f"sweep {it}: {exc}") from exc
            occupied_counts[it - 1] = occupied
            if occupied == hp.K and it > cfg.burn_in:
                if restart_on_saturation:
                    raise _Saturated(it, hp.K)
                events.append(it)
            if cfg.keeps(it):
                draws.append(_snapshot(state, it, occupied, cfg,
                                       cfg.relabel and not cfg.relabel_in_chain))
                kept.append(it)
            if progress is not None:
                progress(it, occupied)
    finally:
        if parallel is not None:
            parallel.close()
    return draws, kept, occupied_counts, events


def run_chain(ds: Dataset, hp: Hyperparameters, cfg: ChainConfig,
              progress: Optional[Callable[[int, int], None]] = None) -> PosteriorDraws:
    """Initialize and run the sampler, handling truncation saturation.

    Saturation means every one of the ``K`` clusters is occupied on some
    post-burn-in sweep.  Under ``"abort"`` that raises
    :class:`~hdpmpm.errors.SaturationError`.  Under ``"grow"`` the chain is
    rerun from scratch with ``K + grow_step``; once ``max_restarts`` reruns
    are used up the last run is kept and its saturation sweeps are reported
    in ``saturation_events``.

    Restart ``r`` draws from substream ``r`` of ``RandomStream(cfg.seed)``,
    so identical ``(ds, hp, cfg)`` always give identical draws.
    """
    root = RandomStream(cfg.seed)
    started = time.time()
    restarts = 0
    while True:
        stream = root.substream(restarts)
        last_try = cfg.saturation_policy == "grow" and restarts >= cfg.max_restarts
        try:
            draws, kept, occ, events = _run_once(ds, hp, cfg, stream, not last_try, progress)
        except _Saturated as sat:
            if cfg.saturation_policy == "abort":
                raise SaturationError(
                    f"all K={sat.K} clusters occupied at sweep {sat.sweep_index}; "
                    f"increase K or use the 'grow' policy", events=[sat.sweep_index]) from None
            log.warning("saturation at sweep %d with K=%d; restarting with K=%d",
                        sat.sweep_index, sat.K, sat.K + cfg.grow_step)
            hp = replace(hp, K=hp.K + cfg.grow_step)
            restarts += 1
            continue
        if events:
            log.warning("K=%d saturated on %d post-burn-in sweeps after %d restarts",
                        hp.K, len(events), restarts)
        return PosteriorDraws(
            draws=draws, kept_iterations=kept, occupied_counts=occ, config=cfg,
            hyperparameters=hp, levels=np.asarray(ds.levels), variable_names=ds.variable_names,
            saturation_events=events, restarts=restarts, has_pi=cfg.store_pi,
            has_z=cfg.store_z, started=started, finished=time.time(),
        )
