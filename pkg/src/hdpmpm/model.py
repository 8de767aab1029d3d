"""Data, hyperparameter and sampler-state types, plus prior simulation.

Conventions used across the package:

* Level codes in a :class:`Dataset` are 1-based (``1..D_j``); ``0`` is the
  missing sentinel and the boolean ``mask`` is authoritative.
* Cluster labels, variable indices and level indices inside arrays are
  0-based numpy indices.
* Profile probabilities are stored in a padded array ``phi[k, j, d]`` of
  shape ``(K, p, max(D_j))``; entries with ``d >= D_j`` are exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InitializationError, ParameterError
from .rng import RandomStream, beta_draw, beta_log_draw, gamma_draw

MISSING = 0
# Floors applied where a Beta parameter or residual stick underflows.
BETA_FLOOR = 1e-10
# Clamp for V_k and t_i before taking logs.
LOG_CLAMP = 1e-12
_TINY = np.finfo(float).tiny


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ``n x p`` matrix of categorical codes with a missingness mask.

    Parameters
    ----------
    cells : array_like of int, shape (n, p)
        Level codes in ``1..D_j``; ``0`` marks a missing cell.
    levels : array_like of int, shape (p,)
        Number of levels ``D_j`` of each variable (each at least 2).
    mask : array_like of bool, optional
        ``True`` where the cell is missing.  Defaults to ``cells == 0``.
    variable_names : sequence of str, optional
    level_labels : sequence of (sequence of str or None), optional
    """

    cells: np.ndarray
    levels: np.ndarray
    mask: Optional[np.ndarray] = None
    variable_names: Optional[Sequence[str]] = None
    level_labels: Optional[Sequence[Optional[Sequence[str]]]] = None

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise ParameterError(f"cells must be a 2-D matrix, got shape {cells.shape}")
        if not np.issubdtype(cells.dtype, np.integer):
            if not np.all(np.equal(np.mod(cells, 1), 0)):
                raise ParameterError("cells must hold integer level codes")
        n, p = cells.shape
        if n < 1 or p < 1:
            raise ParameterError(f"dataset needs n >= 1 and p >= 1, got {cells.shape}")
        levels = np.asarray(self.levels, dtype=np.int64).reshape(-1)
        if levels.shape != (p,):
            raise ParameterError(f"levels has length {levels.size}, expected {p}")
        if np.any(levels < 2):
            bad = [int(j) for j in np.nonzero(levels < 2)[0]]
            raise ParameterError(f"variables {bad} have fewer than 2 levels")
        mask = cells == MISSING if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != (n, p):
            raise ParameterError(f"mask shape {mask.shape} does not match cells {cells.shape}")
        names = self.variable_names
        names = tuple(f"V{j + 1}" for j in range(p)) if names is None else tuple(str(s) for s in names)
        if len(names) != p:
            raise ParameterError(f"{len(names)} variable names for {p} variables")
        labels = self.level_labels
        if labels is not None:
            labels = tuple(None if lab is None else tuple(str(s) for s in lab) for lab in labels)
            if len(labels) != p:
                raise ParameterError(f"{len(labels)} label lists for {p} variables")
        object.__setattr__(self, "cells", _frozen(cells.astype(np.int64)))
        object.__setattr__(self, "levels", _frozen(levels))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "level_labels", labels)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    @property
    def p(self) -> int:
        return self.cells.shape[1]

    @property
    def max_levels(self) -> int:
        return int(self.levels.max())

    @property
    def missing_rates(self) -> np.ndarray:
        return self.mask.mean(axis=0)

    def with_mask(self, mask) -> "Dataset":
        """Copy with ``mask`` applied: masked cells are set to the sentinel."""
        mask = np.asarray(mask, dtype=bool) | self.mask
        cells = np.where(mask, MISSING, self.cells)
        return replace(self, cells=cells, mask=mask)


@dataclass(frozen=True)
class Hyperparameters:
    """Truncation level and Gamma hyperprior constants.

    ``gamma ~ Gamma(a, b)`` and ``alpha0 ~ Gamma(c, d)`` in shape/rate form.
    """

    K: int = 30
    a: float = 0.25
    b: float = 0.25
    c: float = 0.25
    d: float = 0.25

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ParameterError(f"K must be an integer >= 2, got {self.K}")
        for name in "abcd":
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"hyperparameter {name} must be positive, got {v}")


@dataclass(frozen=True)
class ChainConfig:
    """MCMC run settings.

    ``saturation_policy`` is ``"grow"`` (restart with ``K + grow_step``, at
    most ``max_restarts`` times) or ``"abort"``.  ``relabel`` sorts the stored
    draws by decreasing ``beta``; ``relabel_in_chain`` additionally feeds the
    permuted state back into the chain.  ``concentrations_first`` runs
    Step 5 before Step 4; see :func:`~hdpmpm.sampler.sweep`.
    """

    iterations: int = 30000
    burn_in: int = 15000
    thin: int = 5
    seed: int = 0
    relabel: bool = True
    relabel_in_chain: bool = False
    concentrations_first: bool = False
    saturation_policy: str = "grow"
    grow_step: int = 10
    max_restarts: int = 3
    parallel_cells: bool = False
    store_pi: bool = True
    store_z: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ParameterError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ParameterError("thin must be at least 1")
        if self.saturation_policy not in ("grow", "abort"):
            raise ParameterError(f"unknown saturation policy {self.saturation_policy!r}")
        if self.grow_step < 1 or self.max_restarts < 0:
            raise ParameterError("grow_step must be >= 1 and max_restarts >= 0")

    @property
    def n_kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def keeps(self, sweep: int) -> bool:
        """Whether 1-based sweep index ``sweep`` is stored."""
        return sweep > self.burn_in and (sweep - self.burn_in) % self.thin == 0


@dataclass(eq=False)
class ModelState:
    """Full parameter state of one Gibbs iteration.

    Attributes
    ----------
    z : (n, p) int
        0-based cluster of every cell.
    x : (n, p) int
        Completed data: observed codes plus current imputations (1-based).
    phi : (K, p, Dmax) float
        Profile simplices, zero-padded past ``D_j``.
    V, beta : (K,) float
        Global sticks (``V[-1] == 1``) and weights.
    u, pi : (n, K) float
        Per-observation sticks (``u[:, -1] == 1``) and weights.
    gamma, alpha0 : float
        Concentrations.
    t : (n,) float
        Auxiliary Beta variables.
    s : (n, K) int
        Auxiliary table counts.
    log_t, log1m_V : ndarray or None
        Exact ``log t_i`` and ``log(1 - V_k)`` (k < K) from the draws that
        produced ``t`` and ``V``.  For small concentrations the linear values
        round to 0 or 1, so the concentration step reads these instead.
        ``None`` means "derive from the linear values".
    """

    z: np.ndarray
    x: np.ndarray
    phi: np.ndarray
    V: np.ndarray
    beta: np.ndarray
    u: np.ndarray
    pi: np.ndarray
    gamma: float
    alpha0: float
    t: np.ndarray
    s: np.ndarray
    log_t: Optional[np.ndarray] = None
    log1m_V: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return self.beta.shape[0]

    @property
    def n(self) -> int:
        return self.z.shape[0]

    def imputed_cells(self, ds: Dataset) -> np.ndarray:
        return self.x[ds.mask]

    def copy(self) -> "ModelState":
        return ModelState(
            z=self.z.copy(), x=self.x.copy(), phi=self.phi.copy(), V=self.V.copy(),
            beta=self.beta.copy(), u=self.u.copy(), pi=self.pi.copy(),
            gamma=float(self.gamma), alpha0=float(self.alpha0),
            t=self.t.copy(), s=self.s.copy(),
            log_t=None if self.log_t is None else self.log_t.copy(),
            log1m_V=None if self.log1m_V is None else self.log1m_V.copy(),
        )


@dataclass
class CountTables:
    """``m[i, k]`` cells of row i in cluster k; ``n_counts[k, j, d]`` responses."""

    m: np.ndarray
    n_counts: np.ndarray


@dataclass
class ValidationReport:
    ok: bool
    findings: list = field(default_factory=list)
    missing_rates: np.ndarray = None
    single_level_variables: list = field(default_factory=list)
    unobserved_variables: list = field(default_factory=list)

    def __str__(self):
        lines = [f"ok={self.ok}"]
        lines += [f"  {kind}: {detail}" for kind, detail in self.findings]
        return "\n".join(lines)


def validate_dataset(ds: Dataset, max_findings: int = 50) -> ValidationReport:
    """Check cell ranges and mask consistency; never raises.

    Hard violations (``ok=False``): codes outside ``1..D_j`` in observed
    cells, and cells whose sentinel disagrees with the mask.  Variables with a
    single observed level, or none at all, are reported but do not fail.
    """
    findings = []
    hard = False
    observed = ~ds.mask
    out = observed & ((ds.cells < 1) | (ds.cells > ds.levels[None, :]))
    for i, j in zip(*np.nonzero(out)):
        hard = True
        if len(findings) < max_findings:
            findings.append(("out_of_range",
                             f"cell ({i}, {ds.variable_names[j]}) = {ds.cells[i, j]} "
                             f"outside 1..{ds.levels[j]}"))
    mismatch = ds.mask != (ds.cells == MISSING)
    for i, j in zip(*np.nonzero(mismatch)):
        hard = True
        if len(findings) < max_findings:
            findings.append(("mask_mismatch",
                             f"cell ({i}, {ds.variable_names[j]}) mask={bool(ds.mask[i, j])} "
                             f"value={ds.cells[i, j]}"))
    single, unobserved = [], []
    for j in range(ds.p):
        vals = ds.cells[observed[:, j], j]
        if vals.size == 0:
            unobserved.append(j)
            findings.append(("unobserved_variable", f"{ds.variable_names[j]} has no observed values"))
        elif np.unique(vals).size == 1:
            single.append(j)
            findings.append(("single_level", f"{ds.variable_names[j]} has one observed level"))
    return ValidationReport(ok=not hard, findings=findings, missing_rates=ds.missing_rates,
                            single_level_variables=single, unobserved_variables=unobserved)


def stick_break(v, check=True) -> np.ndarray:
    """Truncated stick-breaking weights ``v_k * prod_{h<k} (1 - v_h)``.

    Works along the last axis, so a ``(n, K)`` matrix of sticks gives ``n``
    weight vectors.  The last stick must equal 1.
    """
    v = np.asarray(v, dtype=float)
    if check:
        if v.ndim == 0 or v.shape[-1] == 0:
            raise ParameterError("stick_break needs at least one stick")
        if np.any(v[..., -1] != 1.0):
            raise ParameterError("the last stick must equal 1 exactly")
        if np.any(v < 0) or np.any(v > 1):
            raise ParameterError("sticks must lie in [0, 1]")
    remaining = np.cumprod(1.0 - v[..., :-1], axis=-1)
    lead = np.ones(v.shape[:-1] + (1,))
    return v * np.concatenate([lead, remaining], axis=-1)


def sticks_from_weights(w) -> np.ndarray:
    """Invert :func:`stick_break` along the last axis (``v[..., -1] = 1``)."""
    w = np.asarray(w, dtype=float)
    before = np.concatenate([np.zeros(w.shape[:-1] + (1,)), np.cumsum(w[..., :-1], axis=-1)], axis=-1)
    remaining = 1.0 - before
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(remaining > 0, w / np.where(remaining > 0, remaining, 1.0), 1.0)
    v = np.clip(v, 0.0, 1.0)
    v[..., -1] = 1.0
    return v


def group_stick_params(alpha0, beta, m=None):
    """Beta parameters of the per-observation sticks ``u[:, :K-1]``.

    With counts ``m`` (shape ``(n, K)``) these are the full-conditional
    parameters; without, the prior ones.  Both are floored at
    :data:`BETA_FLOOR`.
    """
    beta = np.asarray(beta, dtype=float)
    head = alpha0 * beta[:-1]
    tail = alpha0 * (1.0 - np.cumsum(beta)[:-1])
    if m is not None:
        m = np.asarray(m)
        head = head[None, :] + m[:, :-1]
        after = np.cumsum(m[:, ::-1], axis=1)[:, ::-1]  # sum_{h>=k} m_ih
        tail = tail[None, :] + after[:, 1:]
    return np.maximum(head, BETA_FLOOR), np.maximum(tail, BETA_FLOOR)


def draw_group_weights(stream, alpha0, beta, n, m=None):
    """Draw ``(u, pi)`` for ``n`` observations, prior (``m=None``) or conditional."""
    K = beta.shape[0]
    a, b = group_stick_params(alpha0, beta, m)
    if m is None:
        a = np.broadcast_to(a, (n, K - 1))
        b = np.broadcast_to(b, (n, K - 1))
    u = np.ones((n, K))
    u[:, :-1] = beta_draw(stream, a, b, check=False)
    return u, stick_break(u, check=False)


def padded_phi_support(levels, max_levels=None) -> np.ndarray:
    """Boolean ``(p, Dmax)`` array marking valid level slots."""
    levels = np.asarray(levels)
    dmax = int(levels.max()) if max_levels is None else max_levels
    return np.arange(dmax)[None, :] < levels[:, None]


def draw_profiles(stream, concentrations, support) -> np.ndarray:
    """Independent Dirichlet draws over the valid slots of a padded array.

    ``concentrations`` has shape ``(K, p, Dmax)``; slots outside ``support``
    are ignored and come back as exact zeros.
    """
    sup = np.broadcast_to(support, concentrations.shape)
    g = np.zeros(concentrations.shape)
    g[sup] = stream.generator.standard_gamma(concentrations[sup])
    total = g.sum(axis=-1, keepdims=True)
    return g / total


_NO_CELLS = np.empty((0, 2), dtype=np.int64)


def draw_assignments(stream, pi, phi, x):
    """Cluster assignments given weights, profiles and completed data.

    Returns ``(z, bad)`` where ``bad`` lists ``(i, j)`` cells whose weights
    ``pi[i, k] * phi[k, j, x_ij - 1]`` are all zero (``z`` is then undefined
    there).
    """
    n, p = x.shape
    # (p, Dmax, K) so that the gather below yields (n, p, K) contiguous
    lik = phi.transpose(1, 2, 0)[np.arange(p), x - 1]
    cum = lik * pi[:, None, :]
    cum.cumsum(axis=-1, out=cum)
    total = cum[..., -1]
    positive = total > 0
    bad = _NO_CELLS if positive.all() else np.argwhere(~positive)
    target = (1.0 - stream.generator.random((n, p))) * total
    z = (cum < target[..., None]).sum(axis=-1)
    np.minimum(z, pi.shape[1] - 1, out=z)
    return z, bad


def compute_counts(ds: Dataset, state: ModelState) -> CountTables:
    """Membership counts ``m`` and response counts ``n_counts``.

    Imputed cells count as data for the current iteration.
    """
    K = state.K
    n, p = state.z.shape
    dmax = state.phi.shape[2]
    rows = np.repeat(np.arange(n), p)
    z = state.z.ravel()
    m = np.bincount(rows * K + z, minlength=n * K).reshape(n, K)
    cols = np.tile(np.arange(p), n)
    key = (z * p + cols) * dmax + (state.x.ravel() - 1)
    n_counts = np.bincount(key, minlength=K * p * dmax).reshape(K, p, dmax)
    return CountTables(m=m, n_counts=n_counts)


def _draw_concentration(stream, shape, rate):
    return max(float(gamma_draw(stream, shape, rate)), _TINY)


def sample_prior(n: int, levels, hp: Hyperparameters, stream: RandomStream) -> ModelState:
    """Forward-simulate parameters, assignments and data from the prior.

    The returned state has ``t = 0.5`` and ``s = 0`` placeholders; those
    auxiliaries carry no prior of their own.
    """
    levels = np.asarray(levels, dtype=np.int64)
    p = levels.size
    K = hp.K
    gamma = _draw_concentration(stream, hp.a, hp.b)
    alpha0 = _draw_concentration(stream, hp.c, hp.d)
    log_V, log1m_V = beta_log_draw(stream, np.ones(K - 1), max(gamma, _TINY))
    V = np.ones(K)
    V[:-1] = np.exp(log_V)
    beta = stick_break(V)
    support = padded_phi_support(levels)
    phi = draw_profiles(stream, np.ones((K, p, support.shape[1])), support)
    u, pi = draw_group_weights(stream, alpha0, beta, n)
    cum = np.cumsum(pi, axis=1)
    target = (1.0 - stream.generator.random((n, p))) * cum[:, -1:]
    z = np.minimum(np.sum(cum[:, None, :] < target[..., None], axis=-1), K - 1)
    pz = phi[z, np.arange(p)[None, :], :]
    cz = np.cumsum(pz, axis=-1)
    target = (1.0 - stream.generator.random((n, p))) * cz[..., -1]
    x = np.minimum(np.sum(cz < target[..., None], axis=-1), levels[None, :] - 1) + 1
    return ModelState(z=z, x=x, phi=phi, V=V, beta=beta, u=u, pi=pi, gamma=gamma,
                      alpha0=alpha0, t=np.full(n, 0.5), s=np.zeros((n, K), dtype=np.int64),
                      log1m_V=log1m_V)


def empirical_marginal_fill(ds: Dataset, stream: RandomStream) -> np.ndarray:
    """Completed data with each missing cell drawn from its variable's observed frequencies."""
    x = ds.cells.copy()
    for j in range(ds.p):
        miss = ds.mask[:, j]
        if not miss.any():
            continue
        obs = ds.cells[~miss, j]
        if obs.size == 0:
            raise InitializationError(
                f"variable {ds.variable_names[j]!r} has no observed values to initialize from")
        freq = np.bincount(obs - 1, minlength=ds.levels[j]).astype(float)
        cum = np.cumsum(freq)
        target = (1.0 - stream.generator.random(int(miss.sum()))) * cum[-1]
        x[miss, j] = np.sum(cum[None, :] < target[:, None], axis=1) + 1
    return x


def init_state(ds: Dataset, hp: Hyperparameters, stream: RandomStream) -> ModelState:
    """Initial chain state.

    Concentrations, sticks and profiles come from the prior; missing cells
    are filled from the empirical marginal of their variable; assignments
    are drawn from their full conditional given all of that.
    """
    report = validate_dataset(ds)
    if not report.ok:
        raise InitializationError(f"dataset failed validation:\n{report}")
    x = empirical_marginal_fill(ds, stream)
    state = sample_prior(ds.n, ds.levels, hp, stream)
    state.x = x
    z, bad = draw_assignments(stream, state.pi, state.phi, x)
    if bad.size:
        # Only reachable when the prior puts exact zeros in every weight of a
        # cell; fall back to the prior draw of z there.
        z[bad[:, 0], bad[:, 1]] = state.z[bad[:, 0], bad[:, 1]]
    state.z = z
    return state
