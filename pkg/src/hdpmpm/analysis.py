"""Posterior summaries and profile-level functionals.

Everything here works on stored draws (see :class:`~hdpmpm.sampler.Draw`),
assumed already relabeled by decreasing ``beta``.  Profile arrays use the
padded ``phi[k, j, d]`` layout; ``levels`` tells which slots are real.

Functionals of profiles (cohesion ratio, disagreement score) are evaluated
draw by draw and then averaged, so a near tie between two profiles shows up
as a disagreement mean strictly between 0 and 1.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ParameterError, PreconditionError

__all__ = [
    "ProfileSummary",
    "FunctionalReport",
    "MembershipReport",
    "MergedProfile",
    "ProfileMatch",
    "Disagreement",
    "summarize",
    "dominant_profiles",
    "cohesion_ratio",
    "cohesion_ratio_unbounded",
    "disagreement_score",
    "posterior_functionals",
    "membership_summary",
    "merge_profiles",
    "trace",
    "match_profiles",
]


def _draw_list(draws):
    return list(getattr(draws, "draws", draws))


def _levels_of(draws, levels):
    if levels is not None:
        return np.asarray(levels, dtype=np.int64)
    lv = getattr(draws, "levels", None)
    if lv is None:
        raise ParameterError("levels are required when draws carry none")
    return np.asarray(lv, dtype=np.int64)


@dataclass
class ProfileSummary:
    """Posterior means and population standard deviations across draws.

    ``sd_*`` divide by ``draw_count`` (not ``draw_count - 1``).
    ``mean_pi`` is ``None`` when the draws did not store ``pi``.
    """

    mean_beta: np.ndarray
    sd_beta: np.ndarray
    mean_phi: np.ndarray
    sd_phi: np.ndarray
    levels: np.ndarray
    draw_count: int
    mean_pi: Optional[np.ndarray] = None
    variable_names: tuple = ()

    @property
    def K(self):
        return int(self.mean_beta.size)

    @property
    def p(self):
        return int(self.levels.size)

    @classmethod
    def from_means(cls, mean_beta, mean_phi, levels=None, mean_pi=None, variable_names=()):
        """Summary built directly from point estimates (SDs zero, one draw)."""
        mean_beta = np.asarray(mean_beta, dtype=float)
        mean_phi = np.asarray(mean_phi, dtype=float)
        if mean_phi.ndim != 3 or mean_phi.shape[0] != mean_beta.size:
            raise ParameterError(f"mean_phi must have shape (K, p, Dmax) with K={mean_beta.size}")
        if levels is None:
            levels = np.full(mean_phi.shape[1], mean_phi.shape[2])
        return cls(mean_beta=mean_beta, sd_beta=np.zeros_like(mean_beta), mean_phi=mean_phi,
                   sd_phi=np.zeros_like(mean_phi), levels=np.asarray(levels, dtype=np.int64),
                   draw_count=1,
                   mean_pi=None if mean_pi is None else np.asarray(mean_pi, dtype=float),
                   variable_names=tuple(variable_names))

    def profile(self, k):
        """List of the ``p`` response simplices of profile ``k`` (unpadded)."""
        return [self.mean_phi[k, j, :d] for j, d in enumerate(self.levels)]


def summarize(draws, levels=None) -> ProfileSummary:
    """Elementwise posterior means and SDs of ``beta``, ``phi`` and ``pi``.

    Raises
    ------
    PreconditionError
        If there are no draws.
    """
    items = _draw_list(draws)
    if not items:
        raise PreconditionError("cannot summarize an empty set of draws")
    levels = _levels_of(draws, levels)
    beta = np.stack([d.beta for d in items])
    phi = np.stack([d.phi for d in items])
    mean_pi = None
    if all(d.pi is not None for d in items):
        mean_pi = np.mean([d.pi for d in items], axis=0)
    return ProfileSummary(mean_beta=beta.mean(axis=0), sd_beta=beta.std(axis=0),
                          mean_phi=phi.mean(axis=0), sd_phi=phi.std(axis=0), levels=levels,
                          draw_count=len(items), mean_pi=mean_pi,
                          variable_names=tuple(getattr(draws, "variable_names", ()) or ()))


def dominant_profiles(summary: ProfileSummary, threshold: float = 0.1) -> list:
    """Indices of profiles with ``mean_beta > threshold``, largest first.

    ``threshold <= 0`` returns every profile.
    """
    mb = summary.mean_beta
    order = np.argsort(-mb, kind="stable")
    if threshold <= 0:
        return [int(k) for k in order]
    return [int(k) for k in order if mb[k] > threshold]


def cohesion_ratio(phi_row) -> float:
    """``(max - min) / max`` of a response distribution, in ``[0, 1]``."""
    row = np.asarray(phi_row, dtype=float)
    hi = row.max()
    if hi <= 0:
        raise ParameterError("cohesion ratio needs a row with positive mass")
    return float((hi - row.min()) / hi)


def cohesion_ratio_unbounded(phi_row) -> float:
    """The older ``max / min`` ratio; ``inf`` when some level has zero mass."""
    row = np.asarray(phi_row, dtype=float)
    lo = row.min()
    if lo <= 0:
        return float("inf")
    return float(row.max() / lo)


class Disagreement(NamedTuple):
    score: int
    tie: bool


def _modal(row):
    hi = row.max()
    return int(np.argmax(row)), bool(np.count_nonzero(row == hi) > 1)


def disagreement_score(phi_a, phi_b) -> Disagreement:
    """1 if the two distributions have different modal levels, else 0.

    Ties pick the lowest level; ``tie`` is set when either input has one.
    """
    a = np.asarray(phi_a, dtype=float)
    b = np.asarray(phi_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError(f"disagreement needs equal-length vectors, got {a.shape} and {b.shape}")
    ma, ta = _modal(a)
    mb, tb = _modal(b)
    return Disagreement(int(ma != mb), ta or tb)


def _cr_rows(phi_kj):
    """Cohesion ratio along the last axis of an (unpadded) array."""
    hi = phi_kj.max(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(hi > 0, (hi - phi_kj.min(axis=-1)) / np.where(hi > 0, hi, 1.0), np.nan)


@dataclass
class FunctionalReport:
    """Per-variable posterior means of cohesion ratio and disagreement score.

    Attributes
    ----------
    cohesion : dict
        Profile index to a length-``p`` array of mean cohesion ratios.
    pair : tuple or None
        The profile pair compared by ``disagreement``.
    disagreement : ndarray or None
        Length-``p`` mean disagreement scores.
    tie_rate : ndarray or None
        Share of draws in which either profile's modal level was tied.
    """

    cohesion: dict
    pair: Optional[tuple]
    disagreement: Optional[np.ndarray]
    tie_rate: Optional[np.ndarray]
    draw_count: int
    variable_names: tuple = ()


def posterior_functionals(draws, profiles: Sequence[int] = (), pair=None,
                          levels=None) -> FunctionalReport:
    """Average cohesion ratios of ``profiles`` and the disagreement of ``pair`` over draws."""
    items = _draw_list(draws)
    if not items:
        raise PreconditionError("no draws to evaluate functionals on")
    levels = _levels_of(draws, levels)
    K = items[0].beta.size
    wanted = list(profiles) + (list(pair) if pair is not None else [])
    bad = [k for k in wanted if not 0 <= k < K]
    if bad:
        raise ParameterError(f"profile indices {bad} out of range for K={K}")
    if pair is not None and (len(pair) != 2 or pair[0] == pair[1]):
        raise ParameterError("pair must name two distinct profiles")
    phi = np.stack([d.phi for d in items])  # (S, K, p, Dmax)
    p = levels.size
    cohesion = {int(k): np.zeros(p) for k in profiles}
    dr = tie = None
    if pair is not None:
        dr = np.zeros(p)
        tie = np.zeros(p)
    for j, D in enumerate(levels):
        block = phi[:, :, j, :D]
        for k in profiles:
            cohesion[int(k)][j] = _cr_rows(block[:, k]).mean()
        if pair is not None:
            a, b = block[:, pair[0]], block[:, pair[1]]
            dr[j] = np.mean(np.argmax(a, axis=-1) != np.argmax(b, axis=-1))
            tied = ((a == a.max(axis=-1, keepdims=True)).sum(axis=-1) > 1) | \
                   ((b == b.max(axis=-1, keepdims=True)).sum(axis=-1) > 1)
            tie[j] = tied.mean()
    return FunctionalReport(cohesion=cohesion, pair=None if pair is None else tuple(pair),
                            disagreement=dr, tie_rate=tie, draw_count=len(items),
                            variable_names=tuple(getattr(draws, "variable_names", ()) or ()))


@dataclass
class MembershipReport:
    """How many profiles each person leans on, from posterior-mean ``pi``.

    Attributes
    ----------
    counts : ndarray of int
        Per person, the number of profiles with mean weight above threshold.
    histogram : dict
        Count value to share of persons.
    modal_shares : dict
        Profile index to share of persons whose largest mean weight is on it.
    """

    threshold: float
    counts: np.ndarray
    histogram: dict
    modal_shares: dict = field(default_factory=dict)


def membership_summary(summary: ProfileSummary, person_threshold: float = 0.1,
                       profiles: Optional[Sequence[int]] = None) -> MembershipReport:
    """Per-person dominance counts over all ``K`` profiles.

    ``profiles`` selects whose modal shares are reported (default: the
    dominant profiles at threshold 0.1).

    Raises
    ------
    PreconditionError
        If the summary has no ``mean_pi`` (draws stored without ``pi``).
    """
    if summary.mean_pi is None:
        raise PreconditionError("membership summary needs pi; the draws were stored without it")
    pi = summary.mean_pi
    counts = (pi > person_threshold).sum(axis=1)
    values, freq = np.unique(counts, return_counts=True)
    histogram = {int(v): float(f) / pi.shape[0] for v, f in zip(values, freq)}
    if profiles is None:
        profiles = dominant_profiles(summary)
    modal = np.argmax(pi, axis=1)
    shares = {int(k): float(np.mean(modal == k)) for k in profiles}
    return MembershipReport(threshold=person_threshold, counts=counts, histogram=histogram,
                            modal_shares=shares)


@dataclass
class MergedProfile:
    proportion: float
    phi: np.ndarray
    indices: tuple


def merge_profiles(summary: ProfileSummary, indices: Sequence[int]) -> MergedProfile:
    """Combine profiles into one, weighting each by its mean proportion.

    The merged proportion is the sum of the inputs' ``mean_beta``; the merged
    response distributions are the ``mean_beta``-weighted averages of theirs.
    """
    idx = [int(k) for k in indices]
    if len(idx) < 2:
        raise ParameterError("merging needs at least two profiles")
    if len(set(idx)) != len(idx):
        raise ParameterError(f"duplicate profile indices in {idx}")
    bad = [k for k in idx if not 0 <= k < summary.K]
    if bad:
        raise ParameterError(f"profile indices {bad} out of range for K={summary.K}")
    w = summary.mean_beta[idx]
    total = float(np.sum(w))
    if total <= 0:
        raise ParameterError("merged profiles have zero total proportion")
    phi = np.tensordot(w, summary.mean_phi[idx], axes=1) / total
    return MergedProfile(proportion=total, phi=phi, indices=tuple(idx))


_SELECTOR = re.compile(r"^\s*(\w+)\s*(?:\[\s*([\d\s,]*)\])?\s*$")


def _parse_selector(selector, args):
    if not isinstance(selector, str):
        raise ParameterError(f"selector must be a string, got {selector!r}")
    m = _SELECTOR.match(selector)
    if not m:
        raise ParameterError(f"cannot parse selector {selector!r}")
    name, inner = m.group(1), m.group(2)
    if inner is not None:
        if args:
            raise ParameterError("give selector indices either in brackets or as arguments")
        args = tuple(int(v) for v in inner.split(",") if v.strip())
    return name, tuple(int(a) for a in args)


def trace(draws, selector: str, *args) -> np.ndarray:
    """One value per stored draw for a scalar selector.

    Selectors (indices 0-based): ``"beta", k`` (or ``"beta[k]"``),
    ``"gamma"``, ``"alpha0"``, ``"occupied_count"`` and
    ``"marginal_prob", j, d`` -- the label-free ``sum_k beta_k phi[k, j, d]``.
    For relabeled draws the sum runs in the chain's own label order (the
    recorded permutation is undone first), so it matches an unrelabeled run
    bit for bit.
    """
    items = _draw_list(draws)
    name, idx = _parse_selector(selector, args)
    if name == "beta":
        if len(idx) != 1:
            raise ParameterError("beta selector needs one index")
        k = idx[0]
        if items and not 0 <= k < items[0].beta.size:
            raise ParameterError(f"beta index {k} out of range")
        return np.array([d.beta[k] for d in items])
    if idx and name in ("gamma", "alpha0", "occupied_count"):
        raise ParameterError(f"selector {name!r} takes no indices")
    if name == "gamma":
        return np.array([d.gamma for d in items])
    if name == "alpha0":
        return np.array([d.alpha0 for d in items])
    if name == "occupied_count":
        return np.array([d.occupied for d in items], dtype=np.int64)
    if name == "marginal_prob":
        if len(idx) != 2:
            raise ParameterError("marginal_prob selector needs (j, d)")
        j, dd = idx
        if items and not (0 <= j < items[0].phi.shape[1] and 0 <= dd < items[0].phi.shape[2]):
            raise ParameterError(f"marginal_prob index ({j}, {dd}) out of range")
        out = np.empty(len(items))
        for s, d in enumerate(items):
            beta, col = d.beta, d.phi[:, j, dd]
            if d.permutation is not None:
                back = np.argsort(d.permutation)
                beta, col = beta[back], col[back]
            out[s] = np.dot(beta, col)
        return out
    raise ParameterError(f"unknown trace selector {name!r}")


@dataclass
class ProfileMatch:
    """Optimal pairing of estimated profiles with reference profiles.

    ``pairs`` lists ``(estimated index, reference index)``; ``cell_errors``
    has shape ``(len(pairs), p, Dmax)``.
    """

    pairs: list
    cell_errors: np.ndarray
    tv_distances: np.ndarray
    proportion_errors: np.ndarray
    unmatched_reference: list

    @property
    def max_cell_error(self):
        return float(self.cell_errors.max()) if self.cell_errors.size else 0.0

    @property
    def max_proportion_error(self):
        return float(np.abs(self.proportion_errors).max()) if self.proportion_errors.size else 0.0


def match_profiles(estimate: ProfileSummary, reference_phi, reference_beta=None,
                   indices: Optional[Sequence[int]] = None) -> ProfileMatch:
    """Match estimated profiles to reference profiles by total-variation distance.

    Parameters
    ----------
    estimate : ProfileSummary
    reference_phi : array_like, shape (K_ref, p, Dmax)
        E.g. the generating profiles of a synthetic dataset.
    reference_beta : array_like, optional
        Reference proportions, for ``proportion_errors``.
    indices : sequence of int, optional
        Estimated profiles eligible for matching; default the dominant ones.

    Uses the Hungarian algorithm on the mean (over variables) TV distance.
    If fewer estimated than reference profiles are available, the leftovers
    are reported in ``unmatched_reference`` with a warning.
    """
    ref = np.asarray(reference_phi, dtype=float)
    if ref.ndim != 3 or ref.shape[1] != estimate.p:
        raise ParameterError(f"reference profiles must have shape (K, {estimate.p}, Dmax)")
    if indices is None:
        indices = dominant_profiles(estimate)
    indices = [int(k) for k in indices]
    dmax = max(ref.shape[2], estimate.mean_phi.shape[2])
    est = np.zeros((len(indices), estimate.p, dmax))
    est[:, :, :estimate.mean_phi.shape[2]] = estimate.mean_phi[indices]
    refp = np.zeros((ref.shape[0], estimate.p, dmax))
    refp[:, :, :ref.shape[2]] = ref
    diff = np.abs(est[:, None] - refp[None, :])  # (E, R, p, Dmax)
    cost = 0.5 * diff.sum(axis=-1).mean(axis=-1)
    rows, cols = linear_sum_assignment(cost) if cost.size else (np.array([], int), np.array([], int))
    pairs = [(indices[r], int(c)) for r, c in zip(rows, cols)]
    unmatched = sorted(set(range(ref.shape[0])) - set(int(c) for c in cols))
    if unmatched:
        warnings.warn(f"{len(unmatched)} reference profiles left unmatched: {unmatched}",
                      stacklevel=2)
    cell_errors = diff[rows, cols] if rows.size else np.zeros((0, estimate.p, dmax))
    if reference_beta is not None:
        rb = np.asarray(reference_beta, dtype=float)
        prop = np.array([estimate.mean_beta[e] - rb[r] for e, r in pairs])
    else:
        prop = np.zeros(0)
    return ProfileMatch(pairs=pairs, cell_errors=cell_errors, tv_distances=cost[rows, cols],
                        proportion_errors=prop, unmatched_reference=unmatched)
