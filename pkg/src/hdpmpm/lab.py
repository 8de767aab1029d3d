"""Synthetic data and missingness mechanisms for recovery experiments.

* :func:`generate_synthetic` runs the generative model forward from known
  profiles and global weights.
* :func:`apply_mcar` masks cells independently at a fixed rate.
* :func:`apply_mar` masks target variables through main-effects logistic
  models on fully observed predictors, with intercepts optionally calibrated
  by :func:`calibrate_intercept` to hit a target missing rate.

Masking never touches the underlying values: every masking function returns
a :class:`MaskedData` that keeps the original dataset as a truth sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit, logit

from .errors import ParameterError, PreconditionError
from .model import Dataset, draw_group_weights
from .rng import RandomStream

AUTO = "AUTO"

__all__ = [
    "AUTO",
    "GenSpec",
    "MarSpec",
    "SyntheticTruth",
    "MaskedData",
    "generate_synthetic",
    "sharp_profiles",
    "recovery_spec",
    "apply_mcar",
    "apply_mar",
    "calibrate_intercept",
    "main_effects",
]


def _check_simplex(name, arr, axis=-1, atol=1e-9):
    arr = np.asarray(arr, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite and non-negative")
    if not np.allclose(arr.sum(axis=axis), 1.0, atol=atol, rtol=0):
        raise ParameterError(f"{name} entries must sum to 1")
    return arr


@dataclass(frozen=True, eq=False)
class GenSpec:
    """Ground truth for :func:`generate_synthetic`.

    Parameters
    ----------
    n : int
    levels : sequence of int, length p
    true_profiles : array_like, shape (K*, p, max(D_j))
        ``true_profiles[k, j, :D_j]`` is a simplex; padding slots must be 0.
    true_beta : array_like, shape (K*,)
    alpha0 : float
        Concentration of each ``pi_i`` around ``true_beta``.
    """

    n: int
    levels: Sequence[int]
    true_profiles: np.ndarray
    true_beta: np.ndarray
    alpha0: float = 1.0

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.int64)
        profiles = np.asarray(self.true_profiles, dtype=float)
        beta = np.asarray(self.true_beta, dtype=float)
        if self.n < 1:
            raise ParameterError("n must be positive")
        if np.any(levels < 2):
            raise ParameterError("every variable needs at least 2 levels")
        if profiles.ndim != 3 or profiles.shape[:2] != (beta.size, levels.size):
            raise ParameterError(
                f"true_profiles must have shape (K*, p, Dmax) = ({beta.size}, {levels.size}, .), "
                f"got {profiles.shape}")
        if profiles.shape[2] < levels.max():
            raise ParameterError("true_profiles last axis is shorter than the largest D_j")
        if beta.size < 1:
            raise ParameterError("need at least one true profile")
        pad = np.arange(profiles.shape[2])[None, :] >= levels[:, None]
        if np.any(profiles[:, pad] != 0):
            raise ParameterError("true_profiles has mass beyond a variable's level count")
        _check_simplex("true_profiles", profiles)
        _check_simplex("true_beta", beta)
        if not (np.isfinite(self.alpha0) and self.alpha0 > 0):
            raise ParameterError("alpha0 must be positive")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "true_profiles", profiles)
        object.__setattr__(self, "true_beta", beta)

    @property
    def p(self):
        return int(self.levels.size)

    @property
    def K(self):
        return int(self.true_beta.size)

    def to_dict(self):
        return {"n": int(self.n), "levels": self.levels.tolist(),
                "true_profiles": [[row[:d].tolist() for row, d in zip(prof, self.levels)]
                                  for prof in self.true_profiles],
                "true_beta": self.true_beta.tolist(), "alpha0": float(self.alpha0)}

    @classmethod
    def from_dict(cls, doc):
        try:
            levels = np.asarray(doc["levels"], dtype=np.int64)
            dmax = int(levels.max())
            profiles = np.zeros((len(doc["true_profiles"]), levels.size, dmax))
            for k, prof in enumerate(doc["true_profiles"]):
                if len(prof) != levels.size:
                    raise ParameterError(f"profile {k} lists {len(prof)} variables, "
                                         f"expected {levels.size}")
                for j, row in enumerate(prof):
                    if len(row) != levels[j]:
                        raise ParameterError(f"profile {k} variable {j} has {len(row)} "
                                             f"probabilities, expected {levels[j]}")
                    profiles[k, j, :levels[j]] = row
            return cls(n=int(doc["n"]), levels=levels, true_profiles=profiles,
                       true_beta=np.asarray(doc["true_beta"], dtype=float),
                       alpha0=float(doc.get("alpha0", 1.0)))
        except KeyError as exc:
            raise ParameterError(f"GenSpec document is missing field {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class SyntheticTruth:
    """Latent quantities behind a synthetic dataset."""

    profiles: np.ndarray
    beta: np.ndarray
    pi: np.ndarray
    z: np.ndarray

    def to_dict(self):
        return {"profiles": self.profiles.tolist(), "beta": self.beta.tolist(),
                "pi": self.pi.tolist(), "z": self.z.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(profiles=np.asarray(doc["profiles"], dtype=float),
                   beta=np.asarray(doc["beta"], dtype=float),
                   pi=np.asarray(doc["pi"], dtype=float),
                   z=np.asarray(doc["z"], dtype=np.int64))


def _categorical_rows(stream, probs):
    cum = np.cumsum(probs, axis=-1)
    target = (1.0 - stream.generator.random(cum.shape[:-1])) * cum[..., -1]
    return np.minimum(np.sum(cum < target[..., None], axis=-1), probs.shape[-1] - 1)


def generate_synthetic(spec: GenSpec, stream: RandomStream):
    """Draw a complete dataset from the generative model with known truth.

    Each ``pi_i`` is a truncated stick-breaking draw centred on
    ``spec.true_beta`` with concentration ``spec.alpha0``; each cell then
    draws its cluster from ``pi_i`` and its value from that cluster's
    profile.

    Returns
    -------
    (Dataset, SyntheticTruth)
        ``truth.z`` holds 0-based cluster labels.
    """
    n, p = spec.n, spec.p
    _, pi = draw_group_weights(stream, spec.alpha0, spec.true_beta, n)
    z = _categorical_rows(stream, np.broadcast_to(pi[:, None, :], (n, p, spec.K)))
    probs = spec.true_profiles[z, np.arange(p)[None, :], :]
    x = _categorical_rows(stream, probs) + 1
    truth = SyntheticTruth(profiles=spec.true_profiles.copy(), beta=spec.true_beta.copy(),
                           pi=pi, z=z)
    return Dataset(cells=x, levels=spec.levels), truth


def sharp_profiles(K, p, levels=3, peak=0.9):
    """``K`` profiles over ``p`` variables with ``levels`` levels each.

    Profile ``k`` puts ``peak`` on level ``(k + j) mod levels`` of variable
    ``j`` and spreads the rest evenly, so distinct profiles have distinct
    modes on every variable whenever ``K <= levels``.
    """
    rest = (1.0 - peak) / (levels - 1)
    out = np.full((K, p, levels), rest)
    for k in range(K):
        for j in range(p):
            out[k, j, (k + j) % levels] = peak
    return out


def recovery_spec(n=500, p=10, beta=(0.45, 0.35, 0.20), alpha0=0.25, peak=0.9):
    """The three sharp-profile recovery fixture (``0.9/0.05/0.05`` rows).

    The default ``alpha0=0.25`` keeps each person close to one or two
    profiles.  With ``alpha0=1`` and ten answers per person the posterior
    profiles are visibly blurred toward each other.
    """
    beta = np.asarray(beta, dtype=float)
    return GenSpec(n=n, levels=[3] * p, true_profiles=sharp_profiles(beta.size, p, 3, peak),
                   true_beta=beta, alpha0=alpha0)


@dataclass
class MaskedData:
    """A masked dataset plus everything needed to undo and audit the masking.

    Attributes
    ----------
    dataset : Dataset
        The masked data.
    original : Dataset
        The input, untouched (truth sidecar).
    new_mask : ndarray of bool
        Cells masked by this operation.
    realized_rates : dict
        Variable index to its realized missing share after masking.
    intercepts : dict
        For MAR masks, variable index to the intercept actually applied.
    calibrated_intercepts : dict
        For AUTO targets, the expected-rate intercept from
        :func:`calibrate_intercept`.
    """

    dataset: Dataset
    original: Dataset
    new_mask: np.ndarray
    realized_rates: dict = field(default_factory=dict)
    intercepts: dict = field(default_factory=dict)
    calibrated_intercepts: dict = field(default_factory=dict)

    def unmask(self) -> Dataset:
        return self.original

    def sidecar(self):
        """JSON-ready record of the original values of newly masked cells."""
        rows, cols = np.nonzero(self.new_mask)
        return {"cells": [[int(i), int(j), int(self.original.cells[i, j])]
                          for i, j in zip(rows, cols)],
                "realized_rates": {str(k): float(v) for k, v in self.realized_rates.items()},
                "intercepts": {str(k): float(v) for k, v in self.intercepts.items()}}


def _check_vars(ds, variables):
    variables = [int(v) for v in variables]
    bad = [v for v in variables if not 0 <= v < ds.p]
    if bad:
        raise ParameterError(f"variable indices {bad} out of range for p={ds.p}")
    if len(set(variables)) != len(variables):
        raise ParameterError("variable indices must be distinct")
    return variables


def apply_mcar(ds: Dataset, variables, rate: float, stream: RandomStream) -> MaskedData:
    """Mask each cell of ``variables`` independently with probability ``rate``.

    Draws one uniform per cell of the listed columns, row-major.
    """
    variables = _check_vars(ds, variables)
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"MCAR rate must lie in [0, 1), got {rate}")
    new = np.zeros((ds.n, ds.p), dtype=bool)
    if variables:
        new[:, variables] = stream.generator.random((ds.n, len(variables))) < rate
    new &= ~ds.mask
    out = ds.with_mask(new) if new.any() else ds
    return MaskedData(dataset=out, original=ds, new_mask=new,
                      realized_rates={v: float(out.mask[:, v].mean()) for v in variables})


@dataclass(frozen=True)
class MarSpec:
    """Main-effects logistic missingness for a set of target variables.

    Parameters
    ----------
    target_vars, predictor_vars : sequence of int
        Disjoint 0-based variable indices.  Predictors must be fully observed.
    coefficients : sequence, optional
        One entry per target: a sequence, one per predictor, of ``D_j - 1``
        coefficients for levels ``2..D_j`` (level 1 is the reference).
        ``None`` for a target, or for the whole field, means all zeros.
    intercepts : float, "AUTO", or sequence of those
        Per-target intercepts; ``"AUTO"`` calibrates to ``target_rate``.
    target_rate : float
    """

    target_vars: Sequence[int]
    predictor_vars: Sequence[int]
    coefficients: Optional[Sequence] = None
    intercepts: Union[str, float, Sequence] = AUTO
    target_rate: float = 0.3

    def __post_init__(self):
        targets = tuple(int(v) for v in self.target_vars)
        preds = tuple(int(v) for v in self.predictor_vars)
        if set(targets) & set(preds):
            raise ParameterError("target and predictor variables must be disjoint")
        if not 0.0 < self.target_rate < 1.0:
            raise ParameterError(f"target_rate must lie in (0, 1), got {self.target_rate}")
        inter = self.intercepts
        if isinstance(inter, str) or np.isscalar(inter):
            inter = (inter,) * len(targets)
        inter = tuple(i if isinstance(i, str) else float(i) for i in inter)
        if len(inter) != len(targets):
            raise ParameterError(f"{len(inter)} intercepts for {len(targets)} targets")
        if any(isinstance(i, str) and i != AUTO for i in inter):
            raise ParameterError(f"intercepts must be numbers or {AUTO!r}")
        coefs = self.coefficients
        if coefs is not None and len(coefs) != len(targets):
            raise ParameterError(f"{len(coefs)} coefficient sets for {len(targets)} targets")
        object.__setattr__(self, "target_vars", targets)
        object.__setattr__(self, "predictor_vars", preds)
        object.__setattr__(self, "intercepts", inter)

    def target_coefficients(self, index):
        """Coefficients of target number ``index`` (``None`` means zeros)."""
        if self.coefficients is None:
            return None
        return self.coefficients[index]

    def to_dict(self):
        coefs = None
        if self.coefficients is not None:
            coefs = [None if c is None else [list(map(float, cj)) for cj in c]
                     for c in self.coefficients]
        return {"target_vars": list(self.target_vars),
                "predictor_vars": list(self.predictor_vars),
                "coefficients": coefs, "intercepts": list(self.intercepts),
                "target_rate": float(self.target_rate)}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(target_vars=doc["target_vars"], predictor_vars=doc["predictor_vars"],
                       coefficients=doc.get("coefficients"),
                       intercepts=doc.get("intercepts", AUTO),
                       target_rate=float(doc.get("target_rate", 0.3)))
        except KeyError as exc:
            raise ParameterError(f"MarSpec document is missing field {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def main_effects(ds: Dataset, coefficients, predictors) -> np.ndarray:
    """Per-row linear predictor (without intercept) under dummy coding.

    ``coefficients[q]`` holds the ``D_j - 1`` effects of levels ``2..D_j``
    of predictor ``predictors[q]``; level 1 contributes 0.
    """
    predictors = _check_vars(ds, predictors)
    eta = np.zeros(ds.n)
    if coefficients is None:
        return eta
    if len(coefficients) != len(predictors):
        raise ParameterError(f"{len(coefficients)} coefficient vectors for "
                             f"{len(predictors)} predictors")
    for j, coef in zip(predictors, coefficients):
        coef = np.asarray(coef, dtype=float)
        if coef.shape != (ds.levels[j] - 1,):
            raise ParameterError(f"predictor {j} needs {ds.levels[j] - 1} coefficients, "
                                 f"got {coef.size}")
        if ds.mask[:, j].any():
            raise PreconditionError(f"predictor {ds.variable_names[j]!r} has missing values")
        eta += np.concatenate([[0.0], coef])[ds.cells[:, j] - 1]
    return eta


def calibrate_intercept(ds: Dataset, coefficients, predictors, target_rate: float,
                        tol: float = 1e-12) -> float:
    """Intercept making the dataset-average logistic probability equal ``target_rate``.

    Solved by bisection on the increasing map
    ``b -> mean(expit(b + effects))``.  When every row has the same effect
    ``c`` the answer ``logit(target_rate) - c`` is returned in closed form.
    """
    if not 0.0 < target_rate < 1.0:
        raise ParameterError(f"target_rate must lie in (0, 1), got {target_rate}")
    eff = main_effects(ds, coefficients, predictors)
    base = float(logit(target_rate))
    if np.ptp(eff) == 0:
        return base - float(eff[0])
    lo, hi = base - eff.max(), base - eff.min()
    # mean rate at lo <= target <= mean rate at hi
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if expit(mid + eff).mean() < target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _realized_intercept(eff, u, count):
    """Intercept giving exactly ``count`` masked rows for fixed uniforms ``u``.

    Row ``i`` is masked iff ``u_i < expit(b + eff_i)``, i.e. iff
    ``b > logit(u_i) - eff_i``; the midpoint between the ``count``-th and
    next threshold masks exactly ``count`` rows.
    """
    with np.errstate(divide="ignore"):
        thresholds = np.sort(logit(u) - eff)
    n = thresholds.size
    if count <= 0:
        return float(thresholds[0] - 1.0)
    if count >= n:
        return float(thresholds[-1] + 1.0)
    lo, hi = thresholds[count - 1], thresholds[count]
    if not np.isfinite(lo):
        return float(hi - 1.0)
    return float(0.5 * (lo + hi))


def apply_mar(ds: Dataset, spec: MarSpec, stream: RandomStream,
              match_realized: bool = True) -> MaskedData:
    """Mask each target with probability ``expit(intercept + main effects)``.

    One uniform is drawn per (row, target).  AUTO intercepts are first
    calibrated to the expected rate; with ``match_realized`` (default) they
    are then shifted to the value at which the realized share of masked
    cells is ``round(target_rate * n) / n``, removing binomial noise from
    the achieved rate.  Numeric intercepts are always used as given.

    Raises
    ------
    PreconditionError
        If a predictor has missing cells.
    """
    targets = _check_vars(ds, spec.target_vars)
    preds = _check_vars(ds, spec.predictor_vars)
    for j in preds:
        if ds.mask[:, j].any():
            raise PreconditionError(f"predictor {ds.variable_names[j]!r} has missing values")
    new = np.zeros((ds.n, ds.p), dtype=bool)
    applied, calibrated = {}, {}
    u_all = stream.generator.random((ds.n, len(targets)))
    for q, j in enumerate(targets):
        coefs = spec.target_coefficients(q)
        eff = main_effects(ds, coefs, preds)
        inter = spec.intercepts[q]
        u = u_all[:, q]
        if inter == AUTO:
            b = calibrate_intercept(ds, coefs, preds, spec.target_rate)
            calibrated[j] = b
            if match_realized:
                b = _realized_intercept(eff, u, int(round(spec.target_rate * ds.n)))
        else:
            b = float(inter)
        applied[j] = b
        new[:, j] = u < expit(b + eff)
    new &= ~ds.mask
    out = ds.with_mask(new) if new.any() else ds
    return MaskedData(dataset=out, original=ds, new_mask=new,
                      realized_rates={j: float(out.mask[:, j].mean()) for j in targets},
                      intercepts=applied, calibrated_intercepts=calibrated)
