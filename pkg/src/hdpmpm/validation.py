"""Joint-distribution ("getting it right") test of the Gibbs sampler.

Two simulators target the same joint law of parameters and data:

* marginal-conditional: independent forward draws from the prior;
* successive-conditional: one long chain alternating a Gibbs sweep given the
  data with a redraw of the data given the parameters.  With every cell
  marked missing, Step 6 of the sweep *is* the data redraw, so the chain is
  just :func:`~hdpmpm.sampler.sweep` on a fully masked dataset.

If every conditional is right the chain's stationary law is the prior, and
moments of label-sensitive statistics must agree between the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Dataset, Hyperparameters, compute_counts, sample_prior
from .rng import RandomStream
from .sampler import DEFAULT_HOOKS, SweepHooks, sweep


@dataclass(frozen=True)
class JointTestDims:
    """Model size for the joint test; keep it tiny."""

    n: int = 5
    p: int = 3
    levels: int = 2
    hp: Hyperparameters = Hyperparameters(K=3)


@dataclass
class StatisticResult:
    name: str
    prior_mean: float
    chain_mean: float
    z: float


@dataclass
class JointTestReport:
    results: list = field(default_factory=list)
    n_replicates: int = 0

    @property
    def z_scores(self):
        return np.array([r.z for r in self.results])

    def fraction_within(self, bound=3.0):
        if not self.results:
            return 1.0
        return float(np.mean(np.abs(self.z_scores) < bound))

    @property
    def max_abs_z(self):
        return float(np.max(np.abs(self.z_scores))) if self.results else 0.0

    def __str__(self):
        lines = [f"{'statistic':<28}{'prior':>10}{'chain':>10}{'z':>8}"]
        lines += [f"{r.name:<28}{r.prior_mean:>10.4f}{r.chain_mean:>10.4f}{r.z:>8.2f}"
                  for r in self.results]
        return "\n".join(lines)


def _statistic_names(p, K):
    names = []
    for k in range(K):
        for j in range(p):
            names.append(f"phi[{k},{j},0]")
    for k in range(K):
        for j in range(p):
            names.append(f"phi[{k},{j},0]^2")
    names += [f"beta[{k}]" for k in range(K)]
    names += [f"beta[{k}]^2" for k in range(K)]
    names += ["gamma/(1+gamma)", "(gamma/(1+gamma))^2", "alpha0/(1+alpha0)",
              "(alpha0/(1+alpha0))^2"]
    names += [f"mean pi[:,{k}]" for k in range(K)]
    names += [f"mean pi[:,{k}]^2" for k in range(K)]
    names += [f"share z=={k}" for k in range(K)]
    names += [f"share x[:,{j}]==1" for j in range(p)]
    names += [f"x[:,{a}]==x[:,{b}]" for a in range(p) for b in range(a + 1, p)]
    names += ["occupied clusters", "beta[0]*phi[0,0,0]"]
    names += [f"sum_k beta[k]*phi[k,{j},0]" for j in range(p)]
    names += [f"pi[0,{k}]" for k in range(K)]
    return names


def _statistics(state, levels):
    """Label-sensitive summaries of one joint draw (parameters and data)."""
    K = state.K
    p = state.x.shape[1]
    phi0 = state.phi[:, :, 0].ravel()
    g = state.gamma / (1.0 + state.gamma)
    a = state.alpha0 / (1.0 + state.alpha0)
    pi_mean = state.pi.mean(axis=0)
    pi_sq = (state.pi ** 2).mean(axis=0)
    zshare = np.bincount(state.z.ravel(), minlength=K) / state.z.size
    xone = (state.x == 1).mean(axis=0)
    agree = [np.mean(state.x[:, a_] == state.x[:, b_]) for a_ in range(p) for b_ in range(a_ + 1, p)]
    occupied = np.count_nonzero(zshare)
    marginal = state.beta @ state.phi[:, :, 0]
    return np.concatenate([
        phi0, phi0 ** 2, state.beta, state.beta ** 2, [g, g * g, a, a * a],
        pi_mean, pi_sq, zshare, xone, agree, [occupied, state.beta[0] * state.phi[0, 0, 0]],
        marginal, state.pi[0],
    ])


def _batch_mean_se(samples, n_batches=50):
    n = samples.shape[0] // n_batches * n_batches
    batches = samples[:n].reshape(n_batches, -1, samples.shape[1]).mean(axis=1)
    return batches.std(axis=0, ddof=1) / np.sqrt(n_batches)


def validate_sampler(dims: JointTestDims, n_replicates: int, stream: RandomStream,
                     thin: int = 25, hooks: SweepHooks = DEFAULT_HOOKS,
                     concentrations_first: bool = False) -> JointTestReport:
    """Compare prior moments with those of the successive-conditional chain.

    Parameters
    ----------
    dims : JointTestDims
    n_replicates : int
        Number of forward draws, and of (thinned) chain states.
    stream : RandomStream
    thin : int, default 25
        Sweeps between recorded chain states.  Under the default
        Gamma(0.25, 0.25) hyperpriors the chain lingers near ``gamma = 0``
        and ``alpha0 = 0``; shorter thinning makes the batch-means standard
        errors too small.
    hooks : SweepHooks, optional
        Step overrides, for fault-injection (mutation) checks.
    concentrations_first : bool, default False
        Sweep order passed to :func:`~hdpmpm.sampler.sweep`.

    Returns
    -------
    JointTestReport
        One z-score per statistic.  The chain's standard error uses batch
        means to absorb autocorrelation.
    """
    hp = dims.hp
    levels = np.full(dims.p, dims.levels)
    names = _statistic_names(dims.p, hp.K)
    if n_replicates <= 0:
        return JointTestReport(results=[], n_replicates=0)

    prior_stream = stream.substream(0)
    prior = np.array([_statistics(sample_prior(dims.n, levels, hp, prior_stream), levels)
                      for _ in range(n_replicates)])

    chain_stream = stream.substream(1)
    ds = Dataset(cells=np.zeros((dims.n, dims.p), dtype=np.int64), levels=levels,
                 mask=np.ones((dims.n, dims.p), dtype=bool))
    state = sample_prior(dims.n, levels, hp, chain_stream)
    chain = np.empty((n_replicates, len(names)))
    for r in range(n_replicates):
        for _ in range(thin):
            sweep(ds, state, hp, chain_stream, hooks=hooks,
                  concentrations_first=concentrations_first)
        chain[r] = _statistics(state, levels)

    prior_se = prior.std(axis=0, ddof=1) / np.sqrt(n_replicates)
    n_batches = min(50, max(2, n_replicates // 10))
    chain_se = _batch_mean_se(chain, n_batches)
    se = np.sqrt(prior_se ** 2 + chain_se ** 2)
    diff = chain.mean(axis=0) - prior.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.inf))
    results = [StatisticResult(nm, float(pm), float(cm), float(zz))
               for nm, pm, cm, zz in zip(names, prior.mean(axis=0), chain.mean(axis=0), z)]
    return JointTestReport(results=results, n_replicates=n_replicates)
