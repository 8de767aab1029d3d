"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (also printed in the terminal summary)
before asserting.  Run alone with ``pytest tests/test_acceptance.py -s``.
"""

import time
import warnings

import numpy as np
import pytest
import survey_fixtures as fx
from conftest import frozen_state, record_criterion
from scipy import stats
from scipy.special import logit

from hdpmpm.analysis import (
    cohesion_ratio,
    disagreement_score,
    dominant_profiles,
    match_profiles,
    merge_profiles,
    ProfileSummary,
    summarize,
)
from hdpmpm.lab import (
    MarSpec,
    apply_mar,
    apply_mcar,
    calibrate_intercept,
    generate_synthetic,
    recovery_spec,
)
from hdpmpm.model import (
    ChainConfig,
    CountTables,
    Dataset,
    Hyperparameters,
    group_stick_params,
)
from hdpmpm.rng import RandomStream, beta_draw
from hdpmpm.sampler import (
    SweepHooks,
    run_chain,
    step_assignments,
    step_concentrations,
    step_global_weights,
    step_group_weights,
    step_profiles,
)
from hdpmpm.validation import JointTestDims, validate_sampler
from hdpmpm.model import stick_break

pytestmark = pytest.mark.slow

N = 100_000
SEED = 1  # data and chain seed of the recovery fixture


def check(number, passed, detail, elapsed=None, budget=None):
    if elapsed is not None:
        detail = f"{detail}; {elapsed:.1f}s (budget {budget}s)"
        passed = passed and elapsed < budget
    record_criterion(number, passed, detail)
    assert passed, detail


# -- 1 -----------------------------------------------------------------------

def test_criterion_1_assignment_oracle():
    start = time.perf_counter()
    phi = np.array([[[0.9, 0.1]], [[0.5, 0.5]]])
    state = frozen_state([[0.5, 0.5]], phi, [[1]])
    ds = Dataset(cells=state.x, levels=[2])
    stream = RandomStream(101)
    hits = sum(int(step_assignments(ds, state, stream)[0, 0] == 0) for _ in range(N))
    share = hits / N
    elapsed = time.perf_counter() - start
    check(1, abs(share - 0.643) <= 0.005, f"P(z=1)={share:.4f} vs 0.643", elapsed, 5)


# -- 2 -----------------------------------------------------------------------

def test_criterion_2_dirichlet_conjugacy():
    start = time.perf_counter()
    n_counts = np.tile(np.array([3, 1, 0]), (N, 1, 1))
    phi = step_profiles(CountTables(m=None, n_counts=n_counts), [3], RandomStream(102))
    means = phi[:, 0].mean(axis=0)
    err = np.abs(means - np.array([4, 2, 1]) / 7).max()
    elapsed = time.perf_counter() - start
    check(2, err <= 0.01, f"means {np.round(means, 4)}, max error {err:.4f}", elapsed, 5)


# -- 3 -----------------------------------------------------------------------

def _central_moments(law):
    m1, m2, m3, m4 = (np.asarray(law.moment(k), dtype=float) for k in (1, 2, 3, 4))
    var = m2 - m1 ** 2
    mu4 = m4 - 4 * m1 * m3 + 6 * m1 ** 2 * m2 - 3 * m1 ** 4
    return m1, var, mu4


def moment_z(sample, law):
    """z-scores of the sample mean and variance against (possibly per-draw) laws."""
    x = np.asarray(sample, dtype=float).ravel()
    mean, var, mu4 = (np.broadcast_to(v, x.shape) for v in _central_moments(law))
    dev = x - mean
    z_mean = dev.sum() / np.sqrt(var.sum())
    z_var = (dev ** 2 - var).sum() / np.sqrt((mu4 - var ** 2).sum())
    return float(z_mean), float(z_var)


def _weights_state(n, beta, alpha0=1.0, gamma=1.0):
    beta = np.asarray(beta, dtype=float)
    return frozen_state(np.tile(beta, (n, 1)), np.full((beta.size, 1, 2), 0.5),
                        np.ones((n, 1)), beta=beta, alpha0=alpha0, gamma=gamma)


def _step3_fixtures(stream):
    out = []
    # t_i ~ Beta(alpha0, sum_k m_ik)
    for alpha0, split in ((1.0, (10, 13, 0)), (0.25, (4, 0, 6)), (5.0, (1, 1, 1))):
        state = _weights_state(N, [0.5, 0.3, 0.2], alpha0=alpha0)
        m = np.tile(split, (N, 1))
        t = step_global_weights(CountTables(m, None), state, stream)[0]
        out.append((f"t a0={alpha0} p={sum(split)}", t, stats.beta(alpha0, sum(split))))
    # V_k | s: every m_ik <= 1 forces s = m, so the law of V_k is known exactly
    K = N + 1
    for gamma, rows in ((2.0, 0), (0.5, 7), (1.0, None)):
        state = _weights_state(max(rows or 1, 1), np.full(K, 1.0 / K), gamma=gamma)
        m = np.zeros((state.n, K), dtype=np.int64)
        if rows is None:
            m[0, :-1] = 1  # S_k = 1 for k < K, tail sums K-1-k
        elif rows:
            m[:, -1] = 1  # only the last column occupied, S_K = rows
        V = step_global_weights(CountTables(m, None), state, stream)[2][:-1]
        S = m.sum(axis=0)
        tail = np.cumsum(S[::-1])[::-1][1:]
        out.append((f"V g={gamma} S={'tail' if rows is None else rows}", V,
                    stats.beta(1 + S[:-1], gamma + tail)))
    return out


def _step4_fixtures(stream):
    out = []
    fixtures = (([0.5, 0.5], 1.0, (2, 3)), ([0.6, 0.3, 0.1], 2.0, (0, 5, 1)),
                ([1.0, 0.0, 0.0], 0.7, (1, 2, 1)))  # last: floored second parameter
    for beta, alpha0, counts in fixtures:
        state = _weights_state(N, beta, alpha0=alpha0)
        m = np.tile(counts, (N, 1))
        u, _ = step_group_weights(CountTables(m, None), state, stream)
        a, b = group_stick_params(alpha0, np.asarray(beta), m[:1])
        out.append((f"u_1 beta={beta} a0={alpha0} m={counts}", u[:, 0],
                    stats.beta(a[0, 0], b[0, 0])))
    return out


def _step5_fixtures(stream):
    out = []
    K = 30
    specs = (
        ("mild", K, dict(log1m_V=np.full(K - 1, -5.0 / (K - 1)), log_t=np.array([-1.0, -1.0])), 0),
        ("tables", 3, dict(log1m_V=np.array([-0.3, -0.9]), log_t=np.array([-0.5, -2.5])), 40),
        ("clamped", 3, dict(V=np.array([1.0, 0.5, 1.0]), t=np.array([0.0, 0.5])), 2),
    )
    for name, k, fields, s_total in specs:
        state = _weights_state(2, np.full(k, 1.0 / k))
        state.log1m_V = fields.get("log1m_V")
        state.log_t = fields.get("log_t")
        if "V" in fields:
            state.V, state.t = fields["V"], fields["t"]
        state.s = np.zeros_like(state.s)
        state.s[0, 0] = s_total
        hp = Hyperparameters(K=k)
        draws = np.array([step_concentrations(state, hp, stream) for _ in range(N)])
        if "V" in fields:
            clamp = 1e-12
            log1m = np.log(np.clip(1 - fields["V"][:-1], clamp, 1 - clamp))
            logt = np.log(np.clip(fields["t"], clamp, 1 - clamp))
        else:
            log1m, logt = fields["log1m_V"], fields["log_t"]
        g_law = stats.gamma(hp.a + k - 1, scale=1 / (hp.b - log1m.sum()))
        a_law = stats.gamma(hp.c + s_total, scale=1 / (hp.d - logt.sum()))
        out.append((f"gamma {name}", draws[:, 0], g_law))
        out.append((f"alpha0 {name}", draws[:, 1], a_law))
    return out


def test_criterion_3_moment_oracles():
    start = time.perf_counter()
    stream = RandomStream(103)
    rows = _step3_fixtures(stream) + _step4_fixtures(stream) + _step5_fixtures(stream)
    worst = 0.0
    failures = []
    for name, sample, law in rows:
        zm, zv = moment_z(sample, law)
        worst = max(worst, abs(zm), abs(zv))
        if abs(zm) > 5 or abs(zv) > 5:
            failures.append(f"{name}: z_mean={zm:.2f} z_var={zv:.2f}")
    elapsed = time.perf_counter() - start
    detail = f"{len(rows)} fixtures, max |z|={worst:.2f}" + (f"; {failures}" if failures else "")
    check(3, not failures, detail, elapsed, 30)


# -- 4 -----------------------------------------------------------------------

def _swapped_group_weights(counts, state, stream):
    a, b = group_stick_params(state.alpha0, state.beta, counts.m)
    u = np.ones((state.n, state.K))
    u[:, :-1] = beta_draw(stream, b, a)
    return u, stick_break(u)


def test_criterion_4_joint_distribution():
    start = time.perf_counter()
    dims = JointTestDims(n=5, p=3, levels=2, hp=Hyperparameters(K=3))
    # long thinning: the small-shape hyperpriors leave sticky regions near gamma = 0
    good = validate_sampler(dims, 10_000, RandomStream(104), thin=25)
    bad = validate_sampler(dims, 10_000, RandomStream(105), thin=5,
                           hooks=SweepHooks(group_weights=_swapped_group_weights))
    elapsed = time.perf_counter() - start
    ok = (len(good.results) >= 50 and good.fraction_within(3.0) >= 0.95 and bad.max_abs_z > 5)
    detail = (f"{len(good.results)} statistics, {good.fraction_within(3.0):.1%} with |z|<3, "
              f"max |z| {good.max_abs_z:.2f}; mutation max |z| {bad.max_abs_z:.2f}")
    check(4, ok, detail, elapsed, 600)


# -- 5 and 6 -----------------------------------------------------------------

RECOVERY_CONFIG = ChainConfig(iterations=5000, burn_in=2500, thin=5, seed=SEED)


@pytest.fixture(scope="module")
def recovery():
    spec = recovery_spec(n=500, p=10)
    ds, truth = generate_synthetic(spec, RandomStream(SEED))
    start = time.perf_counter()
    draws = run_chain(ds, Hyperparameters(K=15), RECOVERY_CONFIG)
    return ds, truth, summarize(draws), time.perf_counter() - start


def test_criterion_5_synthetic_recovery(recovery):
    ds, truth, summary, elapsed = recovery
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        match = match_profiles(summary, truth.profiles, truth.beta)
    ok = (not match.unmatched_reference and match.max_cell_error <= 0.10
          and match.max_proportion_error <= 0.05)
    detail = (f"{len(match.pairs)}/3 profiles matched, max cell error {match.max_cell_error:.3f}, "
              f"max proportion error {match.max_proportion_error:.3f}")
    check(5, ok, detail, elapsed, 600)


OBSERVED, MASKED = [0, 1, 2, 3], [4, 5, 6, 7, 8, 9]
# refits with masked cells mix slowly; use the full-length analysis chain
REFIT_CONFIG = ChainConfig(iterations=30000, burn_in=15000, thin=5, seed=SEED)


def _mar_spec():
    # first three targets masked independently (zero effects), last three
    # through main-effects logistic models on the fully observed variables
    logistic = [[[0.8 * (-1) ** (q + r), -0.4 * (-1) ** (q + r)] for r in range(4)]
                for q in range(3)]
    return MarSpec(target_vars=MASKED, predictor_vars=OBSERVED,
                   coefficients=[None, None, None] + logistic, target_rate=0.3)


def test_criterion_6_missing_data_recovery(recovery):
    ds, _, full, full_elapsed = recovery
    start = time.perf_counter()
    reference = dominant_profiles(full)
    ref_phi, ref_beta = full.mean_phi[reference], full.mean_beta[reference]
    scenarios = {
        "MCAR": apply_mcar(ds, MASKED, 0.3, RandomStream(SEED, 6).substream(1)),
        "MAR": apply_mar(ds, _mar_spec(), RandomStream(SEED, 6).substream(2)),
    }
    parts, ok = [], True
    for name, masked in scenarios.items():
        draws = run_chain(masked.dataset, Hyperparameters(K=15), REFIT_CONFIG)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            match = match_profiles(summarize(draws), ref_phi, ref_beta)
        good = not match.unmatched_reference and match.max_cell_error <= 0.15
        ok = ok and good
        rate = np.mean(list(masked.realized_rates.values()))
        parts.append(f"{name} (rate {rate:.3f}) {len(match.pairs)}/{len(reference)} matched, "
                     f"max cell error {match.max_cell_error:.3f}")
    elapsed = time.perf_counter() - start
    check(6, ok, "; ".join(parts), elapsed, 1200)


# -- 7 -----------------------------------------------------------------------

def test_criterion_7_published_tables():
    start = time.perf_counter()
    cr = np.array([cohesion_ratio(r) for r in fx.LIBERAL])
    cr_err = np.abs(cr - fx.CR_LIBERAL).max()
    v140 = cohesion_ratio(fx.LIBERAL[fx.VARIABLES.index("V162140")])
    exact = [j for j, name in enumerate(fx.VARIABLES)
             if name not in fx.NEAR_TIED and fx.DISAGREEMENT[j] in (0.0, 1.0)]
    dr_bad = [fx.VARIABLES[j] for j in exact
              if disagreement_score(fx.LIBERAL[j], fx.CONSERVATIVE[j]).score != fx.DISAGREEMENT[j]]
    summary = ProfileSummary.from_means([fx.SUB1_PROPORTION, fx.SUB2_PROPORTION],
                                        np.stack([fx.SUB1, fx.SUB2]))
    merged = merge_profiles(summary, [0, 1])
    merge_err = np.abs(merged.phi - fx.MERGED).max()
    elapsed = time.perf_counter() - start
    ok = (cr_err <= 0.03 and v140 == 1.0 and not dr_bad and merge_err <= 0.01
          and round(merged.proportion, 4) == fx.MERGED_PROPORTION)
    detail = (f"CR max error {cr_err:.3f} (V162140={v140:.2f}); DR exact on {len(exact)} rows, "
              f"mismatches {dr_bad}; merge max error {merge_err:.4f}, "
              f"proportion {merged.proportion:.4f}")
    check(7, ok, detail, elapsed, 1)


# -- 8 -----------------------------------------------------------------------

def test_criterion_8_chain_bookkeeping():
    start = time.perf_counter()
    ds, _ = generate_synthetic(recovery_spec(n=5, p=3), RandomStream(108))
    cfg = ChainConfig(iterations=30_000, burn_in=15_000, thin=5, seed=8)
    hp = Hyperparameters(K=10)  # roomy enough that the toy never saturates
    a = run_chain(ds, hp, cfg)
    b = run_chain(ds, hp, cfg)
    beta_err = max(abs(d.beta.sum() - 1) for d in a.draws)
    pi_err = max(np.abs(d.pi.sum(axis=1) - 1).max() for d in a.draws)
    same = all(np.array_equal(x.beta, y.beta) and np.array_equal(x.phi, y.phi)
               and np.array_equal(x.pi, y.pi) and x.gamma == y.gamma and x.alpha0 == y.alpha0
               for x, y in zip(a.draws, b.draws)) and len(a.draws) == len(b.draws)
    elapsed = time.perf_counter() - start
    ok = len(a.draws) == 3000 and beta_err <= 1e-12 and pi_err <= 1e-12 and same
    detail = (f"{len(a.draws)} draws, max |sum beta - 1|={beta_err:.1e}, "
              f"max |sum pi - 1|={pi_err:.1e}, rerun identical={same}")
    check(8, ok, detail, elapsed, 60)


# -- 9 -----------------------------------------------------------------------

def test_criterion_9_mar_calibration():
    start = time.perf_counter()
    g = np.random.default_rng(109)
    ds = Dataset(cells=g.integers(1, 4, size=(3409, 12)), levels=[3] * 12)
    b0 = calibrate_intercept(ds, None, [0, 1, 2], 0.3)
    spec = MarSpec(target_vars=range(6, 12), predictor_vars=range(6),
                   coefficients=[[[0.6 * (q + 1) / 6, -0.5]] * 6 for q in range(6)])
    masked = apply_mar(ds, spec, RandomStream(109))
    rate_err = max(abs(r - 0.3) for r in masked.realized_rates.values())
    elapsed = time.perf_counter() - start
    ok = abs(b0 - logit(0.3)) <= 1e-6 and round(b0, 4) == -0.8473 and rate_err <= 0.005
    check(9, ok, f"intercept {b0:.7f}; max realized-rate error {rate_err:.4f}", elapsed, 10)
