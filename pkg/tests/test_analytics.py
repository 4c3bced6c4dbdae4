import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from chanshare import analytics as A


# ------------------------------------------------------------------ traffic

def test_aggregate_rate_examples(golden):
    assert A.aggregate_request_rate(0.3, 0) == 0.0
    assert A.aggregate_request_rate(0.5, 2) == 0.75
    assert A.aggregate_request_rate(0.03, 10) == pytest.approx(golden["agg_rate_0.03_10"], rel=1e-14)
    assert A.aggregate_request_rate(1.0, 5) == 1.0


def test_pmf_no_users():
    assert A.user_count_pmf(0, 0.0, 1e-4) == 1.0
    assert A.user_count_pmf(3, 0.0, 1e-4) == 0.0


def test_pmf_p0(cfg, golden):
    assert A.user_count_pmf(0, cfg.lambda1, cfg.lambda2) == pytest.approx(golden["pmf_p0"], rel=1e-12)
    assert golden["pmf_p0"] == pytest.approx(0.00887, abs=5e-6)


def test_pmf_is_negative_binomial(cfg):
    # independent parametrisation: r = K, success prob K l2 / (l1 + K l2)
    n = np.arange(200)
    p = 3.5 * cfg.lambda2 / (cfg.lambda1 + 3.5 * cfg.lambda2)
    np.testing.assert_allclose(A.user_count_pmf(n, cfg.lambda1, cfg.lambda2),
                               stats.nbinom.pmf(n, 3.5, p), rtol=1e-10, atol=1e-300)


@pytest.mark.parametrize("ratio", [0.5, 1.0, 10.0, 100.0])
def test_pmf_normalised_with_right_mean(ratio):
    l2 = 1e-4
    n, P = A.user_count_support(ratio * l2, l2, tail=1e-12)
    assert P.sum() == pytest.approx(1.0, abs=1e-9)
    assert (n * P).sum() == pytest.approx(ratio, abs=1e-9 * max(1.0, ratio) * 10)


def test_pmf_log_space_no_overflow():
    # huge n: direct gamma ratios would overflow
    v = A.user_count_pmf(5000, 1e-2, 1e-6)
    assert math.isfinite(v) and v > 0


# ---------------------------------------------------------- state balance

def test_service_rate_examples():
    assert A.service_rate_given_state(1.0, 0.3) == 1.0
    assert A.service_rate_given_state(0.0, 0.3) == 0.0
    assert A.service_rate_given_state(0.25, 0.6) == pytest.approx(0.15 / 0.45, rel=1e-15)


def test_demand_full_load(cfg):
    c = cfg.replace(request_rate=1.0)
    p0 = A.user_count_pmf(0, c.lambda1, c.lambda2)
    for pi0 in (0.1, 0.5, 0.9):
        # term-by-term: every cell with a user has mu = 1
        n, P = A.user_count_support(c.lambda1, c.lambda2, tail=1e-14)
        oracle = math.fsum(P[1:])
        assert A.expected_mu_demand(pi0, c) == pytest.approx(oracle, abs=1e-9)
        assert A.expected_mu_demand(pi0, c) == pytest.approx(1 - p0, abs=1e-9)


def test_demand_no_users(cfg):
    assert A.expected_mu_demand(0.4, cfg.replace(user_density=0.0)) == 0.0


def test_demand_zero_rate_flagged(cfg):
    with pytest.warns(A.ModelWarning):
        assert A.expected_mu_demand(0.4, cfg.replace(request_rate=0.0)) == 0.0


def test_demand_golden(cfg, golden):
    assert A.expected_mu_demand(0.5, cfg) == pytest.approx(golden["demand_pi0_0.5"], abs=1e-9)


@pytest.mark.parametrize("pi0", [0.05, 0.3, 0.5, 0.77, 0.99])
def test_demand_equals_mu_average(cfg, pi0):
    n, P = A.user_count_support(cfg.lambda1, cfg.lambda2)
    lam_n = A.aggregate_request_rate(cfg.request_rate, n)
    other = math.fsum(P * A.service_rate_given_state(lam_n, pi0))
    assert A.expected_mu_demand(pi0, cfg) == pytest.approx(other, abs=1e-12)


# --------------------------------------------------------------- contention

def test_enumeration_examples():
    assert A.expected_mu_contention_enumerated(0.5, 1e-9) == pytest.approx(1.0, abs=1e-9)
    assert A.expected_mu_contention_enumerated(0.5, 2.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert A.expected_mu_contention_enumerated(1 - 1e-12, 5.0) == pytest.approx(1.0, abs=1e-9)


def test_closed_form_examples():
    assert A.expected_mu_contention_closed(0.5, 1e-12) == pytest.approx(1.0, abs=1e-12)
    assert A.expected_mu_contention_closed(0.5, 2.0) == pytest.approx(0.6321205588285577, abs=1e-12)
    assert A.expected_mu_contention_closed(0.5, 2.0, "paper") == pytest.approx(1 - math.exp(-2), abs=1e-12)
    assert A.expected_mu_contention_closed(0.5, 2.0, "paper") == pytest.approx(0.864665, abs=1e-6)


def test_paper_form_exceeds_one_is_flagged():
    with pytest.warns(A.ModelWarning, match="exceeds 1"):
        v = A.expected_mu_contention_closed(0.5, 0.05, "paper")
    assert v > 1.0


def test_closed_matches_enumeration_grid():
    for pi0 in np.linspace(0.05, 0.95, 20):
        for nu in np.linspace(0.1, 30, 20):
            assert abs(A.expected_mu_contention_closed(pi0, nu)
                       - A.expected_mu_contention_enumerated(pi0, nu)) < 1e-9


@pytest.mark.parametrize("mode", ["corrected", "paper"])
def test_mode_validated(mode):
    with pytest.raises(ValueError):
        A.expected_mu_contention_closed(0.5, 1.0, mode.upper())


def test_f_examples():
    assert A.combinatorial_f_sum(2, 1.0) == 1.5
    assert A.combinatorial_f(2, 1.0) == pytest.approx(1.5, rel=1e-15)
    assert A.combinatorial_f(2, 1.0, "paper") == 2.0
    for m in (1, 4, 9):
        assert A.combinatorial_f_sum(m, 0.0) == 0.0
        assert A.combinatorial_f(m, 0.0) == 0.0
        assert A.combinatorial_f(m, 0.0, "paper") == pytest.approx(1 / m)
    for x in (0.3, 2.0, 7.5):
        assert A.combinatorial_f_sum(1, x) == pytest.approx(x) == A.combinatorial_f(1, x)


@given(m=st.integers(1, 25), x=st.floats(0.0, 5.0))
def test_f_identity(m, x):
    direct = A.combinatorial_f_sum(m, x)
    assert A.combinatorial_f(m, x) == pytest.approx(direct, rel=1e-12, abs=1e-300)
    paper = A.combinatorial_f(m, x, "paper")
    assert abs(paper - direct - 1 / m) <= 1e-12 * max(1.0, paper)


@pytest.mark.parametrize("m", range(1, 26))
def test_f_paper_offset_exact(m):
    for x in (Fraction(1, 10), Fraction(1, 2), Fraction(1), Fraction(2), Fraction(5)):
        direct = sum(math.comb(m - 1, i - 1) * x**i / i for i in range(1, m + 1))
        assert (x + 1) ** m / m - direct == Fraction(1, m)


# --------------------------------------------------------------- fixed point

@pytest.mark.parametrize("mode", ["corrected", "paper"])
@pytest.mark.parametrize("lam", ["0.03", "0.1", "1"])
def test_solve_matches_oracle(cfg, golden, mode, lam):
    sol = A.solve_pi0(cfg.replace(request_rate=float(lam)), mode)
    assert sol.pi0 == pytest.approx(golden["pi0_roots"][f"{mode}_{lam}"], abs=1e-8)
    assert abs(sol.residual) < 1e-10
    assert sol.pi0 + sol.pi1 == 1.0
    assert 0 < sol.expected_mu <= 1


def test_full_load_reduced_equation(cfg):
    c = cfg.replace(request_rate=1.0)
    p0 = mp.mpf(A.user_count_pmf(0, c.lambda1, c.lambda2))
    nu = mp.mpf(c.nu)
    lo, hi = mp.mpf("0.5"), 1 - mp.mpf("1e-9")
    f = lambda q: (1 - mp.exp(-nu * (1 - q))) / ((1 - q) * nu) - (1 - p0)
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if f(mid) * f(lo) > 0 else (lo, mid)
    assert A.solve_pi0(c).pi0 == pytest.approx(float(lo), abs=1e-9)


def test_solve_both_sides_agree(cfg):
    for lam in (0.03, 0.1, 1.0):
        c = cfg.replace(request_rate=lam)
        sol = A.solve_pi0(c)
        lhs = A.expected_mu_contention_closed(sol.pi0, c.nu)
        rhs = A.expected_mu_demand(sol.pi0, c)
        assert abs(lhs - rhs) < 1e-9


def test_two_roots_reported_and_policy(cfg):
    low = A.solve_pi0(cfg)
    high = A.solve_pi0(cfg, root="highest")
    assert len(low.roots) == 2
    assert low.pi0 == low.roots[0] < high.pi0 == low.roots[1]
    with pytest.raises(A.FixedPointError, match="multiple roots") as info:
        A.solve_pi0(cfg, root="unique")
    assert len(info.value.brackets) == 2


def test_no_root_carries_scan(cfg):
    with pytest.raises(A.FixedPointError, match="no sign change") as info:
        A.solve_pi0(cfg.replace(suppression_radius=50.0))
    assert np.all(info.value.values > 0)
    assert len(info.value.grid) == len(info.value.values)


def test_sparse_users_push_pi0_up(cfg):
    # as user density falls the congested root climbs towards 1 until it vanishes
    vals = [A.solve_pi0(cfg.replace(user_density=d)).pi0 for d in (1000, 600, 300)]
    assert vals[0] < vals[1] < vals[2]


def test_no_traffic_rejected(cfg):
    with pytest.raises(ValueError):
        A.solve_pi0(cfg.replace(request_rate=0.0))
    with pytest.raises(ValueError):
        A.solve_pi0(cfg.replace(user_density=0.0))


# ------------------------------------------------------------- idle / density

def test_idle_examples(cfg, golden):
    assert A.ap_idle_probability(0.3, 0.2, cfg.nu, "paper") == pytest.approx(golden["p_idle_paper"], rel=1e-14)
    assert golden["p_idle_paper"] == pytest.approx(0.94907, abs=5e-6)
    mu = A.expected_mu_contention_closed(0.5, 2.0)
    assert A.ap_idle_probability(0.5, mu, 2.0) == pytest.approx(1 - (1 - math.exp(-1)) / 2, abs=1e-12)
    assert A.ap_idle_probability(0.5, mu, 2.0) == pytest.approx(0.68394, abs=5e-6)
    mu0 = A.expected_mu_contention_closed(0.37, 1e-10)
    assert A.ap_idle_probability(0.37, mu0, 1e-10) == pytest.approx(0.37, abs=1e-9)


def test_paper_idle_is_printed_form():
    for nu in (0.5, 3.0, 19.6):
        pi0 = 0.4
        mu = A.expected_mu_contention_closed(pi0, nu, "paper") if nu > 1 else None
        expect = (nu + math.exp(-nu) - 1) / nu
        assert A.ap_idle_probability(pi0, mu, nu, "paper") == pytest.approx(expect, rel=1e-13)
        if mu is not None:
            assert 1 - mu + pi0 * mu == pytest.approx(expect, rel=1e-12)


def test_active_density(cfg):
    assert A.active_density(1.0, cfg.lambda2) == 0.0
    assert A.active_density(0.0, cfg.lambda2) == cfg.lambda2
    assert A.active_density(0.94907, 100.0) == pytest.approx(5.093, abs=1e-9)


# ----------------------------------------------------------------- coverage

def test_coverage_no_interference(cfg):
    assert A.coverage_probability(cfg, 1.0) == pytest.approx(1.0, abs=1e-9)


def test_coverage_tiny_threshold(cfg):
    c = cfg.replace(packet_size=1.0)  # tbar ~ 1.4e-7
    assert A.coverage_probability(c, 0.0) == pytest.approx(1.0, abs=1e-3)


def test_coverage_golden(cfg, golden):
    mc = golden["coverage_mc"]
    p = A.coverage_probability(cfg, mc["p_idle"])
    assert abs(p - mc["mean"]) <= 3 * mc["se"]


def test_coverage_monotone(cfg):
    sizes = [2e6, 5e6, 10e6, 15e6, 20e6]
    vals = [A.coverage_probability(cfg.replace(packet_size=t), 0.9) for t in sizes]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    idles = [1.0, 0.95, 0.8, 0.5, 0.0]
    vals = [A.coverage_probability(cfg, q) for q in idles]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_coverage_noise_lowers(cfg):
    quiet = A.coverage_probability(cfg, 0.95)
    noisy = A.coverage_probability(cfg.replace(noise_power=1e-9), 0.95)
    assert noisy < quiet


# ---------------------------------------------------------------------- PLR

def _state(pi0, mu):
    return A.StateSolution(pi0=pi0, expected_mu=mu, residual=0.0, mode="corrected")


def test_plr_no_users(cfg):
    assert A.packet_loss_rate(cfg.replace(user_density=0.0), _state(0.5, 0.5), 0.7) == 0.0


def test_plr_golden(cfg, golden):
    inp = golden["plr_inputs"]
    got = A.packet_loss_rate(cfg, _state(inp["pi0"], inp["mu"]), inp["p"])
    assert got == pytest.approx(golden["plr"], abs=1e-9)


def test_plr_empty_bracket_single_requests_free(cfg):
    # with pi0 = 1 only the empty-AP bracket remains; j = 1 contributes nothing
    c = cfg.replace(request_rate=1e-6)
    assert A.packet_loss_rate(c, _state(1.0, 1.0), 1.0) < 1e-5


def test_components_sum_to_total(cfg):
    st_ = _state(0.3, 0.2)
    total = A.packet_loss_rate(cfg, st_, 0.8)
    assert A.loss_components(cfg, st_, 0.8).total == pytest.approx(total, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(pi0=st.floats(0, 1), mu=st.floats(0, 1), p=st.floats(0, 1), lam=st.floats(0.001, 1))
def test_plr_bounded_and_monotone_in_p(pi0, mu, p, lam):
    from chanshare.config import DEFAULTS
    c = DEFAULTS.replace(request_rate=lam, user_density=200.0)
    v = A.packet_loss_rate(c, _state(pi0, mu), p)
    assert -1e-12 <= v <= 1 + 1e-12
    assert A.packet_loss_rate(c, _state(pi0, mu), min(1.0, p + 0.1)) <= v + 1e-12


# ------------------------------------------------------------------ facade

def test_analyze_defaults(cfg, golden):
    r = A.analyze(cfg)
    assert r.state.pi0 == pytest.approx(golden["pi0_roots"]["corrected_0.03"], abs=1e-8)
    assert r.active_density == pytest.approx((1 - r.ap_idle) * cfg.lambda2)
    assert 0 <= r.coverage_p <= 1 and 0 <= r.plr_total <= 1
    assert r.losses.total == pytest.approx(r.plr_total, abs=1e-12)
    assert len(r.csv_row()) == len(A.CSV_COLUMNS)
    assert any("several roots" in f for f in r.flags)


def test_analyze_no_users(cfg):
    r = A.analyze(cfg.replace(user_density=0.0))
    assert r.state.pi0 == 1.0 and r.plr_total == 0.0 and r.ap_idle == 1.0
