"""Analytical model: traffic, state balance, contention, fixed point, coverage, PLR.

Two formula modes exist wherever the closed forms differ:

``paper``
    the closed forms exactly as printed. The integral of
    d/dx f(x) = (x+1)^(m-1) is stated without its constant, which makes
    E(mu) = (1 - e^-nu) / ((1 - pi0) nu); this exceeds one for small nu.
``corrected``
    f(0) = 0 fixes the constant, f(x) = ((x+1)^m - 1) / m, giving
    E(mu) = (1 - e^(-nu (1-pi0))) / ((1 - pi0) nu). This is what the
    direct enumeration over contender counts reproduces.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammaln, xlogy
from scipy.stats import binom

from .config import FORMULA_MODES, per_m2_to_per_km2

PMF_TAIL = 1e-10
POISSON_TAIL = 1e-12
SOLVER_TOL = 1e-10
SCAN_LO, SCAN_HI, SCAN_STEP = 1e-6, 1.0 - 1e-6, 1e-3


class ModelWarning(UserWarning):
    """A formula was evaluated outside the range where it makes sense."""


class FixedPointError(RuntimeError):
    """No usable root of the contention/demand balance was found."""

    def __init__(self, message, grid=None, values=None, brackets=()):
        super().__init__(message)
        self.grid = grid
        self.values = values
        self.brackets = list(brackets)


class QuadratureError(RuntimeError):
    pass


def _check_mode(mode):
    if mode not in FORMULA_MODES:
        raise ValueError(f"mode must be one of {FORMULA_MODES}, got {mode!r}")


# ------------------------------------------------------------------ traffic

def aggregate_request_rate(lam, n):
    """Per-slot request probability of an AP serving ``n`` users: 1 - (1-lam)^n."""
    n = np.asarray(n, dtype=float)
    if lam >= 1.0:
        out = (n > 0).astype(float)
    else:
        out = -np.expm1(n * math.log1p(-lam))
    return out if out.ndim else float(out)


def user_count_log_pmf(n, lambda1, lambda2, K=3.5):
    n = np.asarray(n, dtype=float)
    total = lambda1 + K * lambda2
    out = (xlogy(n, lambda1) + K * math.log(K * lambda2) - (K + n) * math.log(total)
           + gammaln(K + n) - gammaln(n + 1.0) - gammaln(K))
    return out if out.ndim else float(out)


def user_count_pmf(n, lambda1, lambda2, K=3.5):
    """Probability that a typical AP cell holds ``n`` users (gamma-area approximation)."""
    out = np.exp(user_count_log_pmf(n, lambda1, lambda2, K))
    return out if np.ndim(out) else float(out)


def user_count_support(lambda1, lambda2, K=3.5, tail=PMF_TAIL):
    """Smallest prefix ``0..N`` whose PMF mass exceeds ``1 - tail``; returns (n, P)."""
    if lambda1 == 0:
        return np.array([0]), np.array([1.0])
    mean = lambda1 / lambda2
    var = mean + mean * mean / K
    size = int(mean + 20.0 * math.sqrt(var) + 50)
    while True:
        n = np.arange(size)
        P = user_count_pmf(n, lambda1, lambda2, K)
        remaining = 1.0 - np.cumsum(P)
        idx = np.flatnonzero(remaining < tail)
        if len(idx):
            stop = idx[0] + 1
            return n[:stop], P[:stop]
        size *= 2


# ---------------------------------------------------------- state balance

def service_rate_given_state(lam_n, pi0):
    """Service rate that balances the two-state chain for a given empty probability."""
    lam_n = np.asarray(lam_n, dtype=float)
    num = lam_n * pi0
    den = num + (1.0 - lam_n) * (1.0 - pi0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(lam_n > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return out if out.ndim else float(out)


def _demand_terms(lambda1, lambda2, lam, K, tail):
    n, P = user_count_support(lambda1, lambda2, K, tail)
    keep = n > 0  # mu = 0 in an empty cell
    n, P = n[keep], P[keep]
    return P, np.atleast_1d(aggregate_request_rate(lam, n))


def _demand_from_terms(pi0, P, lam_n):
    pi0 = np.atleast_1d(np.asarray(pi0, dtype=float))[:, None]
    x = (1.0 - pi0) / pi0
    return (P / (1.0 + x * (1.0 / lam_n - 1.0))).sum(axis=1)


def expected_mu_demand(pi0, config, tail=PMF_TAIL):
    """E(mu) averaged over the number of users in a cell.

    Sum over n >= 1 of P_n / (1 + ((1-pi0)/pi0) (1/lambda_n - 1)). Accepts
    a scalar or an array of ``pi0`` values.
    """
    lam = config.request_rate
    if lam == 0:
        warnings.warn("request_rate = 0: demand-side E(mu) is identically 0", ModelWarning)
        return np.zeros(np.shape(pi0)) if np.ndim(pi0) else 0.0
    if config.lambda1 == 0:
        return np.zeros(np.shape(pi0)) if np.ndim(pi0) else 0.0
    P, lam_n = _demand_terms(config.lambda1, config.lambda2, lam, config.voronoi_shape, tail)
    out = _demand_from_terms(pi0, P, lam_n)
    return out if np.ndim(pi0) else float(out[0])


# --------------------------------------------------------------- contention

def expected_mu_contention_enumerated(pi0, nu, tail=POISSON_TAIL):
    """Direct double sum over m APs in the disk and i of them contending.

    m - 1 ~ Poisson(nu) other APs, each independently holding a packet with
    probability 1 - pi0; a contender wins with probability 1/i. Summation
    stops once the remaining Poisson mass drops below ``tail``.
    """
    if not 0.0 < pi0 < 1.0:
        raise ValueError("pi0 must lie in (0, 1)")
    if nu <= 0:
        raise ValueError("nu must be positive")
    log_q, log_p = math.log1p(-pi0), math.log(pi0)
    total = 0.0
    covered = 0.0
    m = 1
    while True:
        log_pm = -nu + (m - 1) * math.log(nu) - math.lgamma(m)
        weight = math.exp(log_pm)
        i = np.arange(1, m + 1, dtype=float)
        log_c = math.lgamma(m) - gammaln(i) - gammaln(m - i + 1.0)
        inner = np.exp(log_c + (i - 1.0) * log_q + (m - i) * log_p) / i
        total += weight * math.fsum(inner)
        covered += weight
        if m > nu and 1.0 - covered < tail:
            return total
        m += 1


def expected_mu_contention_closed(pi0, nu, mode="corrected"):
    """Closed-form E(mu) from contention inside the suppression disk."""
    _check_mode(mode)
    pi0 = np.asarray(pi0, dtype=float)
    busy = 1.0 - pi0
    if mode == "corrected":
        y = nu * busy
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(y > 1e-12, -np.expm1(-y) / np.where(y > 0, y, 1.0), 1.0 - y / 2.0)
    else:
        with np.errstate(divide="ignore"):
            out = -math.expm1(-nu) / (busy * nu)
        if np.any(out > 1.0):
            warnings.warn(
                f"paper-form E(mu) exceeds 1 (max {np.max(out):.6g}) at nu={nu:.6g}",
                ModelWarning,
            )
    return out if out.ndim else float(out)


def combinatorial_f_sum(m, x):
    """sum_{i=1}^m C(m-1, i-1) x^i / i, term by term."""
    return math.fsum(math.comb(m - 1, i - 1) * x**i / i for i in range(1, m + 1))


def combinatorial_f(m, x, mode="corrected"):
    """Antiderivative of (x+1)^(m-1); ``paper`` drops the constant so f(0) = 1/m."""
    _check_mode(mode)
    if mode == "paper":
        return (x + 1.0) ** m / m
    return math.expm1(m * math.log1p(x)) / m


# --------------------------------------------------------------- fixed point

@dataclass(frozen=True)
class StateSolution:
    pi0: float
    expected_mu: float
    residual: float
    mode: str
    roots: tuple = ()  # every root found by the scan, ascending
    degenerate: bool = False

    @property
    def pi1(self):
        return 1.0 - self.pi0


def balance_gap(pi0, config, mode="corrected", tail=PMF_TAIL):
    """Contention-side minus demand-side E(mu); zero at the operating point."""
    return (expected_mu_contention_closed(pi0, config.nu, mode)
            - expected_mu_demand(pi0, config, tail))


def _bisect(g, lo, hi, glo):
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid, gm
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    return mid, g(mid)


def solve_pi0(config, mode=None, root="lowest", tol=SOLVER_TOL, step=SCAN_STEP):
    """Empty probability balancing contention supply against traffic demand.

    Scans [1e-6, 1 - 1e-6] for sign changes of :func:`balance_gap`, then
    bisects each bracket. The balance typically has two roots when traffic
    is light: a congested one and one pinned near pi0 = 1. ``root`` picks
    ``"lowest"`` (default), ``"highest"``, or ``"unique"`` which raises when
    more than one bracket exists.
    """
    mode = mode or config.formula_mode
    _check_mode(mode)
    if root not in ("lowest", "highest", "unique"):
        raise ValueError(f"unknown root policy {root!r}")
    if config.request_rate == 0:
        raise ValueError("request_rate = 0 has no traffic; pi0 = 1 by convention")
    if config.lambda1 == 0:
        raise ValueError("user_density = 0 has no traffic; pi0 = 1 by convention")

    P, lam_n = _demand_terms(config.lambda1, config.lambda2, config.request_rate,
                             config.voronoi_shape, PMF_TAIL)
    nu = config.nu

    def g(p):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ModelWarning)
            c = expected_mu_contention_closed(p, nu, mode)
        d = _demand_from_terms(p, P, lam_n)
        return c - d if np.ndim(p) else float(c - d[0])

    grid = np.arange(SCAN_LO, SCAN_HI, step)
    grid = np.append(grid, SCAN_HI)
    values = g(grid)
    brackets = [(grid[k], grid[k + 1]) for k in np.flatnonzero(values[:-1] * values[1:] < 0)]
    if not brackets:
        raise FixedPointError(
            f"no sign change of the balance gap on [{SCAN_LO}, {SCAN_HI}] "
            f"(min {values.min():.3e}, max {values.max():.3e})",
            grid=grid, values=values,
        )
    if root == "unique" and len(brackets) > 1:
        raise FixedPointError(
            "multiple roots bracketed: " + ", ".join(f"[{a:.6f}, {b:.6f}]" for a, b in brackets),
            grid=grid, values=values, brackets=brackets,
        )
    roots = [_bisect(g, lo, hi, g(lo)) for lo, hi in brackets]
    pi0, residual = roots[0] if root != "highest" else roots[-1]
    if abs(residual) >= tol:
        raise FixedPointError(f"bisection stalled with residual {residual:.3e}",
                              grid=grid, values=values, brackets=brackets)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModelWarning)
        mu = expected_mu_contention_closed(pi0, nu, mode)
    return StateSolution(pi0=float(pi0), expected_mu=float(mu), residual=float(residual),
                         mode=mode, roots=tuple(float(r) for r, _ in roots))


# ------------------------------------------------------------- idle / density

def ap_idle_probability(pi0, mu, nu, mode="corrected"):
    """P(AP silent in a slot) = pi0 + (1 - pi0)(1 - mu).

    In ``paper`` mode this is the printed closed form (nu + e^-nu - 1)/nu,
    which no longer depends on pi0.
    """
    _check_mode(mode)
    if mode == "paper":
        return 1.0 + math.expm1(-nu) / nu
    return 1.0 - mu + pi0 * mu


def active_density(p_idle, lambda2):
    return (1.0 - p_idle) * lambda2


# ----------------------------------------------------------------- coverage

def _coverage_integrand(u, lambda2, active_frac, tbar, rs, eta, noise_to_power):
    r2 = u / (lambda2 * math.pi)
    r = math.sqrt(r2)
    s = math.sqrt(tbar)
    interf = active_frac * u * s * math.atan2(r2 * s, (rs - r) ** 2)
    noise = tbar * r**eta * noise_to_power if noise_to_power else 0.0
    return math.exp(-u - interf - noise)


def coverage_probability(config, p_idle, rs=None, floor=1e-14):
    """P(SINR >= threshold) for a typical user, by adaptive quadrature.

    Integrates over u = lambda2 pi r^2 so the serving-distance density
    becomes e^-u; the domain is split at the kink r = rs and cut where e^-u
    drops below ``floor``.
    """
    rs = config.rs if rs is None else rs
    if rs <= 0:
        raise ValueError("rs must be positive")
    tbar = config.tbar
    lambda2 = config.lambda2
    args = (lambda2, 1.0 - p_idle, tbar, rs, config.pathloss_exponent,
            config.noise_power / config.tx_power_w)
    u_max = -math.log(floor)
    u_kink = lambda2 * math.pi * rs * rs
    pieces = [(0.0, u_kink), (u_kink, u_max)] if u_kink < u_max else [(0.0, u_max)]
    total, err = 0.0, 0.0
    for a, b in pieces:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, e = integrate.quad(_coverage_integrand, a, b, args=args,
                                        epsabs=1e-13, epsrel=1e-11, limit=400)
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(f"quad failed on [{a:.4g}, {b:.4g}]: {exc}") from None
        total += val
        err += e
    if err > 1e-8:
        raise QuadratureError(f"coverage quadrature error estimate {err:.3e} exceeds 1e-8")
    if -1e-9 <= total < 0.0:
        total = 0.0
    elif 1.0 < total <= 1.0 + 1e-9:
        total = 1.0
    elif not 0.0 <= total <= 1.0:
        raise QuadratureError(f"coverage probability {total!r} outside [0, 1]")
    return total


# ---------------------------------------------------------------------- PLR

@dataclass(frozen=True)
class LossBreakdown:
    """Additive pieces of the network packet loss rate.

    ``overflow``: extra requests at an empty AP; ``access``: requests lost
    while the buffered packet waits after losing contention; ``sinr``: the
    transmitted packet misses the threshold; ``busy``: requests dropped at an
    AP that is transmitting.
    """

    overflow: float
    access: float
    sinr: float
    busy: float

    @property
    def total(self):
        return self.overflow + self.access + self.sinr + self.busy


def _request_moments(lambda1, lambda2, lam, K, tail):
    """Sum_i P_i sum_j Binom(j; i, lam) w(j) for the three weights needed."""
    i, P = user_count_support(lambda1, lambda2, K, tail)
    keep = i > 0
    i, P = i[keep], P[keep]
    if len(i) == 0:
        return 0.0, 0.0, 0.0
    j = np.arange(int(i.max()) + 1)
    W = binom.pmf(j[None, :], i[:, None], lam)  # zero where j > i
    drop_empty = np.where(j > 0, (j - 1) / np.maximum(j, 1), 0.0)
    frac_new = j / (j + 1.0)
    frac_old = 1.0 / (j + 1.0)
    return (float(P @ (W @ drop_empty)), float(P @ (W @ frac_new)),
            float(P @ (W @ frac_old)))


def loss_components(config, solution, p, tail=PMF_TAIL):
    if config.lambda1 == 0 or config.request_rate == 0:
        return LossBreakdown(0.0, 0.0, 0.0, 0.0)
    a, b, c = _request_moments(config.lambda1, config.lambda2, config.request_rate,
                               config.voronoi_shape, tail)
    pi0, mu = solution.pi0, solution.expected_mu
    busy = 1.0 - pi0
    return LossBreakdown(
        overflow=pi0 * a,
        access=busy * (1.0 - mu) * b,
        sinr=busy * mu * (1.0 - p) * c,
        busy=busy * mu * b,
    )


def packet_loss_rate(config, solution, p, tail=PMF_TAIL):
    """Network PLR: the double sum over users per cell i and requests j.

    Empty AP with j requests loses (j-1)/j of them; an occupied AP loses
    mu (1 - p/(j+1)) + (1 - mu) j/(j+1).
    """
    if config.lambda1 == 0 or config.request_rate == 0:
        return 0.0
    i, P = user_count_support(config.lambda1, config.lambda2, config.voronoi_shape, tail)
    keep = i > 0
    i, P = i[keep], P[keep]
    lam = config.request_rate
    pi0, mu = solution.pi0, solution.expected_mu
    empty_part = 0.0
    busy_part = 0.0
    for ii, Pi in zip(i.tolist(), P.tolist()):
        j = np.arange(ii + 1)
        w = binom.pmf(j, ii, lam)
        empty_part += Pi * math.fsum(w[1:] * (j[1:] - 1) / j[1:])
        busy_part += Pi * math.fsum(w * (mu * (1.0 - p / (j + 1.0))
                                         + (1.0 - mu) * j / (j + 1.0)))
    return pi0 * empty_part + (1.0 - pi0) * busy_part


# ------------------------------------------------------------------ facade

CSV_COLUMNS = ("mode", "lambda1", "lambda2", "lambda", "R", "pi0", "mu", "P_ai",
               "active_density", "p", "plr")


@dataclass(frozen=True)
class AnalyticResult:
    state: StateSolution
    ap_idle: float
    active_density: float  # per m^2
    coverage_p: float
    plr_total: float
    losses: LossBreakdown
    config: object = field(repr=False, compare=False, default=None)
    flags: tuple = ()

    @property
    def mode(self):
        return self.state.mode

    def csv_row(self):
        """Values in ``CSV_COLUMNS`` order; densities in nodes/km^2."""
        c = self.config
        return [self.mode, c.user_density, c.ap_density, c.request_rate,
                c.suppression_radius, self.state.pi0, self.state.expected_mu,
                self.ap_idle, per_m2_to_per_km2(self.active_density),
                self.coverage_p, self.plr_total]


def analyze(config, mode=None, root="lowest"):
    """Solve the fixed point and evaluate every downstream quantity."""
    mode = mode or config.formula_mode
    _check_mode(mode)
    nu = config.nu
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ModelWarning)
        if config.request_rate == 0 or config.lambda1 == 0:
            state = StateSolution(pi0=1.0, expected_mu=1.0, residual=0.0, mode=mode,
                                  degenerate=True)
            warnings.warn("no traffic: pi0 = 1 by convention", ModelWarning)
        else:
            state = solve_pi0(config, mode, root=root)
        p_idle = ap_idle_probability(state.pi0, state.expected_mu, nu, mode)
        p = coverage_probability(config, p_idle)
        plr = packet_loss_rate(config, state, p)
        losses = loss_components(config, state, p)
        for name, value in (("mu", state.expected_mu), ("P_ai", p_idle)):
            if not 0.0 <= value <= 1.0:
                warnings.warn(f"{name} = {value:.6g} outside [0, 1]", ModelWarning)
        if len(state.roots) > 1:
            warnings.warn(
                "balance has several roots " + ", ".join(f"{r:.6g}" for r in state.roots),
                ModelWarning,
            )
    flags = tuple(dict.fromkeys(str(w.message) for w in caught
                                if issubclass(w.category, ModelWarning)))
    return AnalyticResult(
        state=state,
        ap_idle=p_idle,
        active_density=active_density(p_idle, config.lambda2),
        coverage_p=p,
        plr_total=plr,
        losses=losses,
        config=config,
        flags=flags,
    )
