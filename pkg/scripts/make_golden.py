"""Regenerate tests/golden.json from independent high-precision oracles.

Nothing here imports chanshare: every value is recomputed with mpmath (or a
plain Monte-Carlo estimator) straight from the model definitions.

    python scripts/make_golden.py
"""

import json
from pathlib import Path

import mpmath as mp
import numpy as np

mp.mp.dps = 40

L1 = mp.mpf(1000) / 10**6  # users per m^2
L2 = mp.mpf(100) / 10**6  # APs per m^2
K = mp.mpf("3.5")
R = mp.mpf(250)
NU = L2 * mp.pi * R**2
TBAR = mp.mpf(2) ** (mp.mpf(10e6) / (mp.mpf("0.5") * mp.mpf(10e6))) - 1


def pmf(n, l1=L1, l2=L2, k=K):
    return (l1**n * (k * l2) ** k / (l1 + k * l2) ** (k + n)
            * mp.gamma(k + n) / (mp.gamma(n + 1) * mp.gamma(k)))


def pmf_terms(tail, l1=L1, l2=L2):
    terms, mass, n = [], mp.mpf(0), 0
    while 1 - mass >= tail:
        p = pmf(n, l1, l2)
        terms.append(p)
        mass += p
        n += 1
    return terms


def demand(pi0, lam, terms):
    x = (1 - pi0) / pi0
    total = mp.mpf(0)
    for n, p in enumerate(terms):
        if n == 0:
            continue
        lam_n = 1 - (1 - lam) ** n
        total += p / (1 + x * (1 / lam_n - 1))
    return total


def contention(pi0, mode):
    if mode == "corrected":
        y = NU * (1 - pi0)
        return (1 - mp.exp(-y)) / y
    return (1 - mp.exp(-NU)) / ((1 - pi0) * NU)


def plr(pi0, mu, p, lam, terms):
    empty, busy = mp.mpf(0), mp.mpf(0)
    for i, Pi in enumerate(terms):
        if i == 0:
            continue
        for j in range(i + 1):
            w = mp.binomial(i, j) * lam**j * (1 - lam) ** (i - j)
            if j >= 1:
                empty += Pi * w * mp.mpf(j - 1) / j
            busy += Pi * w * (mu * (1 - p / (j + 1)) + (1 - mu) * mp.mpf(j) / (j + 1))
    return pi0 * empty + (1 - pi0) * busy


def coverage_mc(p_idle, n=10**7, seed=12345):
    """Stratified MC over the serving-distance law u = lambda2 pi r^2 ~ Exp(1)."""
    rng = np.random.default_rng(seed)
    l2, tbar, rs = float(L2), float(TBAR), float(R)
    s = np.sqrt(tbar)
    v = (np.arange(n) + rng.random(n)) / n
    u = -np.log1p(-v)
    r2 = u / (l2 * np.pi)
    r = np.sqrt(r2)
    h = np.exp(-(1 - p_idle) * u * s * np.arctan2(r2 * s, (rs - r) ** 2))
    # pairs of adjacent strata give a variance estimate for the stratified mean
    d = h[0::2] - h[1::2]
    se = np.sqrt(np.sum(d * d) / 2.0) / n
    return float(h.mean()), float(se)


def main():
    out = {}
    out["tbar"] = float(TBAR)
    out["nu"] = float(NU)
    out["agg_rate_0.03_10"] = float(1 - (1 - mp.mpf("0.03")) ** 10)
    out["pmf_p0"] = float(pmf(0))

    t12 = pmf_terms(mp.mpf("1e-13"))
    out["demand_pi0_0.5"] = float(demand(mp.mpf("0.5"), mp.mpf("0.03"), t12))

    roots = {}
    for lam in ("0.03", "0.1"):
        for mode in ("corrected", "paper"):
            f = lambda q, lam=lam, mode=mode: contention(q, mode) - demand(q, mp.mpf(lam), t12)
            # congested root; bracket located with a coarse look at the float model
            roots[f"{mode}_{lam}"] = float(mp.findroot(f, (mp.mpf("0.001"), mp.mpf("0.5")),
                                                       solver="anderson"))
    p0 = pmf(0)
    g1 = lambda q: contention(q, "corrected") - (1 - p0)
    roots["corrected_1"] = float(mp.findroot(g1, (mp.mpf("0.9"), 1 - mp.mpf("1e-7")),
                                             solver="anderson"))
    g1p = lambda q: contention(q, "paper") - (1 - p0)
    roots["paper_1"] = float(mp.findroot(g1p, (mp.mpf("0.5"), 1 - mp.mpf("1e-7")),
                                         solver="anderson"))
    out["pi0_roots"] = roots

    p_idle_paper = 1 - (1 - mp.exp(-NU)) / NU
    out["p_idle_paper"] = float(p_idle_paper)
    mean, se = coverage_mc(float(p_idle_paper))
    out["coverage_mc"] = {"p_idle": float(p_idle_paper), "mean": mean, "se": se}

    pi0 = mp.mpf(roots["corrected_0.03"])
    mu = contention(pi0, "corrected")
    p = mp.mpf(mean)
    t11 = pmf_terms(mp.mpf("1e-11"))
    out["plr_inputs"] = {"pi0": float(pi0), "mu": float(mu), "p": float(p)}
    out["plr"] = float(plr(pi0, mu, p, mp.mpf("0.03"), t11))

    path = Path(__file__).resolve().parent.parent / "tests" / "golden.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
