"""Discrete-slot Monte-Carlo simulation of opportunistic channel sharing.

Each AP buffers at most one packet. Within a slot:

1. occupancy is recorded (for the empty/idle estimators);
2. APs holding a packet contend: every contender draws a uniform priority
   and transmits iff it beats every other contender within distance R;
3. each winner sends its packet, which leaves the buffer whatever the SINR;
4. new requests are routed: an empty AP keeps one random requester's packet
   and drops the rest, an occupied AP drops all of them.

Buffer state is an int array holding the destination user of the buffered
packet, or -1 for an empty buffer.

Randomness: replication ``r`` of master seed ``s`` uses
``SeedSequence(s, spawn_key=(r,)).spawn(4)`` as the deployment, traffic,
contention and fading streams, in that order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .geometry import pairwise_distance, sample_deployment

log = logging.getLogger(__name__)

EMPTY = -1
MIN_DISTANCE = 1e-3  # m, stands in for coincident transmitter/receiver


@dataclass
class SlotMetrics:
    requests_arrived: int = 0
    dropped_overflow_empty: int = 0
    dropped_busy: int = 0
    transmissions: int = 0
    sinr_failures: int = 0
    successes: int = 0
    active_ap_count: int = 0
    contending_ap_count: int = 0
    empty_ap_count: int = 0
    access_drops: int = 0
    hardcore_violations: int = 0

    def __iadd__(self, other):
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self


@dataclass
class ReplicationResult:
    counts: SlotMetrics  # post-warmup
    lifetime: SlotMetrics  # every slot, for conservation
    n_aps: int
    n_users: int
    slots_measured: int
    initial_buffered: int
    final_buffered: int

    @property
    def conserved(self):
        c = self.lifetime
        delivered = c.successes + c.sinr_failures + c.dropped_overflow_empty + c.dropped_busy
        return c.requests_arrived == delivered + self.final_buffered - self.initial_buffered

    def estimates(self, access_rule="contention"):
        c = self.counts
        ap_slots = self.n_aps * self.slots_measured
        req = c.requests_arrived
        dropped = c.dropped_overflow_empty + c.dropped_busy
        access = c.access_drops if access_rule == "contention" else dropped

        def ratio(x, y):
            return x / y if y else math.nan

        return {
            "pi0": ratio(c.empty_ap_count, ap_slots),
            "P_ai": ratio(ap_slots - c.transmissions, ap_slots),
            "mu": ratio(c.transmissions, c.contending_ap_count),
            "plr_total": ratio(c.sinr_failures + dropped, req),
            "plr_access": ratio(access, req),
            "plr_sinr": ratio(c.sinr_failures, req),
            "plr_buffer": ratio(dropped, req),
        }


def replication_streams(seed, replication):
    ss = np.random.SeedSequence(seed, spawn_key=(replication,))
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def init_run(config, seed, replication=0, deployment=None):
    """Sample a deployment and return it with all-empty buffers and the RNG streams.

    A prepared ``deployment`` may be passed instead; the deployment stream is
    then left unused.
    """
    deploy_rng, traffic_rng, contention_rng, fading_rng = replication_streams(seed, replication)
    dep = sample_deployment(config, deploy_rng) if deployment is None else deployment
    buffer = np.full(len(dep.aps), EMPTY, dtype=np.int64)
    return dep, buffer, (traffic_rng, contention_rng, fading_rng)


@dataclass
class Arrivals:
    counts: np.ndarray  # requests per AP this slot
    buffered_ap: np.ndarray  # APs that took a new packet
    buffered_user: np.ndarray  # its destination
    dropped_empty: int
    dropped_busy: int
    busy_counts: np.ndarray  # per-AP drops at occupied APs


def generate_arrivals(dep, buffer, lam, rng):
    """Bernoulli(lam) request per user; route per AP according to buffer state."""
    n_aps = len(buffer)
    if lam <= 0 or len(dep.users) == 0:
        z = np.zeros(n_aps, np.int64)
        e = np.empty(0, np.int64)
        return Arrivals(z, e, e, 0, 0, z)
    req = np.flatnonzero(rng.random(len(dep.users)) < lam)
    ap = dep.association[req]
    counts = np.bincount(ap, minlength=n_aps)
    perm = rng.permutation(len(req))
    # first requester per AP after shuffling = uniformly random requester
    touched, first = np.unique(ap[perm], return_index=True)
    chosen = req[perm[first]]
    empty = buffer[touched] == EMPTY
    busy_counts = np.where(buffer != EMPTY, counts, 0)
    return Arrivals(
        counts=counts,
        buffered_ap=touched[empty],
        buffered_user=chosen[empty],
        dropped_empty=int((counts[touched[empty]] - 1).sum()),
        dropped_busy=int(busy_counts.sum()),
        busy_counts=busy_counts,
    )


def contention_schedule(edges, contenders, rng):
    """Random-priority hard-core selection among ``contenders`` (bool mask).

    ``edges`` is the directed neighbor pair list ``(i, j)`` of the
    deployment. A contender is active iff no contending neighbor holds a
    larger priority (equal priorities go to the lower index).
    """
    n = len(contenders)
    prio = np.full(n, -1.0)
    idx = np.flatnonzero(contenders)
    prio[idx] = rng.random(len(idx))
    src, dst = edges
    both = contenders[src] & contenders[dst]
    s, d = src[both], dst[both]
    beaten = (prio[d] > prio[s]) | ((prio[d] == prio[s]) & (d < s))
    lost = np.zeros(n, dtype=bool)
    lost[s[beaten]] = True
    return contenders & ~lost


def evaluate_sinr(dep, transmitters, destinations, config, rng):
    """SINR at each transmitter's destination with every other transmitter interfering."""
    k = len(transmitters)
    if k == 0:
        return np.empty(0)
    rx = dep.users.positions[destinations]
    tx = dep.aps.positions[transmitters]
    d = pairwise_distance(rx, tx, dep.side, dep.periodic)
    if np.any(d == 0):
        log.warning("coincident transmitter/receiver; clamping distance to %g m", MIN_DISTANCE)
        d = np.maximum(d, MIN_DISTANCE)
    gain = rng.exponential(size=d.shape) if config.fading_enabled else np.ones_like(d)
    rx_power = config.tx_power_w * gain * d ** (-config.pathloss_exponent)
    signal = np.diagonal(rx_power).copy()
    np.fill_diagonal(rx_power, 0.0)
    interference = rx_power.sum(axis=1)
    with np.errstate(divide="ignore"):
        return signal / (interference + config.noise_power)


def hardcore_violations(dep, active_idx):
    if len(active_idx) < 2:
        return 0
    d = pairwise_distance(dep.aps.positions[active_idx], dep.aps.positions[active_idx],
                          dep.side, dep.periodic)
    return int(np.count_nonzero(np.triu(d <= dep.radius, k=1)))


class Replication:
    """One independent deployment stepped slot by slot."""

    def __init__(self, config, seed, replication=0, trace=None, deployment=None):
        self.config = config
        self.dep, self.buffer, streams = init_run(config, seed, replication, deployment)
        self.traffic_rng, self.contention_rng, self.fading_rng = streams
        self.edges = self.dep.edges()
        self.slot = 0
        self.trace = trace

    def buffered(self):
        return int(np.count_nonzero(self.buffer != EMPTY))

    def _emit(self, aps, event, cause):
        for a in np.atleast_1d(aps).tolist():
            self.trace.append((self.slot, a, event, cause))

    def step(self):
        cfg = self.config
        buf = self.buffer
        m = SlotMetrics()

        occupied = buf != EMPTY
        m.contending_ap_count = int(occupied.sum())
        m.empty_ap_count = len(buf) - m.contending_ap_count

        active = contention_schedule(self.edges, occupied, self.contention_rng)
        tx = np.flatnonzero(active)
        m.active_ap_count = m.transmissions = len(tx)
        m.hardcore_violations = hardcore_violations(self.dep, tx)

        sinr = evaluate_sinr(self.dep, tx, buf[tx], cfg, self.fading_rng)
        ok = sinr >= cfg.tbar
        m.successes = int(ok.sum())
        m.sinr_failures = len(tx) - m.successes
        buf[tx] = EMPTY

        arr = generate_arrivals(self.dep, buf, cfg.request_rate, self.traffic_rng)
        m.requests_arrived = int(arr.counts.sum())
        m.dropped_overflow_empty = arr.dropped_empty
        m.dropped_busy = arr.dropped_busy
        lost_contention = occupied & ~active
        m.access_drops = int(arr.busy_counts[lost_contention].sum())
        buf[arr.buffered_ap] = arr.buffered_user

        if self.trace is not None:
            self._emit(tx[ok], "tx", "success")
            self._emit(tx[~ok], "tx", "sinr")
            for a in np.flatnonzero(arr.busy_counts).tolist():
                self.trace.extend([(self.slot, a, "drop", "busy")] * int(arr.busy_counts[a]))
            for a in arr.buffered_ap.tolist():
                self.trace.append((self.slot, a, "buffer", "arrival"))
                extra = int(arr.counts[a]) - 1
                self.trace.extend([(self.slot, a, "drop", "overflow")] * extra)
        self.slot += 1
        return m


def step_slot(replication):
    return replication.step()


def default_warmup(slots):
    return min(max(500, slots // 10), max(slots - 1, 0))


def run_replication(config, slots, warmup, seed, replication):
    rep = Replication(config, seed, replication)
    initial = rep.buffered()
    counts, lifetime = SlotMetrics(), SlotMetrics()
    for t in range(slots):
        m = rep.step()
        lifetime += m
        if t >= warmup:
            counts += m
    return ReplicationResult(counts=counts, lifetime=lifetime, n_aps=len(rep.dep.aps),
                             n_users=len(rep.dep.users), slots_measured=slots - warmup,
                             initial_buffered=initial, final_buffered=rep.buffered())


RUN_COLUMNS = ("pi0", "P_ai", "mu", "active_density", "plr_total", "plr_access",
               "plr_sinr", "plr_buffer")


def run_csv_header():
    cols = []
    for c in RUN_COLUMNS:
        cols += [f"sim_{c}", f"sim_{c}_se"]
    return cols + ["sim_replications", "sim_slots", "sim_warmup", "sim_seed"]


@dataclass
class RunMetrics:
    """Means and standard errors over replications.

    ``active_density`` is (1 - P_ai) times the nominal AP density (per m^2).
    PLR entries are NaN when no request arrived.
    """

    mean: dict
    stderr: dict
    replications: int
    slots: int
    warmup: int
    seed: int
    hardcore_violations: int
    conserved: bool
    per_replication: list = field(repr=False, default_factory=list)

    @property
    def pi0_hat(self):
        return self.mean["pi0"]

    @property
    def P_ai_hat(self):
        return self.mean["P_ai"]

    @property
    def mu_hat(self):
        return self.mean["mu"]

    @property
    def active_density_hat(self):
        return self.mean["active_density"]

    @property
    def plr_total(self):
        return self.mean["plr_total"]

    def csv_header(self):
        return run_csv_header()

    def csv_row(self):
        vals = []
        for c in RUN_COLUMNS:
            vals += [self.mean[c], self.stderr[c]]
        return vals + [self.replications, self.slots, self.warmup, self.seed]


def _summarize(results, config, slots, warmup, seed, access_rule):
    per = [r.estimates(access_rule) for r in results]
    for e in per:
        e["active_density"] = (1.0 - e["P_ai"]) * config.lambda2
    mean, stderr = {}, {}
    for key in RUN_COLUMNS:
        vals = np.array([e[key] for e in per], dtype=float)
        vals = vals[~np.isnan(vals)]
        mean[key] = float(vals.mean()) if len(vals) else math.nan
        stderr[key] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
    return RunMetrics(
        mean=mean, stderr=stderr, replications=len(results), slots=slots, warmup=warmup,
        seed=seed,
        hardcore_violations=sum(r.lifetime.hardcore_violations for r in results),
        conserved=all(r.conserved for r in results),
        per_replication=results,
    )


def _run_one(args):
    return run_replication(*args)


def run(config, slots, warmup=None, replications=1, seed=0, workers=1,
        access_rule="contention"):
    """Run ``replications`` independent deployments and pool their estimates.

    ``access_rule`` decides what counts as an access-failure loss:
    ``"contention"`` (drops at APs whose packet lost contention that slot)
    or ``"buffer"`` (every buffer drop).
    """
    warmup = default_warmup(slots) if warmup is None else warmup
    if not 0 <= warmup < slots:
        raise ValueError("need 0 <= warmup < slots")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if access_rule not in ("contention", "buffer"):
        raise ValueError(f"unknown access_rule {access_rule!r}")
    jobs = [(config, slots, warmup, seed, r) for r in range(replications)]
    if workers > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    return _summarize(results, config, slots, warmup, seed, access_rule)
