"""Point sampling, toroidal metric, nearest-AP association and disk neighbors."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PointSet:
    positions: np.ndarray  # (n, 2), metres, inside [0, side)^2
    role: str  # "user" | "ap"

    def __len__(self):
        return len(self.positions)


@dataclass(frozen=True)
class Deployment:
    aps: PointSet
    users: PointSet
    association: np.ndarray  # user index -> AP index
    neighbors: list  # AP index -> sorted array of AP indices within radius
    side: float
    radius: float
    periodic: bool = True

    def edges(self):
        """Directed neighbor pairs ``(i, j)`` as two index arrays."""
        counts = np.array([len(nb) for nb in self.neighbors], dtype=np.int64)
        src = np.repeat(np.arange(len(self.neighbors)), counts)
        dst = np.concatenate(self.neighbors) if len(self.neighbors) else np.empty(0, np.int64)
        return src, dst.astype(np.int64)

    def users_per_ap(self):
        return np.bincount(self.association, minlength=len(self.aps))


def sample_ppp(intensity, side, rng, role="ap"):
    """Homogeneous PPP of ``intensity`` points/m^2 on the square [0, side)^2."""
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    n = rng.poisson(intensity * side * side)
    pos = rng.random((n, 2)) * side
    # guard against rounding up to ``side``
    pos[pos >= side] = 0.0
    return PointSet(pos, role)


def wrap_delta(delta, side, periodic=True):
    delta = np.abs(delta)
    if periodic:
        delta = np.minimum(delta, side - delta)
    return delta


def toroidal_distance(a, b, side, periodic=True):
    """Distance between ``a`` and ``b`` (broadcasting over leading axes)."""
    d = wrap_delta(np.asarray(b, float) - np.asarray(a, float), side, periodic)
    return np.hypot(d[..., 0], d[..., 1])


def pairwise_distance(p, q, side, periodic=True):
    """(len(p), len(q)) matrix of distances."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    return toroidal_distance(p[:, None, :], q[None, :, :], side, periodic)


def associate_nearest(users, aps, side, periodic=True, chunk=2048):
    """Index of the closest AP for every user; ties go to the lowest AP index."""
    users = getattr(users, "positions", users)
    aps = getattr(aps, "positions", aps)
    if len(aps) == 0:
        raise ValueError("cannot associate users with an empty AP set")
    out = np.empty(len(users), dtype=np.int64)
    for start in range(0, len(users), chunk):
        block = users[start:start + chunk]
        d = wrap_delta(block[:, None, :] - aps[None, :, :], side, periodic)
        # argmin returns the first minimum, i.e. the lowest index on ties
        out[start:start + chunk] = np.argmin(d[..., 0] ** 2 + d[..., 1] ** 2, axis=1)
    return out


def neighbors_within(aps, radius, side, periodic=True):
    """For each AP, the sorted indices of other APs at distance <= radius.

    Uses a uniform bucket grid whose cells are at least ``radius`` wide, so
    only the 3x3 block of cells around each bucket needs scanning.
    """
    pos = np.asarray(getattr(aps, "positions", aps), float)
    if radius >= side / 2:
        raise ValueError(f"radius {radius} must be below half the side ({side / 2})")
    n = len(pos)
    if n == 0:
        return []
    ncell = max(1, int(side // radius))
    cell = side / ncell
    ij = np.minimum((pos // cell).astype(np.int64), ncell - 1)
    cid = ij[:, 0] * ncell + ij[:, 1]
    order = np.argsort(cid, kind="stable")
    starts = np.searchsorted(cid[order], np.arange(ncell * ncell + 1))

    r2 = radius * radius
    found = [[] for _ in range(n)]
    for cx in range(ncell):
        for cy in range(ncell):
            here = order[starts[cx * ncell + cy]:starts[cx * ncell + cy + 1]]
            if len(here) == 0:
                continue
            others = set()
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nx, ny = cx + dx, cy + dy
                    if periodic:
                        nx, ny = nx % ncell, ny % ncell
                    elif not (0 <= nx < ncell and 0 <= ny < ncell):
                        continue
                    others.add(nx * ncell + ny)
            cand = np.concatenate([order[starts[c]:starts[c + 1]] for c in sorted(others)])
            d = wrap_delta(pos[here][:, None, :] - pos[cand][None, :, :], side, periodic)
            hit = (d[..., 0] ** 2 + d[..., 1] ** 2) <= r2
            for row, a in enumerate(here):
                found[a].extend(cand[hit[row]].tolist())
    return [np.array(sorted(set(f) - {a}), dtype=np.int64) for a, f in enumerate(found)]


def build_deployment(aps, users, radius, side, periodic=True):
    return Deployment(
        aps=aps,
        users=users,
        association=(associate_nearest(users, aps, side, periodic)
                     if len(users) else np.empty(0, np.int64)),
        neighbors=neighbors_within(aps, radius, side, periodic),
        side=side,
        radius=radius,
        periodic=periodic,
    )


def sample_deployment(config, rng):
    """Independent AP and user PPPs for ``config``, associated and indexed."""
    side = config.region_side
    aps = sample_ppp(config.lambda2, side, rng, role="ap")
    users = sample_ppp(config.lambda1, side, rng, role="user")
    if len(aps) == 0:
        raise ValueError("sampled deployment has no APs; enlarge region_side or ap_density")
    return build_deployment(aps, users, config.suppression_radius, side, config.torus)


def dump_deployment(dep, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["role", "index", "x_m", "y_m"])
        for ps in (dep.aps, dep.users):
            for i, (x, y) in enumerate(ps.positions):
                w.writerow([ps.role, i, repr(float(x)), repr(float(y))])


def load_deployment(path, radius, side, periodic=True):
    rows = {"ap": [], "user": []}
    with open(Path(path), newline="") as fh:
        for rec in csv.DictReader(fh):
            rows[rec["role"]].append((int(rec["index"]), float(rec["x_m"]), float(rec["y_m"])))
    sets = {}
    for role, items in rows.items():
        items.sort()
        if [i for i, _, _ in items] != list(range(len(items))):
            raise ValueError(f"{path}: {role} indices are not contiguous from 0")
        sets[role] = PointSet(np.array([(x, y) for _, x, y in items], float).reshape(-1, 2), role)
    return build_deployment(sets["ap"], sets["user"], radius, side, periodic)
