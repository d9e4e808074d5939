"""Event-driven dynamics of point aggregates for the two-species model.

Clusters are Dirac masses carrying a species-1 mass m1 and a species-2
mass m2 (a *glued* cluster has both).  Between events the positions obey
the attraction ODEs driven by the hatted kernel; contacts are located by
bisection on a one-step second-order integrator.  Same-species contacts
merge; cross-species contacts glue or cross depending on the
synchronising condition

    |(chi1 - chi2) * gamma| <= (chi1 theta2 m2 + chi2 theta1 m1) / 2,

where gamma is the external weighted attraction exerted by all other
clusters on the colliding pair.  A glued cluster re-checks the condition
every step and splits (unglues) the moment it fails.

Cluster masses are quantized to a per-species power-of-two quantum at
construction so that merging masses is an exact float operation and the
per-species totals are invariant across every event to 0 ulp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fv import mass_quantum
from .kernel import PointyKernel
from .measures import DiscreteMeasure, ModelParams, SpeciesPair

__all__ = [
    "Cluster",
    "ClusterSet",
    "Event",
    "SyncCheck",
    "velocities",
    "external_attraction",
    "sync_condition",
    "glued_selection",
    "advance",
    "run",
    "ParticleRunResult",
]


@dataclass
class Cluster:
    position: float
    m1: float
    m2: float
    id: int = -1

    def __post_init__(self):
        if self.m1 < 0 or self.m2 < 0:
            raise ValueError("cluster masses must be nonnegative")
        if not self.m1 + self.m2 > 0:
            raise ValueError("a cluster must carry positive total mass")

    @property
    def glued(self) -> bool:
        return self.m1 > 0 and self.m2 > 0

    @property
    def mass(self) -> float:
        return self.m1 + self.m2


@dataclass
class ClusterSet:
    """Ordered aggregates at a common time.

    Positions must be strictly increasing.  Masses are snapped to the
    per-species quantum so that merge arithmetic is exact.
    """

    clusters: list[Cluster]
    time: float = 0.0
    next_id: int = field(default=-1)

    def __post_init__(self):
        if not self.clusters:
            raise ValueError("cluster set must not be empty")
        pos = [c.position for c in self.clusters]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("cluster positions must be strictly increasing")
        q1 = mass_quantum(math.fsum(c.m1 for c in self.clusters))
        q2 = mass_quantum(math.fsum(c.m2 for c in self.clusters))
        for c in self.clusters:
            if q1 > 0.0:
                c.m1 = round(c.m1 / q1) * q1
            if q2 > 0.0:
                c.m2 = round(c.m2 / q2) * q2
        if self.next_id < 0:
            used = [c.id for c in self.clusters]
            start = max(used, default=-1) + 1
            for c in self.clusters:
                if c.id < 0:
                    c.id = start
                    start += 1
            self.next_id = start

    def __len__(self) -> int:
        return len(self.clusters)

    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.clusters])

    def total_masses(self) -> tuple[float, float]:
        return (
            math.fsum(c.m1 for c in self.clusters),
            math.fsum(c.m2 for c in self.clusters),
        )

    def weighted_center(self, p: ModelParams) -> float:
        s1 = math.fsum(c.m1 * c.position for c in self.clusters)
        s2 = math.fsum(c.m2 * c.position for c in self.clusters)
        return (p.theta1 / p.chi1) * s1 + (p.theta2 / p.chi2) * s2

    def species_pair(self) -> SpeciesPair:
        pos1 = [(c.position, c.m1) for c in self.clusters if c.m1 > 0]
        pos2 = [(c.position, c.m2) for c in self.clusters if c.m2 > 0]
        return SpeciesPair(
            DiscreteMeasure([x for x, _ in pos1], [m for _, m in pos1]),
            DiscreteMeasure([x for x, _ in pos2], [m for _, m in pos2]),
        )

    def copy(self) -> "ClusterSet":
        return ClusterSet([replace(c) for c in self.clusters], self.time, self.next_id)


@dataclass(frozen=True)
class SyncCheck:
    holds: bool
    lhs: float
    rhs: float


@dataclass(frozen=True)
class Event:
    time: float
    kind: str  # merge_same_species | glue | unglue | cross | final_collapse
    participants: tuple[int, ...]
    positions: tuple[float, ...]
    m1: float
    m2: float
    gamma: float | None = None
    sync_lhs: float | None = None
    sync_rhs: float | None = None
    all_positions: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "kind": self.kind,
            "participants": list(self.participants),
            "positions": list(self.positions),
            "m1": self.m1,
            "m2": self.m2,
            "gamma": self.gamma,
            "sync_lhs": self.sync_lhs,
            "sync_rhs": self.sync_rhs,
            "all_positions": list(self.all_positions),
        }


def sync_condition(gamma_val: float, m1: float, m2: float, p: ModelParams) -> SyncCheck:
    """Decide whether a touching cross-species pair travels together.

    lhs = |(chi1 - chi2) gamma|, rhs = (chi1 theta2 m2 + chi2 theta1 m1)/2;
    the pair synchronises iff lhs <= rhs.
    """
    if not (m1 > 0 and m2 > 0):
        raise ValueError("sync condition needs positive masses of both species")
    lhs = abs((p.chi1 - p.chi2) * gamma_val)
    rhs = 0.5 * (p.chi1 * p.theta2 * m2 + p.chi2 * p.theta1 * m1)
    return SyncCheck(lhs <= rhs, lhs, rhs)


def glued_selection(gamma_val: float, m1: float, m2: float, p: ModelParams) -> float:
    """Velocity selection w replacing the kernel slope inside a glued pair.

    w is the unique value making both species' ODEs agree; it is
    admissible (|w| <= 1/2) exactly when the synchronising condition
    holds.  The pair's common velocity is chi1 (gamma + theta2 m2 w)
    = chi2 (gamma - theta1 m1 w).
    """
    if not (m1 > 0 and m2 > 0):
        raise ValueError("glued selection needs positive masses of both species")
    return (p.chi2 - p.chi1) * gamma_val / (p.chi1 * p.theta2 * m2 + p.chi2 * p.theta1 * m1)


def _raw_velocities(
    z: np.ndarray,
    m1: np.ndarray,
    m2: np.ndarray,
    kernel: PointyKernel,
    p: ModelParams,
) -> np.ndarray:
    """Cluster velocities for arbitrary (possibly unordered) positions."""
    wrho = p.theta1 * m1 + p.theta2 * m2
    pull = kernel.hat_deriv(z[:, None] - z[None, :]) @ wrho
    v = np.where(m1 > 0, p.chi1 * pull, p.chi2 * pull)
    both = (m1 > 0) & (m2 > 0)
    for k in np.flatnonzero(both):
        w_sel = glued_selection(pull[k], m1[k], m2[k], p)
        # between unglue checks the selection may transiently leave the
        # admissible band; keep the slope physical
        w_sel = min(0.5, max(-0.5, w_sel))
        v[k] = p.chi1 * (pull[k] + p.theta2 * m2[k] * w_sel)
    return v


def velocities(cs: ClusterSet, kernel: PointyKernel, p: ModelParams) -> np.ndarray:
    """Velocities of all clusters (free clusters: chi_a times the external
    pull; glued clusters: the common selected velocity)."""
    m1 = np.array([c.m1 for c in cs.clusters])
    m2 = np.array([c.m2 for c in cs.clusters])
    return _raw_velocities(cs.positions(), m1, m2, kernel, p)


def external_attraction(
    cs: ClusterSet,
    exclude,
    kernel: PointyKernel,
    p: ModelParams,
    at: float | None = None,
) -> float:
    """Weighted attraction exerted by every cluster outside ``exclude``.

    ``exclude`` is a cluster index or an iterable of indices (a colliding
    pair excludes both participants).  Evaluated at ``at`` or, by default,
    at the position of the first excluded cluster.
    """
    if isinstance(exclude, (int, np.integer)):
        exclude = (int(exclude),)
    excl = set(int(i) for i in exclude)
    if at is None:
        at = cs.clusters[min(excl)].position
    total = 0.0
    for i, c in enumerate(cs.clusters):
        if i in excl:
            continue
        total += (p.theta1 * c.m1 + p.theta2 * c.m2) * kernel.hat_deriv(at - c.position)
    return total


def _safe_split_positions(
    pos: float, direction: float, gap_tol: float, left_bound: float, right_bound: float
) -> tuple[float, float]:
    """Positions for a separating pair: species 1 offset in ``direction``.

    The offset is capped so freshly split clusters never jump over their
    neighbors.
    """
    room = min(pos - left_bound, right_bound - pos)
    off = 0.5 * min(gap_tol, 0.5 * room if math.isfinite(room) else gap_tol)
    if off <= 0.0:
        off = 0.5 * gap_tol
    s1 = pos + direction * off
    s2 = pos - direction * off
    return s1, s2


def _handle_group(
    cs: ClusterSet,
    group: list[int],
    kernel: PointyKernel,
    p: ModelParams,
    gap_tol: float,
    t_event: float,
    new_clusters: list[Cluster],
    events: list[Event],
) -> int:
    """Resolve a contact among consecutive clusters; returns next free id."""
    members = [cs.clusters[i] for i in group]
    ids = tuple(c.id for c in members)
    pos_list = tuple(c.position for c in members)
    m1 = math.fsum(c.m1 for c in members)
    m2 = math.fsum(c.m2 for c in members)
    total = m1 + m2
    pos = math.fsum(c.mass * c.position for c in members) / total
    all_pos = tuple(c.position for c in cs.clusters)
    next_id = cs.next_id

    n_s1 = sum(1 for c in members if c.m1 > 0)
    n_s2 = sum(1 for c in members if c.m2 > 0)
    if n_s1 > 1 or n_s2 > 1:
        events.append(
            Event(t_event, "merge_same_species", ids, pos_list, m1, m2, all_positions=all_pos)
        )
    if m1 > 0 and m2 > 0:
        gam = external_attraction(cs, group, kernel, p, at=pos)
        chk = sync_condition(gam, m1, m2, p)
        if chk.holds:
            new_clusters.append(Cluster(pos, m1, m2, next_id))
            next_id += 1
            events.append(
                Event(t_event, "glue", ids, pos_list, m1, m2, gam, chk.lhs, chk.rhs, all_pos)
            )
        else:
            direction = 1.0 if (p.chi1 - p.chi2) * gam > 0 else -1.0
            left = cs.clusters[group[0] - 1].position if group[0] > 0 else -math.inf
            right = (
                cs.clusters[group[-1] + 1].position if group[-1] + 1 < len(cs) else math.inf
            )
            s1_pos, s2_pos = _safe_split_positions(pos, direction, gap_tol, left, right)
            new_clusters.append(Cluster(s1_pos, m1, 0.0, next_id))
            new_clusters.append(Cluster(s2_pos, 0.0, m2, next_id + 1))
            next_id += 2
            events.append(
                Event(t_event, "cross", ids, pos_list, m1, m2, gam, chk.lhs, chk.rhs, all_pos)
            )
    else:
        new_clusters.append(Cluster(pos, m1, m2, next_id))
        next_id += 1
        if not events or events[-1].kind != "merge_same_species" or events[-1].participants != ids:
            events.append(
                Event(t_event, "merge_same_species", ids, pos_list, m1, m2, all_positions=all_pos)
            )
    return next_id


def _unglue_pass(
    cs: ClusterSet, kernel: PointyKernel, p: ModelParams, gap_tol: float
) -> tuple[ClusterSet, list[Event]]:
    events: list[Event] = []
    out: list[Cluster] = []
    next_id = cs.next_id
    for i, c in enumerate(cs.clusters):
        if not c.glued:
            out.append(replace(c))
            continue
        gam = external_attraction(cs, i, kernel, p)
        chk = sync_condition(gam, c.m1, c.m2, p)
        if chk.holds:
            out.append(replace(c))
            continue
        direction = 1.0 if (p.chi1 - p.chi2) * gam > 0 else -1.0
        left = cs.clusters[i - 1].position if i > 0 else -math.inf
        right = cs.clusters[i + 1].position if i + 1 < len(cs) else math.inf
        s1_pos, s2_pos = _safe_split_positions(c.position, direction, gap_tol, left, right)
        out.append(Cluster(s1_pos, c.m1, 0.0, next_id))
        out.append(Cluster(s2_pos, 0.0, c.m2, next_id + 1))
        next_id += 2
        events.append(
            Event(
                cs.time,
                "unglue",
                (c.id,),
                (c.position,),
                c.m1,
                c.m2,
                gam,
                chk.lhs,
                chk.rhs,
                tuple(cl.position for cl in cs.clusters),
            )
        )
    if not events:
        return cs, []
    out.sort(key=lambda c: c.position)
    return ClusterSet(out, cs.time, next_id), events


def _contact_groups(gaps_touching: np.ndarray) -> list[list[int]]:
    """Group cluster indices joined by touching adjacent gaps."""
    groups: list[list[int]] = []
    current: list[int] = []
    for i, touching in enumerate(gaps_touching):
        if touching:
            if not current:
                current = [i, i + 1]
            else:
                current.append(i + 1)
        elif current:
            groups.append(current)
            current = []
    if current:
        groups.append(current)
    return groups


def advance(
    cs: ClusterSet,
    kernel: PointyKernel,
    p: ModelParams,
    dt_max: float,
    gap_tol: float = 1e-9,
) -> tuple[ClusterSet, list[Event]]:
    """Advance by at most ``dt_max``, stopping at the first contact.

    The step uses a two-stage second-order integrator, capped so no
    closing gap shrinks by more than a quarter per step.  Contacts are
    bracketed in time by bisection to 1e-6 and then resolved: same-species
    groups merge, mixed groups glue or cross according to the
    synchronising condition (with the external attraction excluding the
    whole group), and every glued cluster is re-checked for ungluing at
    the start of the step.
    """
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    if not gap_tol > 0:
        raise ValueError("gap_tol must be positive")

    cs, events = _unglue_pass(cs, kernel, p, gap_tol)
    if events:
        return cs, events
    n = len(cs)
    if n == 1:
        out = cs.copy()
        out.time = cs.time + dt_max
        return out, []

    z0 = cs.positions()
    m1 = np.array([c.m1 for c in cs.clusters])
    m2 = np.array([c.m2 for c in cs.clusters])
    if not np.all(np.isfinite(z0)):
        raise FloatingPointError("non-finite cluster positions")

    def trial(tau: float) -> np.ndarray:
        v1 = _raw_velocities(z0, m1, m2, kernel, p)
        z_star = z0 + tau * v1
        v2 = _raw_velocities(z_star, m1, m2, kernel, p)
        return z0 + 0.5 * tau * (v1 + v2)

    v0 = _raw_velocities(z0, m1, m2, kernel, p)
    gaps = np.diff(z0)
    closing = np.diff(v0)

    # contacts already pending from a previous event resolution
    touching = (gaps <= 1.5 * gap_tol) & (closing < 0)
    if np.any(touching):
        groups = _contact_groups(touching)
        in_group = set(i for g in groups for i in g)
        new_clusters = [replace(c) for i, c in enumerate(cs.clusters) if i not in in_group]
        next_id = cs.next_id
        working = ClusterSet([replace(c) for c in cs.clusters], cs.time, cs.next_id)
        for g in groups:
            next_id = _handle_group(
                working, g, kernel, p, gap_tol, cs.time, new_clusters, events
            )
            working.next_id = next_id
        new_clusters.sort(key=lambda c: c.position)
        return ClusterSet(new_clusters, cs.time, next_id), events

    dt = dt_max
    shrinking = closing < 0
    if np.any(shrinking):
        dt = min(dt, float(np.min(0.25 * gaps[shrinking] / (-closing[shrinking]))))

    def has_contact(z: np.ndarray) -> np.ndarray:
        return np.diff(z) <= gap_tol

    z_end = trial(dt)
    if not np.any(has_contact(z_end)):
        out = [replace(c, position=float(x)) for c, x in zip(cs.clusters, z_end)]
        return ClusterSet(out, cs.time + dt, cs.next_id), events

    # bracket the first contact time
    lo, hi = 0.0, dt
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if np.any(has_contact(trial(mid))):
            hi = mid
        else:
            lo = mid
    touching = has_contact(trial(hi))
    z_commit = trial(lo) if lo > 0.0 else z0
    t_event = cs.time + hi

    committed = ClusterSet(
        [replace(c, position=float(x)) for c, x in zip(cs.clusters, z_commit)],
        t_event,
        cs.next_id,
    )
    groups = _contact_groups(touching)
    in_group = set(i for g in groups for i in g)
    new_clusters = [replace(c) for i, c in enumerate(committed.clusters) if i not in in_group]
    next_id = committed.next_id
    for g in groups:
        next_id = _handle_group(
            committed, g, kernel, p, gap_tol, t_event, new_clusters, events
        )
        committed.next_id = next_id
    new_clusters.sort(key=lambda c: c.position)
    return ClusterSet(new_clusters, t_event, next_id), events


@dataclass
class ParticleRunResult:
    events: list[Event]
    samples: list[tuple[float, list[Cluster]]]
    final: ClusterSet
    dt_max: float
    gap_tol: float
    snapshots: list[tuple[float, ClusterSet]] = field(default_factory=list)


def run(
    initial: ClusterSet,
    kernel: PointyKernel,
    p: ModelParams,
    T: float,
    dt_max: float = 1e-3,
    gap_tol: float = 1e-9,
    sample_dt: float | None = None,
    snapshot_times: tuple[float, ...] = (),
) -> ParticleRunResult:
    """Advance repeatedly until time T or a single remaining aggregate.

    Emits a ``final_collapse`` event when the population first reduces to
    one cluster.  Trajectories are sampled every ``sample_dt`` (default
    T/200); ``snapshot_times`` are hit exactly (the step is shortened to
    land on them) and reported in ``snapshots``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if sample_dt is None:
        sample_dt = T / 200.0
    pending = sorted(t for t in snapshot_times if t > initial.time)
    if any(t > T for t in pending):
        raise ValueError("snapshot times must lie in [0, T]")
    cs = initial.copy()
    events: list[Event] = []
    samples: list[tuple[float, list[Cluster]]] = [(cs.time, [replace(c) for c in cs.clusters])]
    snapshots: list[tuple[float, ClusterSet]] = []
    if any(abs(t - cs.time) <= 1e-15 for t in snapshot_times):
        snapshots.append((cs.time, cs.copy()))
    next_sample = cs.time + sample_dt
    guard = 0
    max_iterations = int(50 * T / dt_max) + 10_000
    while cs.time < T - 1e-12 and len(cs) > 1:
        guard += 1
        if guard > max_iterations:
            raise RuntimeError("particle run exceeded its iteration budget (stalled?)")
        horizon = min(dt_max, T - cs.time)
        if pending:
            horizon = min(horizon, pending[0] - cs.time)
        cs, evs = advance(cs, kernel, p, max(horizon, 1e-15), gap_tol)
        events.extend(evs)
        while pending and cs.time >= pending[0] - 1e-12:
            snapshots.append((pending.pop(0), cs.copy()))
        while next_sample <= cs.time + 1e-15 and next_sample <= T:
            samples.append((cs.time, [replace(c) for c in cs.clusters]))
            next_sample += sample_dt
        if len(cs) == 1 and evs:
            c = cs.clusters[0]
            events.append(
                Event(
                    cs.time,
                    "final_collapse",
                    (c.id,),
                    (c.position,),
                    c.m1,
                    c.m2,
                    all_positions=(c.position,),
                )
            )
            break
    while pending:
        snapshots.append((pending.pop(0), cs.copy()))
    samples.append((cs.time, [replace(c) for c in cs.clusters]))
    return ParticleRunResult(events, samples, cs, dt_max, gap_tol, snapshots)
