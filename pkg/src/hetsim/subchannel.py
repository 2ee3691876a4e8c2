"""Subchannel allocation by spectral clustering of the interference graph.

Per band: estimate the worst-case average interference every pair of
connections would exchange if co-channeled, collapse ongoing connections that
are locked to the same subchannel into single vertices, map interference to
a similarity in [0, 1], cluster the Laplacian embedding with k-means, then
repair any clusters that still hold conflicting connections and hand each
cluster a subchannel (ongoing clusters keep their original one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .model import MACRO, OMNI_ANTENNA, NetworkConfig, UserState
from .radio import statistical_loss_mix


class Conflict:
    """Symbolic marker for pairs that must never share a subchannel."""

    _instance: Optional["Conflict"] = None

    def __new__(cls) -> "Conflict":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return "CONFLICT"


CONFLICT = Conflict()


class AllocationInfeasibleError(RuntimeError):
    """No conflict-free subchannel layout exists for the given graph."""


def pairwise_interference_matrix(
    config: NetworkConfig,
    band: str,
    user_ids: Sequence[int],
    users: Mapping[int, UserState],
    serving: Mapping[int, int],
    switch_points: Mapping[int, int],
    ongoing_channels: Mapping[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise co-channel interference (watts) and conflict mask for one band.

    Entry [i, j] is the worst of the eight subslot-weighted co-link and
    cross-link average interference terms under the hypothesis that
    connections i and j share a subchannel; conflicting pairs (same station,
    or ongoing connections locked to different subchannels) are flagged in
    the boolean mask and carry weight 0.
    """
    n = len(user_ids)
    weights = np.zeros((n, n))
    conflict = np.zeros((n, n), dtype=bool)
    if n < 2:
        return weights, conflict

    stations = [config.bs(serving[uid]) for uid in user_ids]
    pos_u = np.array([np.asarray(users[uid].position, dtype=float) for uid in user_ids])
    pos_b = np.array([bs.position_arr for bs in stations])
    carrier = stations[0].carrier_hz

    antennas = [users[uid].antenna if band != MACRO else OMNI_ANTENNA for uid in user_ids]
    g_u = np.array([a.directivity_linear for a in antennas])
    beam_u = np.array([a.main_beam_deg for a in antennas])
    p_u = np.array([users[uid].tx_power_w for uid in user_ids])
    g_b = np.array([bs.antenna.directivity_linear for bs in stations])
    beam_b = np.array([bs.antenna.main_beam_deg for bs in stations])
    p_b = np.array([bs.tx_power_w for bs in stations])
    n_switch = np.array([switch_points[serving[uid]] for uid in user_ids], dtype=float)

    def dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        diff = a[:, None, :] - b[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    d_uu = dist(pos_u, pos_u)
    d_ub = dist(pos_u, pos_b)  # [i, j]: user i to station of j
    d_bb = dist(pos_b, pos_b)
    m_uu = statistical_loss_mix(d_uu, carrier, band, config)
    m_ub = statistical_loss_mix(d_ub, carrier, band, config)
    m_bb = statistical_loss_mix(d_bb, carrier, band, config)

    def in_beam(src: np.ndarray, boresight: np.ndarray, beam_deg: np.ndarray,
                dst: np.ndarray) -> np.ndarray:
        """[i, j]: does dst_j fall in src_i's main beam? Degenerate = aligned."""
        vec = dst[None, :, :] - src[:, None, :]
        v_norm = np.hypot(vec[..., 0], vec[..., 1])
        b_norm = np.hypot(boresight[:, 0], boresight[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = (vec[..., 0] * boresight[:, None, 0]
                   + vec[..., 1] * boresight[:, None, 1]) / (v_norm * b_norm[:, None])
        half = np.cos(np.radians(np.minimum(beam_deg, 360.0) / 2.0))[:, None]
        mask = cos > half + 1e-12  # strict: angle < beam/2
        mask |= beam_deg[:, None] >= 360.0
        mask |= v_norm < 1e-12
        mask |= (b_norm < 1e-12)[:, None]
        return mask

    bo_u = pos_b - pos_u  # user boresight: toward serving station
    bo_b = pos_u - pos_b
    mask_u_u = in_beam(pos_u, bo_u, beam_u, pos_u)
    mask_u_b = in_beam(pos_u, bo_u, beam_u, pos_b)
    mask_b_u = in_beam(pos_b, bo_b, beam_b, pos_u)
    mask_b_b = in_beam(pos_b, bo_b, beam_b, pos_b)

    pair_ub = (g_u[:, None] * mask_u_b) * (g_b[None, :] * mask_b_u.T)  # u_i <-> b_j
    pair_bb = (g_b[:, None] * mask_b_b) * (g_b[None, :] * mask_b_b.T)
    pair_uu = (g_u[:, None] * mask_u_u) * (g_u[None, :] * mask_u_u.T)

    i_ub = p_u[:, None] * pair_ub * m_ub           # user i -> station of j
    i_bu = (p_b[:, None] * pair_ub.T) * m_ub.T     # station of i -> user j
    i_bb = p_b[:, None] * pair_bb * m_bb
    i_uu = p_u[:, None] * pair_uu * m_uu

    n_i = n_switch[:, None]
    n_j = n_switch[None, :]
    dl_overlap = config.n_subslots - np.maximum(n_i, n_j)
    ul_overlap = np.minimum(n_i, n_j)
    cross_ij = np.maximum(0.0, n_j - n_i)
    cross_ji = np.maximum(0.0, n_i - n_j)

    terms = np.stack([
        dl_overlap * i_bu,
        dl_overlap * i_bu.T,
        ul_overlap * i_ub,
        ul_overlap * i_ub.T,
        cross_ij * i_bb,
        cross_ji * i_bb.T,
        cross_ji * i_uu,
        cross_ij * i_uu.T,
    ])
    weights = terms.max(axis=0) / config.n_subslots
    np.fill_diagonal(weights, 0.0)

    bs_ids = np.array([serving[uid] for uid in user_ids])
    conflict = bs_ids[:, None] == bs_ids[None, :]
    locks = np.array([ongoing_channels.get(uid, -1) for uid in user_ids])
    locked = locks >= 0
    conflict |= (locked[:, None] & locked[None, :]
                 & (locks[:, None] != locks[None, :]))
    np.fill_diagonal(conflict, False)
    weights[conflict] = 0.0
    return weights, conflict


def pairwise_interference(
    config: NetworkConfig,
    uid_a: int,
    uid_b: int,
    users: Mapping[int, UserState],
    serving: Mapping[int, int],
    switch_points: Mapping[int, int],
    ongoing_channels: Mapping[int, int],
):
    """Interference between two connections, or CONFLICT when they can never share."""
    band = config.bs(serving[uid_a]).band
    if config.bs(serving[uid_b]).band != band:
        return 0.0  # disjoint spectra never interfere
    weights, conflict = pairwise_interference_matrix(
        config, band, [uid_a, uid_b], users, serving, switch_points, ongoing_channels
    )
    if conflict[0, 1]:
        return CONFLICT
    return float(weights[0, 1])


@dataclass(frozen=True)
class Vertex:
    members: tuple[int, ...]  # user ids, ascending
    ongoing_channel: Optional[int]


@dataclass
class InterferenceGraph:
    band: str
    channel_count: int
    vertices: list[Vertex]
    weights: np.ndarray  # vertex-level pairwise interference, watts
    conflict: np.ndarray  # vertex-level conflicts


def build_interference_graph(
    band: str,
    channel_count: int,
    user_ids: Sequence[int],
    weights: np.ndarray,
    conflict: np.ndarray,
    ongoing_channels: Mapping[int, int],
) -> InterferenceGraph:
    """Collapse same-channel ongoing connections and lift the pair matrices."""
    order = sorted(range(len(user_ids)), key=lambda i: user_ids[i])
    groups: dict[int, list[int]] = {}
    singles: list[int] = []
    for i in order:
        uid = user_ids[i]
        if uid in ongoing_channels:
            groups.setdefault(ongoing_channels[uid], []).append(i)
        else:
            singles.append(i)

    raw_vertices: list[tuple[tuple[int, ...], Optional[int], list[int]]] = []
    for chan, idxs in groups.items():
        raw_vertices.append((tuple(user_ids[i] for i in idxs), chan, idxs))
    for i in singles:
        raw_vertices.append(((user_ids[i],), None, [i]))
    raw_vertices.sort(key=lambda v: v[0][0])

    n = len(raw_vertices)
    v_weights = np.zeros((n, n))
    v_conflict = np.zeros((n, n), dtype=bool)
    for a in range(n):
        for b in range(a + 1, n):
            rows = raw_vertices[a][2]
            cols = raw_vertices[b][2]
            block_w = weights[np.ix_(rows, cols)]
            block_c = conflict[np.ix_(rows, cols)]
            chan_a, chan_b = raw_vertices[a][1], raw_vertices[b][1]
            locked_apart = (chan_a is not None and chan_b is not None
                            and chan_a != chan_b)
            v_weights[a, b] = v_weights[b, a] = float(block_w.sum())
            if block_c.any() or locked_apart:
                v_conflict[a, b] = v_conflict[b, a] = True
                v_weights[a, b] = v_weights[b, a] = 0.0
    vertices = [Vertex(members=m, ongoing_channel=c) for m, c, _ in raw_vertices]
    return InterferenceGraph(band=band, channel_count=channel_count,
                             vertices=vertices, weights=v_weights, conflict=v_conflict)


def build_similarity(graph: InterferenceGraph) -> np.ndarray:
    """Map interference to similarity: conflicting pairs 0, others the smaller
    leave-one-out share of each side's total interference (1 when a side has
    no interference at all)."""
    w = graph.weights
    n = w.shape[0]
    row_sum = w.sum(axis=1)
    ratio = np.ones((n, n))
    has = row_sum > 0.0
    ratio[has, :] = (row_sum[has, None] - w[has, :]) / row_sum[has, None]
    s = np.minimum(ratio, ratio.T)
    s[graph.conflict] = 0.0
    np.fill_diagonal(s, 0.0)
    return s


def laplacian_of(similarity: np.ndarray) -> np.ndarray:
    return np.diag(similarity.sum(axis=1)) - similarity


def spectral_cluster(
    laplacian: np.ndarray,
    k: int,
    rng: np.random.Generator,
    diagnostics: Optional[list] = None,
) -> np.ndarray:
    """Cluster rows of the k smallest-eigenvalue eigenvector matrix with k-means.

    Eigenvectors are sign-canonicalized and ties in eigenvalues are ordered
    lexicographically so repeated runs agree bit for bit.
    """
    n = laplacian.shape[0]
    try:
        vals, vecs = np.linalg.eigh(laplacian)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - numpy rarely fails here
        residual = float(np.abs(laplacian - laplacian.T).max())
        raise RuntimeError(
            f"eigendecomposition failed (asymmetry residual {residual:.3e})"
        ) from exc

    for col in range(vecs.shape[1]):
        nonzero = np.nonzero(np.abs(vecs[:, col]) > 1e-9)[0]
        if nonzero.size and vecs[nonzero[0], col] < 0.0:
            vecs[:, col] = -vecs[:, col]
    tol = 1e-10
    order = sorted(
        range(n),
        key=lambda c: (round(vals[c] / tol) * tol, tuple(np.round(vecs[:, c], 12))),
    )
    vals = vals[order]
    vecs = vecs[:, order]

    if diagnostics is not None:
        residuals = laplacian @ vecs - vecs * vals[None, :]
        diagnostics.append({
            "n_vertices": n,
            "row_sum_max": float(np.abs(laplacian.sum(axis=1)).max()) if n else 0.0,
            "eig_residual_max": float(np.linalg.norm(residuals, axis=0).max()) if n else 0.0,
            "eig_min": float(vals[0]) if n else 0.0,
        })

    return _kmeans(vecs[:, :k], k, rng)


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
            max_iter: int = 100, tol: float = 1e-9) -> np.ndarray:
    """Deterministic k-means: seeded first centroid, farthest-point init,
    lowest-index tie-breaks, empty clusters keep their centroid."""
    n = points.shape[0]
    if k <= 0 or n == 0:
        return np.zeros(n, dtype=int)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[int(rng.integers(n))]
    d_min = np.linalg.norm(points - centroids[0], axis=1) ** 2
    for c in range(1, k):
        centroids[c] = points[int(np.argmax(d_min))]
        d_min = np.minimum(d_min, np.linalg.norm(points - centroids[c], axis=1) ** 2)

    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        shift = 0.0
        for c in range(k):
            sel = labels == c
            if sel.any():
                new = points[sel].mean(axis=0)
                shift = max(shift, float(np.linalg.norm(new - centroids[c])))
                centroids[c] = new
        if shift < tol:
            break
    return labels


def _clusters_of(labels: np.ndarray, k: int) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {c: [] for c in range(k)}
    for v, c in enumerate(labels):
        out[int(c)].append(v)
    return out


def repair_conflicts(labels: np.ndarray, graph: InterferenceGraph, k: int) -> np.ndarray:
    """Move conflicting vertices to conflict-free clusters until none remain.

    Two passes. The first separates channel-locked (ongoing) vertices from one
    another: only locked vertices move and only locks count as conflicts, so
    the locked groups spread over distinct clusters. The second pass moves
    non-locked vertices away from every remaining conflict. Clusters are
    visited largest first; each round relocates the vertex whose departure
    raises the cut weight the most, into the conflict-free cluster that adds
    the least co-channel interference. With per-station user counts within the
    channel budget a target always exists in both passes; running out of
    targets therefore reports a violated precondition.
    """
    labels = labels.copy()
    w = graph.weights
    n = len(graph.vertices)
    locked = np.array([v.ongoing_channel is not None for v in graph.vertices])
    lock_conflict = graph.conflict & locked[:, None] & locked[None, :]

    def run_pass(movable: np.ndarray, conflict: np.ndarray) -> None:
        def conflicted(vertex: int, members: list[int]) -> bool:
            return any(conflict[vertex, o] for o in members if o != vertex)

        while True:
            clusters = _clusters_of(labels, k)
            ordered = sorted(
                clusters.items(),
                key=lambda item: (-len(item[1]), min(item[1]) if item[1] else n),
            )
            picked = None
            for cl, members in ordered:
                if any(movable[v] and conflicted(v, members) for v in members):
                    picked = (cl, members)
                    break
            if picked is None:
                return
            home, members = picked
            movers: list[tuple[float, int, int]] = []  # (-increment, vertex, target)
            for v in members:
                if not (movable[v] and conflicted(v, members)):
                    continue
                best_target = None
                best_cut = math.inf
                for cl in range(k):
                    if cl == home:
                        continue
                    others = clusters[cl]
                    if any(conflict[v, o] for o in others):
                        continue
                    cut = float(sum(w[v, o] for o in others))
                    if cut < best_cut - 1e-15:
                        best_cut = cut
                        best_target = cl
                if best_target is None:
                    raise AllocationInfeasibleError(
                        f"no conflict-free cluster for {graph.vertices[v].members}"
                    )
                stay = float(sum(w[v, o] for o in members
                                 if o != v and not conflict[v, o]))
                movers.append((-(stay - best_cut), v, best_target))
            movers.sort()
            _, vertex, target = movers[0]
            labels[vertex] = target

    run_pass(locked, lock_conflict)
    run_pass(~locked, graph.conflict)
    return labels


def assign_subchannels(labels: np.ndarray, graph: InterferenceGraph) -> dict[int, int]:
    """Give each cluster one subchannel: clusters holding ongoing connections
    keep the original channel, the rest take the remaining channels in index
    order; the map is expanded back through collapsed vertices."""
    clusters = _clusters_of(labels, max(int(labels.max()) + 1 if labels.size else 0,
                                        graph.channel_count))
    assignment: dict[int, int] = {}
    used: set[int] = set()
    pending: list[int] = []
    nonempty = [cl for cl in sorted(clusters) if clusters[cl]]
    for cl in nonempty:
        locks = {graph.vertices[v].ongoing_channel for v in clusters[cl]}
        locks.discard(None)
        if len(locks) > 1:
            raise AllocationInfeasibleError(
                f"cluster {cl} holds connections locked to channels {sorted(locks)}"
            )
        if locks:
            chan = locks.pop()
            if chan in used:
                raise AllocationInfeasibleError(
                    f"ongoing channel {chan} claimed by two clusters"
                )
            used.add(chan)
            for v in clusters[cl]:
                for uid in graph.vertices[v].members:
                    assignment[uid] = chan
        else:
            pending.append(cl)
    remaining = [c for c in range(graph.channel_count) if c not in used]
    if len(pending) > len(remaining):
        raise AllocationInfeasibleError(
            f"{len(pending)} clusters left but only {len(remaining)} free channels"
        )
    for cl, chan in zip(pending, remaining):
        for v in clusters[cl]:
            for uid in graph.vertices[v].members:
                assignment[uid] = chan
    return assignment


def allocate(
    graph: InterferenceGraph,
    rng: np.random.Generator,
    diagnostics: Optional[list] = None,
) -> dict[int, int]:
    """Full per-band pipeline: similarity, spectral embedding, k-means, repair,
    channel assignment. Returns user id -> subchannel."""
    n = len(graph.vertices)
    if n == 0:
        return {}
    k = min(graph.channel_count, n)
    similarity = build_similarity(graph)
    lap = laplacian_of(similarity)
    labels = spectral_cluster(lap, k, rng, diagnostics)
    labels = repair_conflicts(labels, graph, k)
    return assign_subchannels(labels, graph)


def retained_co_channel(weights: np.ndarray, channel_of: Sequence[int]) -> float:
    """Objective value: total interference left between same-channel pairs."""
    chan = np.asarray(channel_of)
    same = chan[:, None] == chan[None, :]
    np.fill_diagonal(same, False)
    return float(weights[same].sum()) / 2.0
