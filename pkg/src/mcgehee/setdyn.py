"""Finite-sample set dynamics: Hausdorff distance, superior limits, chains.

Compact sets are represented by point clouds, so every topological
statement becomes an ``eps``-quantified one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.spatial import cKDTree

__all__ = [
    "PointCloud",
    "EmptyCloudError",
    "hausdorff_distance",
    "limsup_sets",
    "epsilon_chain_exists",
    "chain_recurrent_points",
]


class EmptyCloudError(ValueError):
    """Hausdorff distance is only defined between non-empty sets."""


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def mean_spacing(self) -> float:
        """Mean nearest-neighbour distance (0 for a single point)."""
        if len(self) < 2:
            return 0.0
        d, _ = self.tree().query(self.points, k=2)
        return float(np.mean(d[:, 1]))

    def union(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(np.vstack([self.points, other.points]))

    @classmethod
    def from_trajectory(cls, traj, columns: slice | None = None) -> "PointCloud":
        return cls(traj.states if columns is None else traj.states[:, columns])

    def to_csv(self, path_or_buf, header: Sequence[str] | None = None) -> None:
        head = ",".join(header) if header else ",".join(f"c_{i + 1}" for i in range(self.dim))
        np.savetxt(path_or_buf, self.points, delimiter=",", header=head, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "PointCloud":
        return cls(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))


def _directed(a: PointCloud, b: PointCloud) -> float:
    d, _ = b.tree().query(a.points)
    return float(np.max(d))


def hausdorff_distance(c1: PointCloud, c2: PointCloud) -> float:
    if len(c1) == 0 or len(c2) == 0:
        raise EmptyCloudError("Hausdorff distance needs non-empty clouds")
    if c1.dim != c2.dim:
        raise ValueError("clouds live in different dimensions")
    return max(_directed(c1, c2), _directed(c2, c1))


def limsup_sets(seq: Sequence[PointCloud], eps: float | None = None, min_tail: int | None = None) -> PointCloud:
    """Superior limit of a finite sequence of clouds.

    A point of the total union survives when it lies within ``eps`` of
    every tail union ``A_k u A_(k+1) u ...`` holding at least ``min_tail``
    clouds (default half the sequence), i.e. the intersection of the
    ``eps``-fattened tails.  Without the floor the last tail is a single
    cloud and recurrent points seen only at other indices would be lost.
    ``eps`` defaults to twice the mean nearest-neighbour spacing of the
    union.
    """
    if not seq:
        raise ValueError("empty sequence")
    if min_tail is None:
        min_tail = max(1, len(seq) // 2)
    union = PointCloud(np.vstack([c.points for c in seq]))
    if eps is None:
        eps = 2 * union.mean_spacing()
    keep = np.ones(len(union), dtype=bool)
    for k in range(len(seq) - min_tail + 1):
        tail = PointCloud(np.vstack([c.points for c in seq[k:]]))
        d, _ = tail.tree().query(union.points[keep])
        idx = np.flatnonzero(keep)
        keep[idx[d > eps]] = False
    return PointCloud(union.points[keep])


def _hop_graph(images: np.ndarray, targets: np.ndarray, eps: float):
    tree = cKDTree(targets)
    rows, cols = [], []
    for i, nb in enumerate(tree.query_ball_point(images, r=eps * (1 - 1e-15))):
        rows.extend([i] * len(nb))
        cols.extend(nb)
    return rows, cols


def epsilon_chain_exists(
    flow_map: Callable[[np.ndarray], np.ndarray],
    start,
    end,
    eps: float,
    cloud: PointCloud,
    max_hops: int | None = None,
) -> bool:
    """Is there an ``eps``-chain from ``start`` to ``end`` through cloud points?

    A hop ``a -> b`` is allowed when ``|flow_map(a) - b| < eps``; the
    intermediate points are restricted to ``cloud``.
    """
    start = np.atleast_1d(np.asarray(start, dtype=float))
    end = np.atleast_1d(np.asarray(end, dtype=float))
    nodes = np.vstack([start[None, :], cloud.points, end[None, :]])
    N = len(nodes)
    images = np.array([np.atleast_1d(flow_map(p)) for p in nodes[:-1]])
    rows, cols = _hop_graph(images, nodes[1:], eps)
    cols = [c + 1 for c in cols]
    A = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N)).tocsr()
    order, pred = breadth_first_order(A, 0, directed=True, return_predecessors=True)
    if N - 1 not in set(order.tolist()):
        return False
    if max_hops is None:
        return True
    hops, k = 0, N - 1
    while k != 0:
        k = pred[k]
        hops += 1
    return hops <= max_hops


def chain_recurrent_points(flow_map: Callable[[np.ndarray], np.ndarray], cloud: PointCloud, eps: float) -> np.ndarray:
    """Mask of cloud points admitting an ``eps``-chain to themselves within the cloud."""
    P = cloud.points
    images = np.array([np.atleast_1d(flow_map(p)) for p in P])
    rows, cols = _hop_graph(images, P, eps)
    N = len(P)
    A = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N)).tocsr()
    _, labels = connected_components(A, directed=True, connection="strong")
    sizes = np.bincount(labels)
    self_loop = np.zeros(N, dtype=bool)
    r = np.asarray(rows)
    c = np.asarray(cols)
    self_loop[r[r == c]] = True
    return (sizes[labels] > 1) | self_loop
