"""Skeleton graph used by the pose pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# 13-joint human tree: head, neck, shoulders/elbows/wrists (L/R), pelvis,
# hips/knees (L/R).
HUMAN13_NAMES = (
    "head", "neck",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "pelvis",
    "l_hip", "l_knee",
    "r_hip", "r_knee",
)
HUMAN13_EDGES = (
    (0, 1),
    (1, 2), (2, 3), (3, 4),
    (1, 5), (5, 6), (6, 7),
    (1, 8),
    (8, 9), (9, 10),
    (8, 11), (11, 12),
)


@dataclass(frozen=True)
class SkeletonTopology:
    """Connected tree over `joint_count` joints with a nonnegative adjacency.

    `adjacency` includes self-loops so that row normalization keeps each
    joint's own signal.
    """

    joint_count: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = self.adjacency
        if a.shape != (self.joint_count, self.joint_count):
            raise ValueError(f"adjacency shape {a.shape} != J={self.joint_count}")
        if np.any(a < 0):
            raise ValueError("adjacency must be nonnegative")
        if not np.allclose(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if len(self.edges) != self.joint_count - 1:
            raise ValueError("edges must form a tree (J-1 edges)")
        if not self._connected():
            raise ValueError("skeleton graph must be connected")

    def _connected(self) -> bool:
        seen = {0}
        frontier = [0]
        neigh: dict[int, list[int]] = {j: [] for j in range(self.joint_count)}
        for i, j in self.edges:
            neigh[i].append(j)
            neigh[j].append(i)
        while frontier:
            node = frontier.pop()
            for other in neigh[node]:
                if other not in seen:
                    seen.add(other)
                    frontier.append(other)
        return len(seen) == self.joint_count

    def row_normalized(self) -> np.ndarray:
        """Adjacency with each row scaled to sum to 1."""
        return self.adjacency / self.adjacency.sum(axis=1, keepdims=True)


def _adjacency_from_edges(joint_count: int, edges) -> np.ndarray:
    a = np.eye(joint_count)
    for i, j in edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a


def make_topology(joint_count: int = 13) -> SkeletonTopology:
    """The 13-joint human tree, or a balanced binary tree for other sizes."""
    if joint_count == 13:
        edges = HUMAN13_EDGES
    else:
        if joint_count < 2:
            raise ValueError("need at least 2 joints")
        edges = tuple((((i - 1) // 2), i) for i in range(1, joint_count))
    return SkeletonTopology(
        joint_count=joint_count,
        edges=tuple(edges),
        adjacency=_adjacency_from_edges(joint_count, edges),
    )
