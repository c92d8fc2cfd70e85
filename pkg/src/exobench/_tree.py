"""Flatten a KinematicChain into one elementary 1-dof link per coordinate.

Link ``i`` carries coordinate ``q[i]``. A joint's first dof gets the joint
anchor as its offset; later dofs of the same joint sit at the same origin.
Segment inertia is attached to the last link of the segment's joint group,
all intermediate links are massless.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AXES, BASE, KinematicChain

ROTATION, TRANSLATION = 0, 1


@dataclass(frozen=True)
class Tree:
    n: int
    parent: np.ndarray  # int64, -1 = world
    offset: np.ndarray  # (n, 3)
    axis: np.ndarray  # int64 0/1/2
    kind: np.ndarray  # int64 ROTATION/TRANSLATION
    order: np.ndarray  # topological order of links
    mass: np.ndarray  # (n,)
    com: np.ndarray  # (n, 3)
    inertia: np.ndarray  # (n, 3, 3)
    segment_link: dict  # segment name -> link index
    ancestors: np.ndarray  # (n, n) bool, ancestors[i, j]: q[j] moves link i

    @property
    def topology(self):
        return self.parent, self.offset, self.axis, self.kind, self.order

    @property
    def inertials(self):
        return self.mass, self.com, self.inertia


def build_tree(chain: KinematicChain) -> Tree:
    n = chain.n_coords
    parent = np.full(n, -1, dtype=np.int64)
    offset = np.zeros((n, 3))
    axis = np.zeros(n, dtype=np.int64)
    kind = np.zeros(n, dtype=np.int64)
    order: list[int] = []
    segment_link: dict[str, int] = {}

    for joint in chain.joints:
        if joint.child in segment_link:
            # continuation joint (e.g. virtual-CoR after RU)
            prev = segment_link[joint.child]
        elif joint.parent == BASE:
            prev = -1
        else:
            prev = segment_link[joint.parent]
        for k, dof in enumerate(joint.dofs):
            i = dof.q - 1
            parent[i] = prev
            if k == 0:
                offset[i] = joint.anchor
            axis[i] = AXES.index(dof.axis)
            kind[i] = ROTATION if dof.kind == "rotation" else TRANSLATION
            order.append(i)
            prev = i
        segment_link[joint.child] = prev

    mass = np.zeros(n)
    com = np.zeros((n, 3))
    inertia = np.zeros((n, 3, 3))
    for seg in chain.segments:
        link = segment_link[seg.name]
        mass[link] = seg.mass
        com[link] = seg.com
        inertia[link] = seg.inertia_matrix

    ancestors = np.zeros((n, n), dtype=bool)
    for i in range(n):
        j = i
        while j >= 0:
            ancestors[i, j] = True
            j = parent[j]

    arrays = [parent, offset, axis, kind, mass, com, inertia, ancestors]
    for a in arrays:
        a.setflags(write=False)
    order_arr = np.asarray(order, dtype=np.int64)
    order_arr.setflags(write=False)
    return Tree(n, parent, offset, axis, kind, order_arr, mass, com, inertia,
                segment_link, ancestors)
