"""Disjoint-set union over hashable keys (path compression + union by size)."""

from __future__ import annotations

from typing import Hashable, Iterable


class UnionFind:
    def __init__(self, keys: Iterable[Hashable] = ()):
        self._parent: dict = {}
        self._size: dict = {}
        for k in keys:
            self.add(k)

    def add(self, key) -> None:
        if key not in self._parent:
            self._parent[key] = key
            self._size[key] = 1

    def find(self, key):
        root = key
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[key] != root:
            self._parent[key], key = root, self._parent[key]
        return root

    def union(self, a, b) -> None:
        self.add(a)
        self.add(b)
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]

    def keys(self):
        return self._parent.keys()

    def components(self) -> list[list]:
        groups: dict = {}
        for k in self._parent:
            groups.setdefault(self.find(k), []).append(k)
        return [sorted(v) for v in groups.values()]
