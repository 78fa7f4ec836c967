"""Recursive partition of the encoding space by dominance-number labels.

A region tree splits observed samples into good/bad halves with a linear
separator fit to dominance-number median labels, then descends by a UCB rule
toward the region most likely to contain the Pareto frontier. New candidate
encodings are drawn by rejection sampling inside the selected region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .moo import HvConfig, SampleSet, dominance_numbers, hypervolume
from .surrogate import ArchSpace


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 4
    min_leaf_samples: int = 8
    cp: float = 0.1           # exploration constant for region selection
    max_epochs: int = 100     # separator training cap

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.cp < 0:
            raise ValueError("cp must be >= 0")


@dataclass
class RegionNode:
    depth: int
    member_ids: tuple
    node_hv: float
    # linear separator over the real-relaxed encoding; None for leaves
    boundary: tuple[np.ndarray, float] | None = None
    children: tuple["RegionNode", "RegionNode"] | None = None  # (good, bad)

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def side(self, encoding) -> bool:
        """True if the encoding falls on the good side of the boundary."""
        w, b = self.boundary
        return float(np.dot(w, np.asarray(encoding, dtype=float)) + b) >= 0.0


@dataclass
class PartitionTree:
    root: RegionNode
    space: ArchSpace
    config: TreeConfig

    def route(self, encoding) -> RegionNode:
        """Descend boundaries from the root; every encoding lands in one leaf."""
        node = self.root
        while not node.is_leaf:
            good, bad = node.children
            node = good if node.side(encoding) else bad
        return node

    def leaves(self) -> list[RegionNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(node.children)
        return out


def _fit_separator(
    features: np.ndarray, labels: np.ndarray, max_epochs: int
) -> tuple[np.ndarray, float]:
    """Batch perceptron on +-1 labels; deterministic, converges when separable."""
    n, d = features.shape
    scale = max(float(np.abs(features).max()), 1.0)
    x = features / scale
    w = np.zeros(d)
    b = 0.0
    lr = 1.0 / n
    for _ in range(max_epochs):
        margins = labels * (x @ w + b)
        wrong = margins <= 0
        if not wrong.any():
            break
        w = w + lr * (labels[wrong, None] * x[wrong]).sum(axis=0)
        b = b + lr * labels[wrong].sum()
    return w / scale, float(b)


def _build_node(
    depth: int,
    ids: np.ndarray,
    encodings: np.ndarray,
    counts: np.ndarray,
    objectives: np.ndarray,
    hv_cfg: HvConfig,
    cfg: TreeConfig,
) -> RegionNode:
    member_set = SampleSet(ids=tuple(ids.tolist()), objectives=objectives)
    node_hv = hypervolume(member_set, hv_cfg)
    node = RegionNode(depth=depth, member_ids=tuple(ids.tolist()), node_hv=node_hv)
    if depth >= cfg.max_depth or ids.size < 2 * cfg.min_leaf_samples:
        return node

    median = np.median(counts)
    labels = np.where(counts <= median, 1.0, -1.0)
    if np.all(labels == labels[0]):
        return node  # single-class stop: all members equally (non-)dominated

    w, b = _fit_separator(encodings.astype(float), labels, cfg.max_epochs)
    side = encodings.astype(float) @ w + b >= 0.0
    if side.all() or not side.any():
        return node  # degenerate separator, keep as leaf

    good = _build_node(depth + 1, ids[side], encodings[side], counts[side],
                       objectives[side], hv_cfg, cfg)
    bad = _build_node(depth + 1, ids[~side], encodings[~side], counts[~side],
                      objectives[~side], hv_cfg, cfg)
    node.boundary = (w, b)
    node.children = (good, bad)
    return node


def build_tree(
    samples: SampleSet,
    encodings: np.ndarray,
    space: ArchSpace,
    hv_cfg: HvConfig,
    cfg: TreeConfig | None = None,
) -> PartitionTree:
    """Build the region tree from observed samples and their encodings.

    ``encodings`` is (n, genes), row-aligned with ``samples``. At each split,
    members at or below the median dominance number are labeled good; a
    linear separator fit to those labels routes members (and later, fresh
    candidates) to the children.
    """
    cfg = cfg or TreeConfig()
    if len(samples) < 2 * cfg.min_leaf_samples:
        raise ValueError(
            f"need >= {2 * cfg.min_leaf_samples} samples to split, got {len(samples)}"
        )
    encodings = np.asarray(encodings)
    if encodings.shape != (len(samples), space.genes):
        raise ValueError(f"encodings shape {encodings.shape} != ({len(samples)}, {space.genes})")
    counts = dominance_numbers(samples)
    ids = np.array(samples.ids, dtype=object)
    root = _build_node(0, ids, encodings, counts, samples.objectives, hv_cfg, cfg)
    return PartitionTree(root=root, space=space, config=cfg)


def select_region(tree: PartitionTree) -> RegionNode:
    """UCB descent from the root to the most promising leaf.

    Child value is its hypervolume normalized by the root's, plus an
    exploration bonus shrinking with member count; ties go to the good child.
    """
    root_hv = tree.root.node_hv if tree.root.node_hv > 0 else 1.0
    node = tree.root
    while not node.is_leaf:
        node = select_region_step(node, root_hv, tree.config.cp)
    return node


def sample_in_region(
    tree: PartitionTree,
    leaf: RegionNode,
    count: int,
    rng: np.random.Generator,
    max_rejections: int = 10_000,
) -> np.ndarray:
    """Draw ``count`` encodings routed to the target leaf.

    Uniform rejection sampling first; after ``max_rejections`` failures per
    accepted sample, falls back to single-gene mutations of member encodings,
    and finally to member encodings verbatim, so progress is guaranteed.
    """
    if count == 0:
        return np.empty((0, tree.space.genes), dtype=int)
    out = []
    # member encodings route to the leaf by construction; used as fallbacks
    members = [tree.space.encoding_of(i) if isinstance(i, (int, np.integer)) else None
               for i in leaf.member_ids]
    members = [m for m in members if m is not None]
    while len(out) < count:
        accepted = None
        for _ in range(max_rejections):
            cand = tree.space.random_encoding(rng)
            if tree.route(cand) is leaf:
                accepted = cand
                break
        if accepted is None and members:
            for _ in range(max_rejections):
                base = members[rng.integers(len(members))].copy()
                pos = rng.integers(tree.space.genes)
                base[pos] = rng.integers(tree.space.arity)
                if tree.route(base) is leaf:
                    accepted = base
                    break
        if accepted is None:
            if not members:
                raise RuntimeError("cannot sample from an empty, unreachable region")
            accepted = members[rng.integers(len(members))].copy()
        out.append(accepted)
    return np.array(out, dtype=int)


def tree_summary(tree: PartitionTree) -> dict:
    """JSON-ready digest: depth, leaf sizes, and the selected path."""
    leaves = tree.leaves()
    path = []
    node = tree.root
    root_hv = tree.root.node_hv if tree.root.node_hv > 0 else 1.0
    while not node.is_leaf:
        good, _ = node.children
        chosen = select_region_step(node, root_hv, tree.config.cp)
        path.append("good" if chosen is good else "bad")
        node = chosen
    return {
        "depth": max(leaf.depth for leaf in leaves),
        "num_leaves": len(leaves),
        "leaf_sizes": sorted(len(leaf.member_ids) for leaf in leaves),
        "selected_path": path,
        "root_hv": tree.root.node_hv,
    }


def select_region_step(node: RegionNode, root_hv: float, cp: float) -> RegionNode:
    """One UCB descent step; good child wins ties (it is scored first)."""
    n_parent = max(len(node.member_ids), 1)
    best, best_score = None, -math.inf
    for child in node.children:
        n_child = max(len(child.member_ids), 1)
        score = child.node_hv / root_hv + 2.0 * cp * math.sqrt(2.0 * math.log(n_parent) / n_child)
        if score > best_score:
            best, best_score = child, score
    return best
