"""Expert-specialization analysis.

Jaccard overlap of retained expert sets, per-language importance vectors,
agglomerative clustering with dendrogram output (Newick and SVG), and the
length-ratio diagnostic for over-generation.
"""

from __future__ import annotations

import html
import itertools
import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .mask import PruningMask
from .pruning import compute_metric, normalize_per_layer
from .stats import ExpertStats, finalize


# Jaccard similarity

@dataclass(frozen=True)
class ExpertSet:
    side: str
    experts: frozenset  # of (layer_id, expert_id)

    @classmethod
    def from_mask(cls, mask: PruningMask, side: str) -> "ExpertSet":
        layers = [lid for lid, s in mask.sides.items() if s == side]
        if not layers:
            raise ValueError(f"mask has no {side} layers")
        return cls(side, frozenset((lid, e) for lid in layers for e in mask.layers[lid]))


def jaccard(a: ExpertSet, b: ExpertSet) -> float:
    if a.side != b.side:
        raise ValueError(f"cannot compare {a.side} and {b.side} expert sets")
    union = a.experts | b.experts
    if not union:
        return 1.0
    return len(a.experts & b.experts) / len(union)


def similarity_matrix(sets: Mapping[str, ExpertSet]) -> tuple[list[str], np.ndarray]:
    labels = list(sets)
    mat = np.array([[jaccard(sets[a], sets[b]) for b in labels] for a in labels])
    return labels, mat


def similarity_tsv(labels: Sequence[str], matrix: np.ndarray, digits: int = 2) -> str:
    lines = ["\t".join(["", *labels])]
    for label, row in zip(labels, matrix):
        lines.append("\t".join([label, *(f"{v:.{digits}f}" for v in row)]))
    return "\n".join(lines) + "\n"


# importance vectors

@dataclass(frozen=True)
class ImportanceVector:
    language: str
    side: str
    values: np.ndarray


def importance_vector(stats: ExpertStats, language: str, side: str) -> ImportanceVector:
    """Per-layer normalized importance, concatenated by ascending layer then expert id."""
    final = finalize(stats, key=f"{side} {language}")
    order = np.argsort(final.layer_ids, kind="stable")
    table = normalize_per_layer(compute_metric(final, "importance"))
    return ImportanceVector(language, side, table.values[order].ravel())


def build_importance_vectors(lang_stats: Mapping[str, ExpertStats], side: str,
                             languages: Sequence[str] | None = None) -> list[ImportanceVector]:
    """``lang_stats`` maps a language code to its language-specific stats on ``side``."""
    languages = sorted(lang_stats) if languages is None else list(languages)
    missing = [l for l in languages if l not in lang_stats]
    if missing:
        raise ValueError(f"no {side} statistics for language(s) {missing}")
    return [importance_vector(lang_stats[l], l, side) for l in languages]


# agglomerative clustering

@dataclass(frozen=True)
class Tree:
    """Binary merge tree. Leaves have a label and height 0."""

    height: float
    label: str | None = None
    left: "Tree | None" = None
    right: "Tree | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.label]
        return self.left.leaves() + self.right.leaves()

    def min_label(self) -> str:
        return min(self.leaves())

    def topology(self):
        """Order-independent nested frozenset form, for comparisons."""
        if self.is_leaf:
            return self.label
        return frozenset([self.left.topology(), self.right.topology()])

    def merges(self) -> list[tuple[frozenset, frozenset, float]]:
        """(left leaves, right leaves, height) for every internal node, bottom-up."""
        if self.is_leaf:
            return []
        return self.left.merges() + self.right.merges() + [
            (frozenset(self.left.leaves()), frozenset(self.right.leaves()), self.height)
        ]


def _join(a: Tree, b: Tree, height: float) -> Tree:
    if b.min_label() < a.min_label():
        a, b = b, a
    return Tree(height, None, a, b)


def euclidean_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff ** 2).sum(-1))


def hcluster(vectors: Sequence[ImportanceVector] | Mapping[str, Sequence[float]], linkage: str = "average") -> Tree:
    """Agglomerative clustering with Euclidean distance.

    ``linkage`` is "average" (UPGMA), "single" or "complete". Merge height is
    the linkage distance. Equal distances are resolved by the pair of
    smallest leaf labels, so the tree does not depend on input order.
    """
    if isinstance(vectors, Mapping):
        labels = list(vectors)
        data = [np.asarray(v, dtype=np.float64) for v in vectors.values()]
    else:
        labels = [v.language for v in vectors]
        data = [np.asarray(v.values, dtype=np.float64) for v in vectors]
    if len(data) < 2:
        raise ValueError("need at least two vectors to cluster")
    if len({len(d) for d in data}) != 1:
        raise ValueError("all vectors must have the same length")
    if len(set(labels)) != len(labels):
        raise ValueError("labels must be unique")
    if linkage not in ("average", "single", "complete"):
        raise ValueError(f"unknown linkage {linkage!r}")
    dist = euclidean_distances(np.vstack(data))
    clusters: dict[int, Tree] = {i: Tree(0.0, labels[i]) for i in range(len(labels))}
    sizes = {i: 1 for i in clusters}
    d = {(i, j): dist[i, j] for i, j in itertools.combinations(range(len(labels)), 2)}
    next_id = len(labels)
    while len(clusters) > 1:
        (i, j), h = min(d.items(), key=lambda kv: (kv[1], *sorted([clusters[kv[0][0]].min_label(),
                                                                     clusters[kv[0][1]].min_label()])))
        merged = _join(clusters[i], clusters[j], float(h))
        new = {}
        for k in clusters:
            if k in (i, j):
                continue
            dik = d[(min(i, k), max(i, k))]
            djk = d[(min(j, k), max(j, k))]
            if linkage == "average":
                new[k] = (sizes[i] * dik + sizes[j] * djk) / (sizes[i] + sizes[j])
            elif linkage == "single":
                new[k] = min(dik, djk)
            else:
                new[k] = max(dik, djk)
        d = {key: v for key, v in d.items() if i not in key and j not in key}
        for k, v in new.items():
            d[(k, next_id)] = v
        clusters[next_id] = merged
        sizes[next_id] = sizes.pop(i) + sizes.pop(j)
        del clusters[i], clusters[j]
        next_id += 1
    return next(iter(clusters.values()))


# dendrogram output

def _num(x: float) -> str:
    # shortest repr that parses back to the same float, "1" rather than "1.0"
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def _newick_label(label: str) -> str:
    if re.search(r"[\s():;,\[\]']", label):
        return "'" + label.replace("'", "''") + "'"
    return label


def to_newick(tree: Tree) -> str:
    """Newick with branch lengths; a node at merge height h sits at depth h/2."""

    def rec(node: Tree, parent_height: float) -> str:
        length = _num((parent_height - node.height) / 2)
        if node.is_leaf:
            return f"{_newick_label(node.label)}:{length}"
        return f"({rec(node.left, node.height)},{rec(node.right, node.height)}):{length}"

    if tree.is_leaf:
        return f"{_newick_label(tree.label)};"
    return f"({rec(tree.left, tree.height)},{rec(tree.right, tree.height)});"


_NEWICK_TOKEN = re.compile(r"'(?:[^']|'')*'|[(),:;]|[^(),:;'\s]+")


def parse_newick(text: str) -> Tree:
    """Inverse of :func:`to_newick` (heights recovered from branch lengths)."""
    tokens = _NEWICK_TOKEN.findall(text.strip())
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take(expected=None):
        nonlocal pos
        tok = tokens[pos]
        if expected is not None and tok != expected:
            raise ValueError(f"expected {expected!r} at token {pos}, got {tok!r}")
        pos += 1
        return tok

    def node():
        # returns (subtree with heights relative to its own leaves, branch length)
        if peek() == "(":
            take("(")
            children = [node()]
            while peek() == ",":
                take(",")
                children.append(node())
            take(")")
            if len(children) != 2:
                raise ValueError("only binary trees are supported")
            (a, la), (b, lb) = children
            height = 2 * (a.height / 2 + la)
            if not math.isclose(height, 2 * (b.height / 2 + lb), rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError("tree is not ultrametric")
            sub = Tree(height, None, a, b)
        else:
            label = take()
            if label.startswith("'"):
                label = label[1:-1].replace("''", "'")
            sub = Tree(0.0, label)
        length = 0.0
        if peek() == ":":
            take(":")
            length = float(take())
        return sub, length

    tree, _ = node()
    take(";")
    return tree


def to_svg(tree: Tree, groups: Mapping[str, str] | None = None, width: int = 480,
           row_height: int = 20, palette: Sequence[str] | None = None) -> str:
    """Horizontal dendrogram; leaves on the right, one row per leaf.

    ``groups`` maps leaf label to a group name; each group gets a CSS class
    ``group-<n>`` and a colour.
    """
    palette = palette or ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"]
    leaves = tree.leaves()
    group_names = sorted(set(groups.values())) if groups else []
    group_index = {g: i for i, g in enumerate(group_names)}
    margin, label_w = 10, 120
    plot_w = width - 2 * margin - label_w
    top = tree.height or 1.0
    height = len(leaves) * row_height + 2 * margin

    def x_of(h):
        return margin + plot_w * (1 - h / top)

    rows = {label: margin + (i + 0.5) * row_height for i, label in enumerate(leaves)}
    lines, texts = [], []

    def draw(node: Tree) -> float:
        if node.is_leaf:
            y = rows[node.label]
            cls = "leaf"
            if groups and node.label in groups:
                cls += f" group-{group_index[groups[node.label]]}"
            texts.append(f'<text class="{cls}" x="{x_of(0) + 4:.1f}" y="{y + 4:.1f}">{html.escape(node.label)}</text>')
            return y
        ya, yb = draw(node.left), draw(node.right)
        x = x_of(node.height)
        for child, yc in ((node.left, ya), (node.right, yb)):
            lines.append(f'<line x1="{x:.1f}" y1="{yc:.1f}" x2="{x_of(child.height):.1f}" y2="{yc:.1f}"/>')
        lines.append(f'<line x1="{x:.1f}" y1="{ya:.1f}" x2="{x:.1f}" y2="{yb:.1f}"/>')
        return (ya + yb) / 2

    draw(tree)
    style = ["line { stroke: #333; stroke-width: 1.2; }", "text { font: 12px sans-serif; }"]
    style += [f".group-{i} {{ fill: {palette[i % len(palette)]}; }}" for i in range(len(group_names))]
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        "<style>" + " ".join(style) + "</style>",
        *lines,
        *texts,
        "</svg>",
    ]) + "\n"


def emit_dendrogram(tree: Tree, groups: Mapping[str, str] | None = None) -> tuple[str, str]:
    """(Newick string, SVG document)."""
    return to_newick(tree), to_svg(tree, groups)


# over-generation diagnostic

@dataclass(frozen=True)
class LengthRatioReport:
    ratios: dict[tuple[str, str], float]
    mean: float
    std: float


def length_ratio(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    ref_len = sum(len(r.split()) for r in references)
    if ref_len == 0:
        raise ValueError("reference side is empty")
    return sum(len(h.split()) for h in hypotheses) / ref_len


def length_ratio_report(per_direction: Mapping[tuple[str, str], tuple[Sequence[str], Sequence[str]]]) -> LengthRatioReport:
    """``per_direction`` maps (src, tgt) to (hypotheses, references)."""
    if not per_direction:
        raise ValueError("no directions given")
    ratios = {d: length_ratio(h, r) for d, (h, r) in per_direction.items()}
    vals = np.array(list(ratios.values()))
    return LengthRatioReport(ratios, float(vals.mean()), float(vals.std()))
