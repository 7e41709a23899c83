"""Turning an optimized theta into a signed, directed, weighted gene network."""
from __future__ import annotations

import csv
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_PRUNE = 0.087
EXPORT_FORMATS = ("dot", "graphml", "json", "csv")


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    weight: float  # signed theta value

    @property
    def sign(self) -> str:
        return "up" if self.weight > 0 else "down"


@dataclass
class GeneNetwork:
    gene_names: list[str]
    edges: list[Edge] = field(default_factory=list)
    threshold: float = DEFAULT_PRUNE

    def edge_signs(self) -> dict[tuple[str, str], int]:
        return {(e.source, e.target): (1 if e.weight > 0 else -1) for e in self.edges}

    def adjacency(self) -> np.ndarray:
        index = {g: i for i, g in enumerate(self.gene_names)}
        adj = np.zeros((len(self.gene_names),) * 2)
        for e in self.edges:
            adj[index[e.source], index[e.target]] = e.weight
        return adj


@dataclass
class BaselineGRN:
    edges: dict[tuple[str, str], int]  # (source, target) -> +1 activation / -1 repression

    @property
    def genes(self) -> set[str]:
        return {g for pair in self.edges for g in pair}


def prune(theta, threshold: float = DEFAULT_PRUNE) -> np.ndarray:
    """Zero off-diagonal entries with |theta| < threshold; the diagonal is dropped too.

    Encoder angles live on the diagonal and are not part of the network.
    """
    adj = np.array(theta, dtype=np.float64)
    adj[np.abs(adj) < threshold] = 0.0
    np.fill_diagonal(adj, 0.0)
    return adj


def to_network(adjacency, gene_names, threshold: float = DEFAULT_PRUNE) -> GeneNetwork:
    adj = np.asarray(adjacency, dtype=np.float64)
    n = adj.shape[0]
    edges = [
        Edge(gene_names[k], gene_names[p], float(adj[k, p]))
        for k in range(n) for p in range(n)
        if k != p and adj[k, p] != 0.0
    ]
    return GeneNetwork(list(gene_names), edges, threshold)


def load_baseline(path) -> BaselineGRN:
    """Edge-list CSV: source, target, sign (``+``/``-``; ``activation``/``repression`` also read)."""
    signs = {"+": 1, "-": -1, "−": -1, "activation": 1, "repression": -1,
             "up": 1, "down": -1, "1": 1, "-1": -1}
    edges: dict[tuple[str, str], int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or rec[0].startswith("#"):
                continue
            if lineno == 1 and rec[0].strip().lower() == "source":
                continue
            if len(rec) != 3:
                raise ValueError(f"{path}:{lineno}: expected source,target,sign")
            src, tgt, sign = (t.strip() for t in rec)
            if sign.lower() not in signs:
                raise ValueError(f"{path}:{lineno}: unknown sign {sign!r}")
            edges[(src, tgt)] = signs[sign.lower()]
    return BaselineGRN(edges)


def score_against_baseline(network: GeneNetwork, baseline: BaselineGRN) -> dict:
    """Sign-aware comparison over every ordered pair of distinct genes.

    Each pair lands in exactly one of tp / tn / fp_absent / fn_missed /
    sign_mismatch. A wrong-sign prediction counts against both precision
    and recall (fp = fp_absent + sign_mismatch, fn = fn_missed + sign_mismatch).
    """
    if not baseline.edges:
        raise UndefinedMetricError("baseline GRN has no edges")
    genes = list(network.gene_names)
    unknown = baseline.genes - set(genes)
    if unknown:
        raise ValueError(f"baseline genes missing from the model: {sorted(unknown)}")

    predicted = network.edge_signs()
    detail = dict(tp=0, tn=0, fp_absent=0, fn_missed=0, sign_mismatch=0)
    for src in genes:
        for tgt in genes:
            if src == tgt:
                continue
            truth = baseline.edges.get((src, tgt))
            guess = predicted.get((src, tgt))
            if truth is None and guess is None:
                detail["tn"] += 1
            elif truth is None:
                detail["fp_absent"] += 1
            elif guess is None:
                detail["fn_missed"] += 1
            elif truth == guess:
                detail["tp"] += 1
            else:
                detail["sign_mismatch"] += 1

    pairs = len(genes) * (len(genes) - 1)
    tp = detail["tp"]
    fp = detail["fp_absent"] + detail["sign_mismatch"]
    fn = detail["fn_missed"] + detail["sign_mismatch"]
    precision_defined = tp + fp > 0
    precision = tp / (tp + fp) if precision_defined else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {
        "accuracy": (tp + detail["tn"]) / pairs,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "precision_defined": precision_defined,
        "pairs": pairs,
        "fp": fp,
        "fn": fn,
        "confusion": detail,
    }


# --- export -----------------------------------------------------------------

_COLORS = {"up": "green", "down": "red"}


def _dot(network: GeneNetwork) -> str:
    lines = ["digraph scGRN {"]
    for g in network.gene_names:
        lines.append(f'  "{g}";')
    for e in network.edges:
        lines.append(
            f'  "{e.source}" -> "{e.target}" [weight={e.weight:.17g}, '
            f'color={_COLORS[e.sign]}, penwidth={1 + 4 * abs(e.weight):.6g}, sign={e.sign}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def _graphml(network: GeneNetwork) -> str:
    ns = "http://graphml.graphdrawing.org/xmlns"
    root = ET.Element("graphml", xmlns=ns)
    ET.SubElement(root, "key", id="weight", attrib={"for": "edge", "attr.name": "weight",
                                                    "attr.type": "double"})
    ET.SubElement(root, "key", id="sign", attrib={"for": "edge", "attr.name": "sign",
                                                  "attr.type": "string"})
    graph = ET.SubElement(root, "graph", id="scGRN", edgedefault="directed")
    for g in network.gene_names:
        ET.SubElement(graph, "node", id=g)
    for e in network.edges:
        el = ET.SubElement(graph, "edge", source=e.source, target=e.target)
        ET.SubElement(el, "data", key="weight").text = f"{e.weight:.17g}"
        ET.SubElement(el, "data", key="sign").text = e.sign
    ET.indent(root)
    return ET.tostring(root, encoding="unicode", xml_declaration=True) + "\n"


def _json(network: GeneNetwork) -> str:
    doc = {
        "genes": network.gene_names,
        "threshold": network.threshold,
        "edges": [
            {"source": e.source, "target": e.target, "weight": e.weight, "sign": e.sign}
            for e in network.edges
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def write_matrix_csv(path, matrix, gene_names) -> None:
    """Gene-labelled square matrix; rows are controls, columns targets."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("," + ",".join(gene_names) + "\n")
        for g, row in zip(gene_names, np.asarray(matrix)):
            fh.write(g + "," + ",".join(f"{v:.17g}" for v in row) + "\n")


def export(network: GeneNetwork, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    if fmt == "csv":
        write_matrix_csv(path, network.adjacency(), network.gene_names)
        return path
    writers = {"dot": _dot, "graphml": _graphml, "json": _json}
    if fmt not in writers:
        raise ValueError(f"unknown export format {fmt!r}; choose from {EXPORT_FORMATS}")
    path.write_text(writers[fmt](network), encoding="utf-8")
    return path


def load_network_json(path) -> GeneNetwork:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    edges = [Edge(e["source"], e["target"], float(e["weight"])) for e in doc["edges"]]
    return GeneNetwork(doc["genes"], edges, doc.get("threshold", DEFAULT_PRUNE))
