"""Expression-matrix loading, binarization, cell labeling and the observed distribution."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qscgrn.statevec import ket

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    pass


class DegenerateDataError(ValueError):
    """No cell carries a nonzero label."""


@dataclass
class ExpressionMatrix:
    gene_names: list[str]
    values: np.ndarray  # genes x cells
    cell_ids: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("expression values must be a 2-D genes x cells matrix")
        n, m = self.values.shape
        if len(self.gene_names) != n:
            raise ValueError(f"{len(self.gene_names)} gene names for {n} rows")
        if n < 2:
            raise ValueError(f"need at least 2 genes, got {n}")
        if m < 1:
            raise ValueError("need at least 1 cell")
        if len(set(self.gene_names)) != n:
            raise ValueError("gene names must be unique")

    @property
    def n_genes(self) -> int:
        return self.values.shape[0]

    @property
    def n_cells(self) -> int:
        return self.values.shape[1]

    def subset(self, genes: list[str]) -> "ExpressionMatrix":
        index = {g: i for i, g in enumerate(self.gene_names)}
        missing = [g for g in genes if g not in index]
        if missing:
            raise KeyError(f"genes not in matrix: {', '.join(missing)}")
        rows = [index[g] for g in genes]
        return ExpressionMatrix(list(genes), self.values[rows], self.cell_ids)


@dataclass
class BinarizedMatrix:
    """0/1 matrix with rows g_0..g_{n-1} sorted by decreasing activation ratio."""

    gene_names: list[str]
    bits: np.ndarray
    activation_ratios: np.ndarray = field(init=False)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        self.activation_ratios = self.bits.sum(axis=1) / self.bits.shape[1]

    @property
    def n_genes(self) -> int:
        return self.bits.shape[0]

    @property
    def n_cells(self) -> int:
        return self.bits.shape[1]

    def labels(self) -> np.ndarray:
        """Basis index of each cell: bit k is the state of gene g_k."""
        weights = np.left_shift(1, np.arange(self.n_genes, dtype=np.int64))
        return weights @ self.bits.astype(np.int64)


def _sniff_format(path: Path, fmt: str) -> str:
    if fmt != "auto":
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "tsv"


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_matrix(path, fmt: str = "auto", header: bool | None = None) -> ExpressionMatrix:
    """Read a genes-by-cells matrix; first column holds gene names.

    ``header=None`` treats the first row as cell IDs when its first field is
    empty or any of its value fields is non-numeric.
    """
    path = Path(path)
    fmt = _sniff_format(path, fmt)
    if fmt not in ("csv", "tsv"):
        raise ValueError(f"unknown matrix format {fmt!r}")
    delimiter = "," if fmt == "csv" else "\t"

    genes: list[str] = []
    rows: list[list[float]] = []
    cell_ids = None
    width = None
    seen: dict[str, int] = {}
    first = True
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, rec in enumerate(reader, start=1):
            if not rec or all(not tok.strip() for tok in rec):
                continue
            if first:
                first = False
                is_header = header
                if is_header is None:
                    is_header = not rec[0].strip() or not all(_is_number(t) for t in rec[1:])
                if is_header:
                    cell_ids = [t.strip() for t in rec[1:]]
                    width = len(cell_ids)
                    continue
            name, fields = rec[0].strip(), rec[1:]
            if width is None:
                width = len(fields)
            if len(fields) != width:
                raise ParseError(
                    f"{path}:{lineno}: expected {width} values, found {len(fields)} (ragged row)"
                )
            if name in seen:
                raise ParseError(
                    f"{path}:{lineno}: duplicate gene {name!r} (first seen on line {seen[name]})"
                )
            seen[name] = lineno
            values = []
            for col, tok in enumerate(fields, start=2):
                try:
                    values.append(float(tok))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: non-numeric value {tok!r} in column {col}"
                    ) from None
            genes.append(name)
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    if width == 0:
        raise ParseError(f"{path}: no cell columns")
    try:
        return ExpressionMatrix(genes, np.array(rows), cell_ids)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def binarize(X: ExpressionMatrix) -> BinarizedMatrix:
    bits = (X.values > 0).astype(np.uint8)
    ratios = bits.sum(axis=1) / bits.shape[1]
    # Stable sort keeps input order among ties.
    order = np.argsort(-ratios, kind="stable")
    return BinarizedMatrix([X.gene_names[i] for i in order], bits[order])


def label_counts(Xb: BinarizedMatrix) -> np.ndarray:
    return np.bincount(Xb.labels(), minlength=1 << Xb.n_genes)


def observed_distribution(Xb: BinarizedMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Return (p_obs, raw label counts); p_obs has the all-zeros label removed."""
    counts = label_counts(Xb)
    informative = counts[1:].sum()
    if informative == 0:
        raise DegenerateDataError("every cell has the all-zeros label; nothing to fit")
    p_obs = counts / informative
    p_obs[0] = 0.0
    if counts[0]:
        logger.info("dropped %d of %d cells with the all-zeros label", counts[0], Xb.n_cells)
    return p_obs, counts


def write_binarized(path, Xb: BinarizedMatrix, cell_ids: list[str] | None = None) -> None:
    ids = cell_ids or [f"c{j}" for j in range(Xb.n_cells)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("gene\t" + "\t".join(ids) + "\n")
        for name, row in zip(Xb.gene_names, Xb.bits):
            fh.write(name + "\t" + "\t".join(map(str, row.tolist())) + "\n")


def write_distribution(path, columns: dict[str, np.ndarray]) -> None:
    """CSV with one row per basis state: index, ket, then the given columns."""
    first = next(iter(columns.values()))
    size = len(first)
    n = size.bit_length() - 1
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "ket", *columns])
        for x in range(size):
            w.writerow([x, ket(x, n), *(_fmt(col[x]) for col in columns.values())])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"
