"""Dataset container and the plain-text file formats shared by the CLI.

Dataset CSV: one header line `dim=<p>,kind=<continuous|binary>,n=<count>`,
then one instance per row as comma-separated decimals. Truth sidecar: one
zero-based index per line, the permutation that restores generation order.
Order files: a `# log_likelihood = <value>` comment followed by one index
per line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transition import KINDS, check_binary


class DataFormatError(ValueError):
    """A data, truth, or order file failed to parse."""


@dataclass
class Dataset:
    """Unordered instances of one kind, optionally with a ground-truth order."""

    values: np.ndarray
    kind: str
    true_order: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D (n x p) array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "binary":
            check_binary(self.values)
        if self.true_order is not None:
            order = np.asarray(self.true_order, dtype=int)
            if not np.array_equal(np.sort(order), np.arange(len(self.values))):
                raise ValueError("true_order is not a permutation of the instances")
            self.true_order = order

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def write_dataset_csv(path, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={dataset.dim},kind={dataset.kind},n={dataset.n}\n")
        for row in dataset.values:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_dataset_csv(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    header = lines[0]
    fields = {}
    for part in header.split(","):
        if "=" not in part:
            raise DataFormatError(f"{path}:1: missing dataset header (dim=,kind=,n=)")
        key, _, val = part.partition("=")
        fields[key.strip()] = val.strip()
    missing = {"dim", "kind", "n"} - fields.keys()
    if missing:
        raise DataFormatError(f"{path}:1: header lacks {sorted(missing)}")
    try:
        dim = int(fields["dim"])
        count = int(fields["n"])
    except ValueError as exc:
        raise DataFormatError(f"{path}:1: bad header numbers ({exc})") from None
    kind = fields["kind"]
    if kind not in KINDS:
        raise DataFormatError(f"{path}:1: unknown kind {kind!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != dim:
            raise DataFormatError(f"{path}:{lineno}: expected {dim} values, got {len(parts)}")
        try:
            rows.append([float(x) for x in parts])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric value") from None
    if len(rows) != count:
        raise DataFormatError(f"{path}: header says n={count} but found {len(rows)} rows")
    values = np.array(rows, dtype=float) if rows else np.zeros((0, dim))
    try:
        return Dataset(values, kind)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def write_truth(path, order: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for idx in np.asarray(order, dtype=int):
            fh.write(f"{int(idx)}\n")


def read_truth(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh.read().splitlines() if ln.strip()]
    try:
        order = np.array([int(ln) for ln in lines], dtype=int)
    except ValueError:
        raise DataFormatError(f"{path}: truth file must hold one integer per line") from None
    if not np.array_equal(np.sort(order), np.arange(len(order))):
        raise DataFormatError(f"{path}: indices do not form a permutation")
    return order


def write_order(path, order: np.ndarray, log_likelihood: float) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# log_likelihood = {repr(float(log_likelihood))}\n")
        for idx in np.asarray(order, dtype=int):
            fh.write(f"{int(idx)}\n")


def read_order(path):
    """Returns (order, log_likelihood or None)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    ll = None
    indices = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            if "log_likelihood" in text and "=" in text:
                try:
                    ll = float(text.split("=", 1)[1])
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: bad log_likelihood") from None
            continue
        try:
            indices.append(int(text))
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: expected an index") from None
    order = np.array(indices, dtype=int)
    if not np.array_equal(np.sort(order), np.arange(len(order))):
        raise DataFormatError(f"{path}: indices do not form a permutation")
    return order, ll
