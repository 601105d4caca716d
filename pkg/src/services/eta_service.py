from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.conf import messages
from src.domain.errors import CoordinateDataError, InvalidEtaSpecError, ShapeMismatchError
from src.repository.samples_repository import EtaTableRepository

ETA_KINDS = ("cost", "indicator", "coord", "table")


@dataclass(frozen=True)
class EtaSpec:
    """
    Evaluation function eta(x, y) for plan and conditional functionals

    Accepted specs: ``cost`` (the cost itself), ``indicator:t`` (1 when
    c(x, y) <= t), ``coord:k`` (the k-th coordinate of y) or the path of an
    n x m CSV table, which only applies to the exact supports it was written for.

    Attributes:
        kind (str): one of ``cost``, ``indicator``, ``coord``, ``table``
        param (float | None): threshold or coordinate index
        path (str | None): CSV path for ``table`` specs
        values (np.ndarray | None): loaded table, once bound
    """

    kind: str
    param: float | None = None
    path: str | None = None
    values: np.ndarray | None = field(default=None, compare=False)

    @property
    def label(self) -> str:
        if self.kind == "table":
            return str(self.path)
        if self.param is None:
            return self.kind
        return f"{self.kind}:{self.param:g}"

    def _coordinate(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y)
        if Y.dtype.kind != "f" or Y.ndim != 2:
            raise CoordinateDataError(messages.MAP_REQUIRES_COORDINATES)
        k = int(self.param)
        if not 0 <= k < Y.shape[1]:
            raise InvalidEtaSpecError(messages.INVALID_ETA_SPEC.format(spec=self.label))
        return Y[:, k]

    def table(self, X: np.ndarray, Y: np.ndarray, cost_values: np.ndarray) -> np.ndarray:
        """
        eta(x_i, y_j) on the product support.

        Args:
            X (np.ndarray): atoms of the first measure
            Y (np.ndarray): atoms of the second measure
            cost_values (np.ndarray): c(x_i, y_j)

        Returns:
            np.ndarray: n x m table
        """
        cost_values = np.asarray(cost_values, dtype=float)
        if self.kind == "cost":
            return cost_values.copy()
        if self.kind == "indicator":
            return (cost_values <= self.param).astype(float)
        if self.kind == "coord":
            return np.broadcast_to(self._coordinate(Y), cost_values.shape).copy()
        return self._load(cost_values.shape)

    def row(self, x, Y: np.ndarray, cost_row: np.ndarray) -> np.ndarray:
        """
        eta(x, y_j) over the atoms of Y for one query point.

        For CSV tables ``x`` must be the row index of a support atom.
        """
        cost_row = np.asarray(cost_row, dtype=float)
        if self.kind == "cost":
            return cost_row.copy()
        if self.kind == "indicator":
            return (cost_row <= self.param).astype(float)
        if self.kind == "coord":
            return self._coordinate(Y).copy()
        if self.values is None:
            raise InvalidEtaSpecError(messages.INVALID_ETA_SPEC.format(spec=self.label))
        return np.asarray(self.values, dtype=float)[int(np.ravel(x)[0])]

    def _load(self, shape: tuple[int, int]) -> np.ndarray:
        if self.values is not None:
            if self.values.shape != tuple(shape):
                raise ShapeMismatchError(
                    messages.ETA_SHAPE_MISMATCH.format(actual=self.values.shape, expected=tuple(shape))
                )
            return np.asarray(self.values, dtype=float)
        return EtaTableRepository().load_table(self.path, shape)

    def bind(self, shape: tuple[int, int]) -> "EtaSpec":
        """
        Load a CSV table once so that ``row`` can address it by atom index.
        """
        if self.kind != "table" or self.values is not None:
            return self
        return EtaSpec("table", path=self.path, values=self._load(shape))


def parse_eta(spec: str | EtaSpec | np.ndarray) -> EtaSpec:
    """
    Parse an eta spec string, or wrap an explicit table.

    Raises:
        InvalidEtaSpecError: malformed spec or missing CSV file
    """
    if isinstance(spec, EtaSpec):
        return spec
    if isinstance(spec, np.ndarray):
        return EtaSpec("table", path="<array>", values=np.asarray(spec, dtype=float))
    text = str(spec).strip()
    if text == "cost":
        return EtaSpec("cost")
    name, sep, raw = text.partition(":")
    if sep and name == "indicator":
        try:
            threshold = float(raw)
        except ValueError:
            raise InvalidEtaSpecError(messages.INVALID_ETA_SPEC.format(spec=text))
        if np.isfinite(threshold):
            return EtaSpec("indicator", threshold)
    if sep and name == "coord" and raw.isdigit():
        return EtaSpec("coord", float(int(raw)))
    if text and Path(text).is_file():
        return EtaSpec("table", path=text)
    raise InvalidEtaSpecError(messages.INVALID_ETA_SPEC.format(spec=text))
