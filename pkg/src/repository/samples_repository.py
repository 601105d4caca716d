import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from src.conf import messages
from src.domain.errors import SampleParseError, ShapeMismatchError
from src.domain.models import SampleSet


def file_digest(path: str | Path) -> str:
    """
    SHA-256 of the exact bytes of a file.
    """
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_text(path: str | Path) -> str:
    """
    Raises:
        SampleParseError: the file is not valid UTF-8
    """
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise SampleParseError(messages.UNDECODABLE_FILE.format(path=path))


class SampleRepository:
    """
    Reads sample points from CSV or JSON files.
    """

    def load_samples(self, path: str | Path, fmt: str = "csv", header: bool = False) -> SampleSet:
        """
        Load one point per CSV row or JSON record.

        Args:
            path (str | Path): input file
            fmt (str): ``csv`` or ``json``
            header (bool): skip the first CSV line

        Returns:
            SampleSet with the file path as source

        Raises:
            SampleParseError: ragged rows, non-numeric cells or unknown format
        """
        text = read_text(path)
        fmt = fmt.lower()
        if fmt == "csv":
            rows = self.parse_csv(text, header=header, source=str(path))
        elif fmt == "json":
            rows = self.parse_json(text)
        else:
            raise SampleParseError(messages.UNSUPPORTED_FORMAT.format(fmt=fmt))
        return SampleSet(points=self._to_array(rows), source=str(path))

    @staticmethod
    def parse_csv(text: str, header: bool = False, source: str = "<text>") -> list[list[str]]:
        try:
            rows = [row for row in csv.reader(io.StringIO(text)) if row and any(c.strip() for c in row)]
        except csv.Error as e:
            raise SampleParseError(messages.MALFORMED_CSV.format(path=source, detail=e))
        return rows[1:] if header else rows

    @staticmethod
    def parse_json(text: str) -> list:
        try:
            records = json.loads(text)
        except json.JSONDecodeError as e:
            raise SampleParseError(str(e))
        if not isinstance(records, list):
            raise SampleParseError(messages.NON_NUMERIC_CELL.format(index=1), index=1)
        return [r if isinstance(r, list) else [r] for r in records]

    @staticmethod
    def _to_array(rows: list) -> np.ndarray:
        if not rows:
            return np.empty((0, 1))
        dim = len(rows[0])
        out = np.empty((len(rows), dim))
        for index, row in enumerate(rows, start=1):
            if len(row) != dim:
                raise SampleParseError(messages.RAGGED_ROWS.format(index=index), index=index)
            for k, cell in enumerate(row):
                if isinstance(cell, bool):
                    raise SampleParseError(messages.NON_NUMERIC_CELL.format(index=index), index=index)
                try:
                    out[index - 1, k] = float(cell.strip() if isinstance(cell, str) else cell)
                except (TypeError, ValueError):
                    raise SampleParseError(
                        messages.NON_NUMERIC_CELL.format(index=index), index=index
                    )
        return out


class EtaTableRepository:
    """
    Reads an n x m evaluation table for plan functionals.
    """

    def load_table(self, path: str | Path, shape: tuple[int, int]) -> np.ndarray:
        rows = SampleRepository.parse_csv(read_text(path), source=str(path))
        table = SampleRepository._to_array(rows)
        if table.shape != tuple(shape):
            raise ShapeMismatchError(
                messages.ETA_SHAPE_MISMATCH.format(actual=table.shape, expected=tuple(shape))
            )
        return table
