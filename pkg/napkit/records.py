"""Score records: one example with its frozen features, teacher targets and times.

Records are stored as JSONL, one object per line with sorted keys. Feature
matrices are inlined as nested lists; the mask is implied by the length.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from .constants import DERIVED_TARGETS, SPLITS, TARGET_NAMES, record_schema
from .naphead import FeatureSequence
from .utils import read_jsonl, write_jsonl


@dataclass
class ScoreRecord:
    """One example of a scored corpus.

    Attributes
    ----------
    id: str
        Unique within a file.
    split: str
        One of train, validation or test.
    domain: str
        Free-form corpus tag, e.g. "id" or "ood".
    features: np.ndarray
        L x d frozen encoder outputs.
    targets: dict
        Teacher scalars by name, see ``constants.TARGET_NAMES``.
    times: dict
        Synthetic cost of the small model, the large model and the proxy.
    trace: Any
        In-memory generation details (tokens, posteriors). Never serialized.
    """
    id: str
    split: str
    domain: str
    features: np.ndarray
    targets: Dict[str, float] = field(default_factory=dict)
    times: Dict[str, float] = field(default_factory=dict)
    trace: Any = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"record {self.id}: features must be a non-empty L x d matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"record {self.id}: non-finite input")

    @classmethod
    def from_dict(cls, record_dict: dict):
        valid = record_schema.validate(record_dict)
        return cls(**valid)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "split": self.split,
            "domain": self.domain,
            "features": self.features.tolist(),
            "targets": {k: float(v) for k, v in self.targets.items()},
            "times": {k: float(v) for k, v in self.times.items()},
        }

    @property
    def length(self):
        return self.features.shape[0]

    @property
    def feature_sequence(self) -> FeatureSequence:
        return FeatureSequence(self.features)

    def target(self, name: str) -> float:
        """Look up a stored or derived (large minus small) target."""
        if name in DERIVED_TARGETS:
            large, small = DERIVED_TARGETS[name]
            return self.target(large) - self.target(small)
        if name not in TARGET_NAMES:
            raise ValueError(
                f"Unknown target {name!r}. Valid targets: "
                f"{TARGET_NAMES + list(DERIVED_TARGETS)}")
        if name not in self.targets:
            raise ValueError(f"target {name!r} is missing from record {self.id}")
        return float(self.targets[name])


def read_records(input_file: Union[str, Path]) -> List[ScoreRecord]:
    records = [ScoreRecord.from_dict(row) for row in read_jsonl(input_file)]
    seen = set()
    for record in records:
        if record.id in seen:
            raise ValueError(f"duplicate id {record.id!r} in {input_file}")
        seen.add(record.id)
    logging.info("Read %s records from %s", len(records), input_file)
    return records


def write_records(output_file: Union[str, Path], records: List[ScoreRecord]):
    write_jsonl(output_file, (record.to_dict() for record in records))


def split_records(records: List[ScoreRecord]) -> Dict[str, List[ScoreRecord]]:
    """Group records by split tag, keeping input order within each split."""
    splits = {}
    for record in records:
        splits.setdefault(record.split, []).append(record)
    return splits


def stack_features(records: List[ScoreRecord]) -> Tuple[np.ndarray, np.ndarray]:
    """Pad the feature sequences to a B x L_max x d batch and its validity mask."""
    if not records:
        raise ValueError("no records to stack")
    widths = {r.features.shape[1] for r in records}
    if len(widths) != 1:
        raise ValueError(f"dimension mismatch: records have feature widths {sorted(widths)}")
    max_len = max(r.length for r in records)
    features = np.zeros((len(records), max_len, widths.pop()))
    mask = np.zeros((len(records), max_len), dtype=bool)
    for i, record in enumerate(records):
        features[i, :record.length] = record.features
        mask[i, :record.length] = True
    return features, mask


def target_values(records: List[ScoreRecord], name: str) -> np.ndarray:
    return np.array([record.target(name) for record in records], dtype=np.float64)


def records_to_frame(records: List[ScoreRecord]) -> pd.DataFrame:
    """Tabular view of the records without features, one row per record."""
    rows = []
    for record in records:
        row = {"id": record.id, "split": record.split, "domain": record.domain,
               "length": record.length}
        row.update(record.targets)
        row.update({f"time_{k}": v for k, v in record.times.items()})
        rows.append(row)
    frame = pd.DataFrame(rows)
    if not frame.empty:
        frame["split"] = pd.Categorical(frame["split"], categories=SPLITS)
    return frame
