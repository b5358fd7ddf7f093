"""Per-instance run logs and their exact JSON layout.

Layout of one suite file::

    {"problem_type": "SOO",
     "all_data": [{"problem_id": "...",
                   "data": {"run_1": {"X": [...], "Y": [...], "T": 5.23}, ...}},
                  ...]}

``X`` is the list of logged populations, ``Y`` the matching objective
vectors (or n x 2 matrices for bi-objective suites), ``T`` the wall-clock
seconds of the run. Serialization is canonical, so reading a file and
writing it back reproduces it byte for byte.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

TOP_KEYS = ("problem_type", "all_data")
RECORD_KEYS = ("problem_id", "data")
RUN_KEYS = ("X", "Y", "T")
_RUN_KEY = re.compile(r"^run_([1-9][0-9]*)$")


class SchemaError(ValueError):
    pass


class UnknownExperiment(KeyError):
    pass


class IncompleteExperiment(RuntimeError):
    def __init__(self, missing: list[tuple[str, str]]):
        self.missing = missing
        shown = ", ".join(f"{pid}:{run}" for pid, run in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        super().__init__(f"incomplete experiment, missing runs: {shown}{more}")


@dataclass
class RunData:
    X: list
    Y: list
    T: float

    def to_obj(self) -> dict[str, Any]:
        X = [x.tolist() if isinstance(x, np.ndarray) else x for x in self.X]
        Y = [y.tolist() if isinstance(y, np.ndarray) else y for y in self.Y]
        return {"X": X, "Y": Y, "T": float(self.T)}


@dataclass
class MetadataRecord:
    problem_id: str
    data: dict[str, RunData] = field(default_factory=dict)

    @property
    def n_runs(self) -> int:
        return len(self.data)

    def runs(self) -> list[RunData]:
        return [self.data[k] for k in sorted(self.data, key=_run_index)]

    def to_obj(self) -> dict[str, Any]:
        keys = sorted(self.data, key=_run_index)
        return {"problem_id": self.problem_id, "data": {k: self.data[k].to_obj() for k in keys}}


@dataclass
class SuiteMetadata:
    problem_type: str
    all_data: list[MetadataRecord] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.all_data)

    @property
    def n_runs_total(self) -> int:
        return sum(r.n_runs for r in self.all_data)

    def record(self, problem_id: str) -> MetadataRecord:
        for r in self.all_data:
            if r.problem_id == problem_id:
                return r
        raise KeyError(problem_id)

    def problem_ids(self) -> list[str]:
        return [r.problem_id for r in self.all_data]

    def to_obj(self) -> dict[str, Any]:
        return {"problem_type": self.problem_type, "all_data": [r.to_obj() for r in self.all_data]}

    def dumps(self) -> str:
        obj = self.to_obj()
        validate_schema(obj)
        return dumps_canonical(obj)

    def without_times(self) -> "SuiteMetadata":
        """Copy with every ``T`` zeroed, for mode/worker invariance checks."""
        recs = [
            MetadataRecord(r.problem_id, {k: RunData(v.X, v.Y, 0.0) for k, v in r.data.items()})
            for r in self.all_data
        ]
        return SuiteMetadata(self.problem_type, recs)

    @classmethod
    def from_obj(cls, obj: dict[str, Any]) -> "SuiteMetadata":
        validate_schema(obj)
        records = []
        for rec in obj["all_data"]:
            data = {k: RunData(v["X"], v["Y"], v["T"]) for k, v in rec["data"].items()}
            records.append(MetadataRecord(rec["problem_id"], data))
        return cls(obj["problem_type"], records)

    @classmethod
    def loads(cls, text: str) -> "SuiteMetadata":
        return cls.from_obj(json.loads(text))


def _run_index(key: str) -> int:
    m = _RUN_KEY.match(key)
    if not m:
        raise SchemaError(f"bad run key {key!r}")
    return int(m.group(1))


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def validate_schema(obj: Any) -> None:
    """Raise :class:`SchemaError` unless ``obj`` has exactly the suite layout."""
    if not isinstance(obj, dict) or tuple(obj) != TOP_KEYS:
        raise SchemaError(f"top-level keys must be exactly {list(TOP_KEYS)}")
    if not isinstance(obj["problem_type"], str):
        raise SchemaError("problem_type must be a string")
    if not isinstance(obj["all_data"], list):
        raise SchemaError("all_data must be a list")
    seen = set()
    for rec in obj["all_data"]:
        if not isinstance(rec, dict) or tuple(rec) != RECORD_KEYS:
            raise SchemaError(f"record keys must be exactly {list(RECORD_KEYS)}")
        pid = rec["problem_id"]
        if not isinstance(pid, str):
            raise SchemaError("problem_id must be a string")
        if pid in seen:
            raise SchemaError(f"duplicate problem_id {pid!r}")
        seen.add(pid)
        data = rec["data"]
        if not isinstance(data, dict):
            raise SchemaError(f"{pid}: data must be an object")
        idx = [_run_index(k) for k in data]
        if idx != list(range(1, len(idx) + 1)):
            raise SchemaError(f"{pid}: run keys must be run_1..run_{len(idx)} in order")
        for key, run in data.items():
            if not isinstance(run, dict) or tuple(run) != RUN_KEYS:
                raise SchemaError(f"{pid}/{key}: run keys must be exactly {list(RUN_KEYS)}")
            if not isinstance(run["X"], list) or not isinstance(run["Y"], list):
                raise SchemaError(f"{pid}/{key}: X and Y must be lists")
            if len(run["X"]) != len(run["Y"]):
                raise SchemaError(f"{pid}/{key}: |X| != |Y|")
            T = run["T"]
            if isinstance(T, bool) or not isinstance(T, (int, float)) or T < 0:
                raise SchemaError(f"{pid}/{key}: T must be a non-negative number")


def records_to_metadata(problem_type: str, grouped: Iterable[tuple[str, list]]) -> SuiteMetadata:
    """Assemble metadata from ``(problem_id, [RunRecord, ...])`` in run order."""
    out = []
    for pid, runs in grouped:
        data = {f"run_{k + 1}": RunData(r.X, r.Y, r.T) for k, r in enumerate(runs)}
        out.append(MetadataRecord(pid, data))
    return SuiteMetadata(problem_type, out)


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write via a sibling temp file and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_metadata(path: str | os.PathLike, md: SuiteMetadata) -> Path:
    return atomic_write_text(path, md.dumps())


def read_metadata(path: str | os.PathLike) -> SuiteMetadata:
    with open(path, encoding="utf-8") as fh:
        return SuiteMetadata.loads(fh.read())


# --------------------------------------------------------------------------
# experiment store: <root>/<algorithm_id>/<suite_id>/{metadata,manifest}.json
# --------------------------------------------------------------------------


def store_path(root: str | os.PathLike, algorithm_id: str, suite_id: str) -> Path:
    return Path(root) / algorithm_id / suite_id


def put_metadata(
    root: str | os.PathLike,
    algorithm_id: str,
    suite_id: str,
    md: SuiteMetadata,
    manifest: dict[str, Any] | None = None,
) -> Path:
    where = store_path(root, algorithm_id, suite_id)
    path = write_metadata(where / "metadata.json", md)
    man = {"algorithm": algorithm_id, "suite": suite_id, "instances": md.problem_ids(),
           "runs": max((r.n_runs for r in md.all_data), default=0)}
    man.update(manifest or {})
    atomic_write_text(where / "manifest.json", json.dumps(man, indent=2, sort_keys=True))
    return path


def get_metadata(root: str | os.PathLike, algorithm_id: str, suite_id: str) -> SuiteMetadata:
    """Load stored metadata, checking it against the manifest's expected grid."""
    where = store_path(root, algorithm_id, suite_id)
    path = where / "metadata.json"
    if not path.is_file():
        raise UnknownExperiment(f"no metadata for algorithm {algorithm_id!r} on suite {suite_id!r}")
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    # the schema check insists on contiguous run keys; completeness is reported separately
    records = obj.get("all_data", []) if isinstance(obj, dict) else []
    expected_ids = None
    expected_runs = None
    man_path = where / "manifest.json"
    if man_path.is_file():
        with open(man_path, encoding="utf-8") as fh:
            man = json.load(fh)
        expected_ids = man.get("instances")
        expected_runs = man.get("runs")
    if expected_runs is None:
        expected_runs = max((_max_run(r) for r in records), default=0)
    missing: list[tuple[str, str]] = []
    present = {r.get("problem_id"): r for r in records if isinstance(r, dict)}
    for pid in expected_ids or list(present):
        rec = present.get(pid)
        have = set(rec.get("data", {})) if rec else set()
        for k in range(1, expected_runs + 1):
            if f"run_{k}" not in have:
                missing.append((pid, f"run_{k}"))
    if missing:
        raise IncompleteExperiment(missing)
    return SuiteMetadata.from_obj(obj)


def _max_run(rec: Any) -> int:
    best = 0
    for key in rec.get("data", {}) if isinstance(rec, dict) else ():
        m = _RUN_KEY.match(key)
        if m:
            best = max(best, int(m.group(1)))
    return best
