"""Command-line train -> test -> analyze workflow.

Experiment config (JSON, unknown keys rejected at every level)::

    {
      "suite":    {"suite": "soo-10d", "seed": 42, ...},        # SuiteSpec fields
      "agent":    {"kind": "RL", "init_seed": 0, "warm_start": true,
                   "architecture": [9, 32, 32, 5]},
      "training": {"epochs": 20, "episodes_per_instance": 8, "batch_size": 16, ...},
      "test":     {"mode": 4, "runs": 51, "workers": 1, "base_seed": 2025, "log_every": 1},
      "output_dir": "runs/exp1"
    }

``agent.kind`` is ``RL``, ``NE``, one of the baselines (``RS``, ``DE``,
``PSO``, ``SHADE``) or ``FIXED-DE`` (extra keys ``F``, ``CR``, ``strategy``).
``training`` takes the RL or NE trainer fields; ``epochs`` is accepted for
both. Failures print ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata as importlib_metadata
from pathlib import Path
from typing import Any

from metabbo.core.agents import AGENT_KINDS, META_KINDS, make_agent
from metabbo.core.features import FEATURE_DESCRIPTIONS, REWARD_DESCRIPTION
from metabbo.core.policy import ARCHITECTURE, ArchitectureMismatch, MetaPolicy, design_bias
from metabbo.core.trainers import NEConfig, RLConfig, Snapshot
from metabbo.metadata import SuiteMetadata, atomic_write_text, put_metadata, read_metadata
from metabbo.metrics import UndefinedIndicator, anti_nfl, perf_score, rank_table
from metabbo.optimizers import STRATEGIES, AlgorithmDesign
from metabbo.parallel import MODES, TestPlan, run_test_plan
from metabbo.problems import SUITE_KINDS, Suite, SuiteSpec, build_suite
from metabbo.reporting import emit_outputs, write_instance_csv

log = logging.getLogger("metabbo")


class ConfigError(ValueError):
    pass


def code_version() -> str:
    try:
        return importlib_metadata.version("metabbo")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


def _strict(section: str, data: Any, allowed) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be a JSON object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}")
    return data


@dataclass
class AgentSpec:
    kind: str = "RL"
    init_seed: int = 0
    warm_start: bool = True
    architecture: list[int] = field(default_factory=lambda: list(ARCHITECTURE))
    F: float = 0.5
    CR: float = 0.9
    strategy: str = "rand/1/bin"

    def __post_init__(self):
        self.kind = str(self.kind).upper()
        if self.kind not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {self.kind!r}; choose from {list(AGENT_KINDS)}")
        arch = [int(a) for a in self.architecture]
        if len(arch) < 2 or arch[0] != ARCHITECTURE[0] or arch[-1] != ARCHITECTURE[-1] or min(arch) < 1:
            raise ConfigError(f"architecture must start with {ARCHITECTURE[0]} and end with {ARCHITECTURE[-1]}")
        self.architecture = arch
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {list(STRATEGIES)}")

    @property
    def design(self) -> AlgorithmDesign:
        return AlgorithmDesign(self.F, self.CR, STRATEGIES.index(self.strategy))


@dataclass
class TestSpec:
    mode: int = 4
    runs: int = 51
    workers: int = 1
    base_seed: int = 2025
    log_every: int = 1

    __test__ = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"test.mode must be one of {list(MODES)}")
        if self.runs < 1 or self.workers < 1 or self.log_every < 1:
            raise ConfigError("test.runs, test.workers and test.log_every must be >= 1")


@dataclass
class ExperimentConfig:
    suite: SuiteSpec
    agent: AgentSpec
    training: RLConfig | NEConfig | None
    test: TestSpec
    output_dir: str

    @classmethod
    def from_dict(cls, data: Any) -> "ExperimentConfig":
        data = _strict("config", data, ("suite", "agent", "training", "test", "output_dir"))
        if "output_dir" not in data or not isinstance(data["output_dir"], str) or not data["output_dir"]:
            raise ConfigError("output_dir (non-empty string) is required")
        try:
            suite = SuiteSpec.from_dict(_strict("suite", data.get("suite", {}), [f.name for f in fields(SuiteSpec)]))
            suite = suite.resolved()
            agent = AgentSpec(**_strict("agent", data.get("agent", {}), [f.name for f in fields(AgentSpec)]))
            test = TestSpec(**_strict("test", data.get("test", {}), [f.name for f in fields(TestSpec)]))
            training = _training_config(agent.kind, data.get("training", {}))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if agent.kind in META_KINDS and SUITE_KINDS[suite.suite]["problem_type"] == "MOO":
            raise ConfigError("meta agents drive single-objective DE; the zdt suite takes RS or DE")
        if agent.kind in ("PSO", "SHADE") and SUITE_KINDS[suite.suite]["problem_type"] == "MOO":
            raise ConfigError(f"{agent.kind} is single-objective only; the zdt suite takes RS or DE")
        return cls(suite, agent, training, test, data["output_dir"])

    def resolved(self) -> dict[str, Any]:
        return {
            "suite": asdict(self.suite),
            "agent": asdict(self.agent),
            "training": asdict(self.training) if self.training is not None else None,
            "test": asdict(self.test),
            "output_dir": self.output_dir,
        }


def _training_config(kind: str, data: Any):
    if kind == "RL":
        data = _strict("training", data, [f.name for f in fields(RLConfig)])
        return RLConfig(**data)
    if kind == "NE":
        data = dict(_strict("training", data, [f.name for f in fields(NEConfig)] + ["epochs"]))
        if "epochs" in data:
            if "generations" in data and data["generations"] != data["epochs"]:
                raise ConfigError("training.epochs and training.generations disagree")
            data["generations"] = data.pop("epochs")
        return NEConfig(**data)
    _strict("training", data, [])
    return None


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def initial_policy(agent: AgentSpec) -> MetaPolicy:
    bias = design_bias(agent.design) if agent.warm_start else None
    return MetaPolicy.init(agent.init_seed, tuple(agent.architecture), out_bias=bias)


def _write_json(path: Path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True))


def cmd_train(args) -> dict:
    cfg = load_config(args.config)
    suite = build_suite(cfg.suite)
    out = Path(args.out or Path(cfg.output_dir) / "train")
    if cfg.agent.kind not in META_KINDS:
        agent = make_agent(cfg.agent.kind) if cfg.agent.kind != "FIXED-DE" else make_agent("FIXED-DE", design=cfg.agent.design)
        agent.train(suite.train_set())
        return {"command": "train", "agent": agent.name, "snapshots": 0,
                "message": f"{agent.name} is not trainable; nothing written"}
    if not suite.train_ids:
        raise ConfigError("train split is empty")
    policy = initial_policy(cfg.agent)
    agent = make_agent(cfg.agent.kind, policy)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": "train",
        "version": code_version(),
        "config": cfg.resolved(),
        "suite_spec": asdict(cfg.suite),
        "train_ids": suite.train_ids,
        "seeds": {"trainer": cfg.training.seed, "policy_init": cfg.agent.init_seed, "suite": cfg.suite.seed},
        "features": list(FEATURE_DESCRIPTIONS),
        "reward": REWARD_DESCRIPTION,
        "snapshots": [],
        "status": "running",
    }

    def on_snapshot(snap: Snapshot):
        path = snap.save(out / f"snapshot_{snap.epoch}.json")
        manifest["snapshots"].append({"epoch": snap.epoch, "file": path.name, "cumulative_seconds": snap.seconds,
                                      "train_perf": snap.train_perf})
        _write_json(out / "manifest.json", manifest)

    t0 = time.perf_counter()
    try:
        snaps = agent.train(suite.train_set(), cfg.training, on_snapshot=on_snapshot)
    except BaseException:
        manifest["status"] = "failed"
        _write_json(out / "manifest.json", manifest)
        raise
    manifest["status"] = "complete"
    manifest["wall_seconds"] = time.perf_counter() - t0
    _write_json(out / "manifest.json", manifest)
    return {"command": "train", "agent": agent.name, "snapshots": len(snaps), "out": str(out)}


def _snapshot_files(directory: Path) -> list[Path]:
    found = []
    for p in directory.glob("snapshot_*.json"):
        m = re.fullmatch(r"snapshot_(\d+)\.json", p.name)
        if m:
            found.append((int(m.group(1)), p))
    return [p for _, p in sorted(found)]


def _resolve_agent(cfg: ExperimentConfig, snapshot: str | None, baseline: str | None):
    if baseline:
        kind = baseline.upper()
        if kind not in AGENT_KINDS or kind in META_KINDS:
            raise ConfigError(f"unknown baseline {baseline!r}")
        if kind == "FIXED-DE":
            return make_agent(kind, design=cfg.agent.design), None
        return make_agent(kind), None
    if cfg.agent.kind not in META_KINDS:
        if cfg.agent.kind == "FIXED-DE":
            return make_agent("FIXED-DE", design=cfg.agent.design), None
        return make_agent(cfg.agent.kind), None
    if snapshot is None:
        files = _snapshot_files(Path(cfg.output_dir) / "train")
        if not files:
            raise ConfigError("no --snapshot given and no snapshots found under output_dir/train")
        snapshot = str(files[-1])
    snap = _load_snapshot(snapshot)
    if tuple(snap.architecture) != tuple(cfg.agent.architecture):
        raise ArchitectureMismatch(
            f"snapshot architecture {list(snap.architecture)} does not match the configured {cfg.agent.architecture}"
        )
    return make_agent(cfg.agent.kind, snap.policy()), snap


def _load_snapshot(path: str) -> Snapshot:
    try:
        return Snapshot.load(path)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"cannot load snapshot {path}: {exc}") from exc


def _test_split(suite: Suite, split: str):
    problems = suite.test_set() if split == "test" else suite.train_set()
    if not problems:
        raise ConfigError(f"the {split} split of {suite.name} is empty")
    return problems


def _suite_label(suite_name: str, split: str) -> str:
    return suite_name if split == "test" else f"{suite_name}-train"


def _run_and_store(agent, problems, test: TestSpec, out_root: Path, algorithm: str, suite: Suite, split: str,
                   extra: dict):
    plan = TestPlan(test.mode, problems, runs=test.runs, base_seed=test.base_seed, workers=test.workers,
                    log_every=test.log_every)
    result = run_test_plan(agent, plan)
    md = result.metadata()
    manifest = {
        "algorithm": algorithm,
        "agent": agent.name,
        "suite_spec": asdict(suite.spec),
        "split": split,
        "plan": {"mode": test.mode, "runs": test.runs, "workers": test.workers, "base_seed": test.base_seed,
                 "log_every": test.log_every},
        "version": code_version(),
        "wall_seconds": result.wall_seconds,
        "retried": [list(t) for t in result.retried],
    }
    if getattr(agent, "trainable", False):
        manifest["features"] = list(FEATURE_DESCRIPTIONS)
        manifest["reward"] = REWARD_DESCRIPTION
    manifest.update(extra)
    path = put_metadata(out_root, algorithm, _suite_label(suite.name, split), md, manifest)
    write_instance_csv(path.parent / "instances.csv", perf_score(md, suite))
    return path, md


def cmd_test(args) -> dict:
    cfg = load_config(args.config)
    overrides = {k: v for k, v in (("mode", args.mode), ("runs", args.runs), ("workers", args.workers))
                 if v is not None}
    test = TestSpec(**{**asdict(cfg.test), **overrides})
    suite = build_suite(cfg.suite)
    problems = _test_split(suite, args.split)
    out_root = Path(args.out or Path(cfg.output_dir) / "test")
    if args.all_snapshots:
        if cfg.agent.kind not in META_KINDS:
            raise ConfigError("--all-snapshots needs an RL or NE agent")
        files = _snapshot_files(Path(args.all_snapshots))
        if not files:
            raise ConfigError(f"no snapshot_<epoch>.json files in {args.all_snapshots}")
        snaps = [_load_snapshot(str(p)) for p in files]
        for s in snaps:
            if tuple(s.architecture) != tuple(cfg.agent.architecture):
                raise ArchitectureMismatch(f"snapshot epoch {s.epoch} has architecture {list(s.architecture)}")
        written = []
        for p, snap in zip(files, snaps):
            agent = make_agent(cfg.agent.kind, snap.policy())
            path, _ = _run_and_store(agent, problems, test, out_root, f"{agent.name}@epoch{snap.epoch}", suite,
                                     args.split, {"snapshot": {"file": str(p), "epoch": snap.epoch,
                                                               "cumulative_seconds": snap.seconds},
                                                  "sweep": True})
            written.append(str(path))
        return {"command": "test", "metadata": written}
    agent, snap = _resolve_agent(cfg, args.snapshot, args.baseline)
    extra = {}
    if snap is not None:
        extra["snapshot"] = {"file": args.snapshot, "epoch": snap.epoch, "cumulative_seconds": snap.seconds}
    path, md = _run_and_store(agent, problems, test, out_root, agent.name, suite, args.split, extra)
    return {"command": "test", "metadata": [str(path)], "instances": md.N, "records": md.n_runs_total}


@dataclass
class _Loaded:
    path: str
    md: SuiteMetadata
    agent: str
    suite: Suite
    suite_label: str
    epoch: int | None = None
    hours: float | None = None

    @property
    def algorithm(self) -> str:
        return self.agent if self.epoch is None else f"{self.agent}@epoch{self.epoch}"


def _load_for_analysis(path: str) -> _Loaded:
    md = read_metadata(path)
    man_path = Path(path).parent / "manifest.json"
    if not man_path.is_file():
        raise ConfigError(f"{path}: no manifest.json next to it, so its suite cannot be rebuilt")
    with open(man_path, encoding="utf-8") as fh:
        man = json.load(fh)
    if "suite_spec" not in man:
        raise ConfigError(f"{man_path} has no suite_spec")
    suite = build_suite(man["suite_spec"])
    item = _Loaded(path, md, man.get("agent", man.get("algorithm", "unknown")), suite,
                   _suite_label(suite.name, man.get("split", "test")))
    if man.get("sweep"):
        item.epoch = int(man["snapshot"]["epoch"])
        item.hours = float(man["snapshot"]["cumulative_seconds"]) / 3600.0
    return item


def cmd_analyze(args) -> dict:
    if args.anti_nfl and not args.train:
        raise ConfigError(
            "Anti-NFL compares Perf on a train suite with Perf on unseen test suites; pass --train <metadata>"
        )
    paths = list(args.metadata or []) + list(args.test or [])
    if not paths and not args.train:
        raise ConfigError("analyze needs at least one metadata file")
    train = [_load_for_analysis(p) for p in args.train or []]
    tests = [_load_for_analysis(p) for p in paths]
    out = Path(args.out)

    # reports[algorithm][suite label]
    reports: dict[str, dict] = {}
    md_by_label, suites_by_label = {}, {}
    for item in train + tests:
        label = f"{item.algorithm}@{item.suite_label}"
        if label in md_by_label:
            raise ConfigError(f"two metadata files map to {label}")
        md_by_label[label] = item.md
        suites_by_label[label] = item.suite
        reports.setdefault(item.algorithm, {})[item.suite_label] = perf_score(item.md, item.suite)

    by_suite: dict[str, dict] = {}
    for item in tests:
        if item.epoch is None:
            by_suite.setdefault(item.suite_label, {})[item.algorithm] = reports[item.algorithm][item.suite_label]
    rankings = {name: rank_table(reps) for name, reps in by_suite.items() if len(reps) >= 2}

    efficiency: dict[str, list] = {}
    for item in train + tests:
        if item.epoch is not None:
            if item.hours <= 0:
                raise ConfigError(f"{item.path}: snapshot has non-positive training time")
            perf = reports[item.algorithm][item.suite_label].perf
            efficiency.setdefault(f"{item.agent}@{item.suite_label}", []).append((item.epoch, perf / item.hours))
    for rows in efficiency.values():
        rows.sort()

    nfl = {}
    for tr in train:
        test_perfs = [reports[t.algorithm][t.suite_label].perf for t in tests
                      if t.algorithm == tr.algorithm and t.suite_label != tr.suite_label]
        if not test_perfs:
            if args.anti_nfl:
                raise ConfigError(f"no test-suite metadata for {tr.algorithm} to compare with its train suite")
            continue
        try:
            nfl[tr.algorithm] = anti_nfl(reports[tr.algorithm][tr.suite_label].perf, test_perfs)
        except UndefinedIndicator as exc:
            raise ConfigError(f"{tr.algorithm}: {exc}") from exc
    written = emit_outputs(md_by_label, reports, out, rankings=rankings, efficiency=efficiency, anti_nfl=nfl,
                           suites=suites_by_label)
    return {"command": "analyze", "written": [str(p) for p in written]}


def cmd_list_suites(args) -> dict:
    return {"suites": {name: dict(kind) for name, kind in SUITE_KINDS.items()}}


def cmd_list_agents(args) -> dict:
    return {"agents": list(AGENT_KINDS), "trainable": list(META_KINDS)}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metabbo", description="Meta black-box optimization workflow")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a meta policy and write snapshots")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="snapshot directory (default: <output_dir>/train)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("test", help="run the test plan and write metadata")
    p.add_argument("--config", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--snapshot", help="snapshot JSON for RL/NE agents (default: latest in <output_dir>/train)")
    src.add_argument("--baseline", help="test a baseline (RS, DE, PSO, SHADE, FIXED-DE) instead")
    src.add_argument("--all-snapshots", metavar="DIR", help="test every snapshot in DIR (for learning efficiency)")
    p.add_argument("--mode", type=int, choices=MODES)
    p.add_argument("--runs", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--split", choices=("test", "train"), default="test")
    p.add_argument("--out", help="metadata root (default: <output_dir>/test)")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("analyze", help="compute Perf, ranks, efficiency, Anti-NFL and convergence data")
    p.add_argument("metadata", nargs="*", help="metadata files")
    p.add_argument("--train", nargs="+", help="train-suite metadata (one per algorithm)")
    p.add_argument("--test", nargs="+", help="test-suite metadata")
    p.add_argument("--anti-nfl", action="store_true", help="require an Anti-NFL value for every algorithm")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("list-suites", help="show the available suite kinds")
    p.set_defaults(func=cmd_list_suites)
    p = sub.add_parser("list-agents", help="show the available agent kinds")
    p.set_defaults(func=cmd_list_agents)
    return parser


def _error_json(exc: BaseException, command: str | None) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc), "command": command})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except (ConfigError, ArchitectureMismatch) as exc:
        print(_error_json(exc, args.command), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error line
        log.debug("command failed", exc_info=True)
        print(_error_json(exc, args.command), file=sys.stderr)
        return 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
