"""Series execution, trace persistence, evaluation, localization and reports."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import os
import shutil
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .algebra import FALSE, AtomContext, TriValue, atom_ids, eval_atom, eval_expr
from .derivation import CompositeCandidate
from .errors import CompMRError, NotComputed, UsageError
from .executors import ExecutorFailure, RunContext, executor_from_config, guard_from_config
from .exprtext import to_symbolic
from .graph import PipelineGraph, Port, Subsystem

MANIFEST_VERSION = 1


class RunAborted(CompMRError):
    """I/O failure mid-run; completed records stay cached for resume."""


class Status(enum.Enum):
    EXECUTED = "EXECUTED"
    SKIPPED = "SKIPPED"


@dataclass(frozen=True)
class TestGroup:
    """A test series: ``inputs[k]`` maps system-input name to a file path."""

    __test__ = False  # not a pytest class

    id: str
    class_tag: str
    inputs: tuple
    metadata: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(dict(b) for b in self.inputs))
        if len(self.inputs) < 2:
            raise UsageError(f"test group {self.id}: a series needs at least 2 inputs, got {len(self.inputs)}")

    @property
    def n(self) -> int:
        return len(self.inputs)


@dataclass
class Record:
    vertex: str
    k: int
    status: Status
    inputs: dict = field(default_factory=dict)  # port -> relative path
    outputs: dict = field(default_factory=dict)  # port -> relative path
    digests: dict = field(default_factory=dict)  # relative path -> sha256
    exit_info: str = ""
    ok: bool = True

    def to_json(self) -> dict:
        return {
            "vertex": self.vertex,
            "k": self.k,
            "status": self.status.value,
            "ok": self.ok,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "digests": dict(sorted(self.digests.items())),
            "exit_info": self.exit_info,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Record":
        return cls(d["vertex"], d["k"], Status(d["status"]), dict(d["inputs"]), dict(d["outputs"]),
                   dict(d["digests"]), d["exit_info"], d["ok"])


class ExecutionTrace:
    """All recorded values of one series, keyed by (vertex, test index)."""

    def __init__(self, group_id: str, n: int, root: Path, class_tag: str = "", records=None):
        self.group_id = group_id
        self.n = n
        self.root = Path(root)
        self.class_tag = class_tag
        self.records: dict = dict(records or {})

    def record(self, vertex: str, k: int) -> Optional[Record]:
        return self.records.get((vertex, k))

    def computed(self, vertex: str) -> bool:
        """True when the vertex ran successfully on every test of the series."""
        for k in range(self.n):
            r = self.records.get((vertex, k))
            if r is None or r.status is not Status.EXECUTED or not r.ok:
                return False
        return True

    def executed(self, vertex: str, k: int) -> bool:
        r = self.records.get((vertex, k))
        return r is not None and r.status is Status.EXECUTED and r.ok

    def _path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def output(self, vertex: str, port: str, k: int) -> Path:
        r = self.records.get((vertex, k))
        if r is None or not r.ok or port not in r.outputs:
            raise NotComputed(f"{vertex}.{port} has no value on test {k}")
        return self._path(r.outputs[port])

    def input(self, vertex: str, port: str, k: int) -> Path:
        r = self.records.get((vertex, k))
        if r is None or port not in r.inputs:
            raise NotComputed(f"{vertex}.{port} has no input on test {k}")
        return self._path(r.inputs[port])

    def output_ports(self, vertex: str) -> list:
        r = self.records.get((vertex, 0))
        return sorted(r.outputs) if r else []

    def to_json(self) -> dict:
        recs = sorted(self.records.values(), key=lambda r: (r.k, r.vertex))
        return {
            "version": MANIFEST_VERSION,
            "group_id": self.group_id,
            "class_tag": self.class_tag,
            "n": self.n,
            "records": [r.to_json() for r in recs],
        }

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: Path, root: Optional[Path] = None) -> "ExecutionTrace":
        path = Path(path)
        data = json.loads(path.read_text())
        root = Path(root) if root is not None else path.parent.parent
        recs = {}
        for d in data["records"]:
            r = Record.from_json(d)
            recs[(r.vertex, r.k)] = r
        return cls(data["group_id"], data["n"], root, data.get("class_tag", ""), recs)


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _rel(path: Path, root: Path) -> str:
    try:
        return Path(path).resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return str(Path(path).resolve())


# -- execution ---------------------------------------------------------------


class _Runner:
    def __init__(self, graph: PipelineGraph, group: TestGroup, workdir: Path):
        self.graph = graph
        self.group = group
        self.root = Path(workdir)
        self.store = self.root / "objects"
        self.trace = ExecutionTrace(group.id, group.n, self.root, group.class_tag)
        self.digests: dict = {}

    def digest(self, path: Path) -> str:
        key = str(path)
        if key not in self.digests:
            self.digests[key] = file_digest(path)
        return self.digests[key]

    def ctx(self, k: int) -> RunContext:
        return RunContext(self.group.id, k, self.group.n, self.group.class_tag, dict(self.group.metadata))

    def resolve_inputs(self, vertex: str, k: int):
        """Port -> Path, or (None, reason) when some value is missing."""
        resolved = {}
        for port, src in sorted(self.graph.incoming(vertex).items()):
            if isinstance(src, Port):
                if not self.trace.executed(src.vertex, k):
                    return None, f"input {port} not computed ({src.vertex} has no value)"
                resolved[port] = self.trace.output(src.vertex, src.port, k)
            else:
                path = self.group.inputs[k].get(src)
                if path is None:
                    return None, f"system input {src!r} missing on test {k}"
                resolved[port] = Path(path)
        return resolved, ""

    def choose(self, group, k: int) -> Optional[str]:
        first = group.members[0]
        inputs, reason = self.resolve_inputs(first, k)
        if inputs is None:
            return None
        guard = guard_from_config(group.guard)
        if guard is None:
            for member in group.members:
                if self.group.class_tag in group.taken.get(member, ()):
                    return member
            return first
        try:
            choice = guard.choose(inputs, self.ctx(k))
        except ExecutorFailure:
            return None
        if choice not in group.members:
            raise UsageError(f"guard of branch group {group.name} chose {choice!r}, not a member")
        return choice

    def run_vertex(self, vertex: str, k: int, chosen: dict):
        spec = self.graph.vertices[vertex]
        bg = self.graph.group_of(vertex)
        if bg is not None:
            if bg.name not in chosen:
                chosen[bg.name] = self.choose(bg, k)
            if chosen[bg.name] != vertex:
                why = "guard unavailable" if chosen[bg.name] is None else f"branch {chosen[bg.name]} taken"
                return Record(vertex, k, Status.SKIPPED, exit_info=why)
        inputs, reason = self.resolve_inputs(vertex, k)
        if inputs is None:
            return Record(vertex, k, Status.SKIPPED, exit_info=reason)
        in_rel = {p: _rel(path, self.root) for p, path in inputs.items()}
        digests = {in_rel[p]: self.digest(path) for p, path in inputs.items()}
        if spec.executor is None:
            raise UsageError(f"vertex {vertex} has no executor")
        executor = executor_from_config(spec.executor)
        key_doc = {
            "vertex": vertex,
            "executor": executor.signature(),
            "k": k,
            "n": self.group.n,
            "group": self.group.id,
            "inputs": {p: digests[in_rel[p]] for p in sorted(inputs)},
        }
        key = hashlib.sha256(json.dumps(key_doc, sort_keys=True).encode()).hexdigest()[:32]
        final = self.store / key
        done = final / ".done"
        if not done.exists():
            tmp = self.store / f".tmp-{key}-{os.getpid()}-{threading.get_ident()}"
            if tmp.exists():
                shutil.rmtree(tmp)
            tmp.mkdir(parents=True)
            outs = {p: tmp / p for p in spec.outputs}
            try:
                info = executor.run(inputs, outs, self.ctx(k))
                missing = [p for p, path in outs.items() if not path.exists()]
                if missing:
                    raise ExecutorFailure(f"no value written for output port(s) {', '.join(missing)}")
            except ExecutorFailure as exc:
                shutil.rmtree(tmp, ignore_errors=True)
                return Record(vertex, k, Status.EXECUTED, in_rel, {}, digests, str(exc), ok=False)
            (tmp / ".done").write_text(json.dumps({"exit_info": str(info)}))
            try:
                os.replace(tmp, final)
            except OSError:
                # another series produced the same object first
                shutil.rmtree(tmp, ignore_errors=True)
        info = json.loads(done.read_text())["exit_info"]
        out_rel = {}
        for p in spec.outputs:
            path = final / p
            out_rel[p] = _rel(path, self.root)
            digests[out_rel[p]] = self.digest(path)
        return Record(vertex, k, Status.EXECUTED, in_rel, out_rel, digests, info)

    def run(self) -> ExecutionTrace:
        order = self.graph.topological_order()
        for k in range(self.group.n):
            chosen: dict = {}
            for vertex in order:
                try:
                    rec = self.run_vertex(vertex, k, chosen)
                except OSError as exc:
                    self.trace.save(self.root / "traces" / f"{self.group.id}.partial.json")
                    raise RunAborted(f"I/O error on {vertex} test {k}: {exc}; rerun to resume") from exc
                self.trace.records[(vertex, k)] = rec
        return self.trace


def run_series(graph: PipelineGraph, group: TestGroup, workdir) -> ExecutionTrace:
    """Execute every test of ``group`` and persist the trace manifest."""
    graph.ensure_valid()
    expected = set(graph.system_inputs)
    for k, bundle in enumerate(group.inputs):
        if set(bundle) != expected:
            raise UsageError(
                f"group {group.id} test {k}: inputs {sorted(bundle)} do not match system inputs {sorted(expected)}"
            )
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    trace = _Runner(graph, group, workdir).run()
    trace.save(workdir / "traces" / f"{group.id}.json")
    partial = workdir / "traces" / f"{group.id}.partial.json"
    if partial.exists():
        partial.unlink()
    return trace


def run_groups(graph: PipelineGraph, groups: Sequence[TestGroup], workdir, parallel: int = 1) -> list:
    """Run several series; results come back in input order whatever ``parallel`` is."""
    if parallel <= 1 or len(groups) <= 1:
        return [run_series(graph, g, workdir) for g in groups]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(lambda g: run_series(graph, g, workdir), groups))


# -- evaluation --------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    group_id: str
    composite_value: TriValue
    atom_values: Mapping[str, TriValue]
    suspects: Subsystem
    class_tag: str = ""
    composite: str = ""
    metrics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if bool(self.suspects.vertex_ids) != self.composite_value.is_false:
            raise AssertionError("suspects must be non-empty exactly when the composite is FALSE")


def evaluate(candidate: CompositeCandidate, group: TestGroup, trace: ExecutionTrace, graph: PipelineGraph,
             label: str = "") -> Verdict:
    if group.class_tag not in candidate.domain:
        raise UsageError(f"group {group.id} has class {group.class_tag!r}, outside the composite's domain")
    atoms = candidate.atoms
    values = {aid: eval_atom(atoms[aid], group, trace) for aid in atom_ids(candidate.expr)}
    value = eval_expr(candidate.expr, group, trace, atoms, atom_values=values)
    suspects: set = set()
    if value.is_false:
        false_atoms = [aid for aid, v in values.items() if v.is_false]
        if not false_atoms:
            # falsity from xor/indef rather than a single atom: blame everything the composite reads
            false_atoms = list(values)
        for aid in false_atoms:
            for v in atoms[aid].reads:
                suspects |= graph.ancestors(v).vertex_ids
    metrics = series_metrics(candidate, group, trace, values)
    return Verdict(group.id, value, dict(sorted(values.items())), Subsystem(frozenset(suspects)),
                   group.class_tag, label or to_symbolic(candidate.expr), metrics)


def series_metrics(candidate: CompositeCandidate, group: TestGroup, trace: ExecutionTrace, values=None) -> dict:
    """Failures metric for each defined atom that declares one."""
    out = {}
    for aid in atom_ids(candidate.expr):
        atom = candidate.atoms[aid]
        metric = getattr(atom, "metric", None)
        if metric is None or (values is not None and not values[aid].is_defined):
            continue
        try:
            out[aid] = float(metric(AtomContext(group, trace)))
        except NotComputed:
            continue
    return out


def failures_metric(series_outputs: Sequence) -> float:
    """Fraction of adjacent pairs (j, j+1) where output j is not a subset of output j+1."""
    sets = [set(s) for s in series_outputs]
    if len(sets) < 2:
        raise UsageError("failures metric needs at least two outputs")
    bad = sum(1 for a, b in zip(sets, sets[1:]) if not a <= b)
    return bad / (len(sets) - 1)


# -- reporting ---------------------------------------------------------------


@dataclass
class Report:
    """Per-composite failure fractions (table2) and per-class metric means (table3)."""

    atoms: list
    table2: list  # rows: composite, groups, failed_tests, <atom false fractions>
    table3: list  # rows: configuration, groups, <atom mean metrics>
    verdicts: list

    def table2_csv(self) -> str:
        return _csv(["composite", "groups", "failed_tests"] + self.atoms, self.table2)

    def table3_csv(self) -> str:
        return _csv(["configuration", "groups"] + self.atoms, self.table3)

    def verdicts_csv(self) -> str:
        rows = [
            [v.group_id, v.class_tag, v.composite, str(v.composite_value),
             ";".join(sorted(v.suspects.vertex_ids))]
            + [str(v.atom_values.get(a, "")) for a in self.atoms]
            for v in self.verdicts
        ]
        return _csv(["group", "class", "composite", "value", "suspects"] + self.atoms, rows)

    def summary(self) -> dict:
        return {
            "groups": len(self.verdicts),
            "failed": sum(1 for v in self.verdicts if v.composite_value.is_false),
            "undefined": sum(1 for v in self.verdicts if not v.composite_value.is_defined),
            "atoms": self.atoms,
            "table2": [dict(zip(["composite", "groups", "failed_tests"] + self.atoms, r)) for r in self.table2],
            "table3": [dict(zip(["configuration", "groups"] + self.atoms, r)) for r in self.table3],
            "failed_groups": [
                {"group": v.group_id, "composite": v.composite, "suspects": sorted(v.suspects.vertex_ids),
                 "false_atoms": sorted(a for a, x in v.atom_values.items() if x.is_false)}
                for v in self.verdicts
                if v.composite_value.is_false
            ],
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write(out / "table2.csv", self.table2_csv())
        _atomic_write(out / "table3.csv", self.table3_csv())
        _atomic_write(out / "verdicts.csv", self.verdicts_csv())
        _atomic_write(out / "summary.json", json.dumps(self.summary(), indent=1, sort_keys=True) + "\n")
        return out

    def to_text(self) -> str:
        def fmt(headers, rows):
            cells = [headers] + [[_cell(c) for c in r] for r in rows]
            widths = [max(len(str(r[i])) for r in cells) for i in range(len(headers))]
            return "\n".join("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells)

        parts = ["Failed checks", fmt(["composite", "groups", "failed_tests"] + self.atoms, self.table2),
                 "", "Failures metric", fmt(["configuration", "groups"] + self.atoms, self.table3)]
        failed = [v for v in self.verdicts if v.composite_value.is_false]
        if failed:
            parts += ["", "Suspects"]
            parts += [f"{v.group_id}: {', '.join(sorted(v.suspects.vertex_ids))}" for v in failed]
        return "\n".join(parts) + "\n"


def _cell(x):
    return f"{x:.3f}" if isinstance(x, float) else x


def _csv(headers, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(headers)
    for r in rows:
        w.writerow([_cell(c) for c in r])
    return buf.getvalue()


def report(verdicts: Iterable[Verdict], metrics: Optional[Mapping] = None) -> Report:
    """Aggregate verdicts.  ``metrics`` maps group id -> {atom: failures fraction};
    by default each verdict's own metrics are used."""
    verdicts = list(verdicts)
    atoms = sorted({a for v in verdicts for a in v.atom_values})
    metrics = dict(metrics) if metrics is not None else {v.group_id: dict(v.metrics) for v in verdicts}

    table2 = []
    for comp in sorted({v.composite for v in verdicts}):
        vs = [v for v in verdicts if v.composite == comp]
        row = [comp, len(vs), sum(v.composite_value.is_false for v in vs) / len(vs)]
        row += [sum(v.atom_values.get(a) == FALSE for v in vs) / len(vs) for a in atoms]
        table2.append(row)

    table3 = []
    for tag in sorted({v.class_tag for v in verdicts}):
        vs = [v for v in verdicts if v.class_tag == tag]
        row = [tag, len(vs)]
        for a in atoms:
            xs = [metrics[v.group_id][a] for v in vs if a in metrics.get(v.group_id, {})]
            row.append(sum(xs) / len(xs) if xs else "")
        table3.append(row)
    return Report(atoms, table2, table3, verdicts)

