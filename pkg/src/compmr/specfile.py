"""Declarative pipeline spec (YAML): graph, atoms, derivation policy, test groups.

Every mapping and list keeps the line it started on so that errors can
point at the offending part of the file.
"""

from __future__ import annotations

import hashlib
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .algebra import CROSS_VERTEX, STEP1_OPERATORS, BRANCH_OPERATORS, DomainSet, Op, RelationAtom, atom_ids
from .derivation import BranchMode, CombinationPolicy, DerivationResult, RelationSet, derive, group_atoms_by_vertex
from .errors import ConfigurationError, NotComputed
from .executors import executor_from_config, guard_from_config, lookup
from .exprtext import parse_expr
from .graph import BranchGroup, Edge, PipelineGraph, Port, VertexSpec
from .harness import TestGroup

TOP_LEVEL = {"name", "classes", "vertices", "inputs", "edges", "outputs", "branch_groups", "atoms",
             "relation_sets", "policy", "groups"}


class _Map(dict):
    line = None
    key_lines: dict = {}


class _List(list):
    line = None
    item_lines: list = []


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader, node):
    loader.flatten_mapping(node)
    m = _Map()
    m.line = node.start_mark.line + 1
    m.key_lines = {}
    for knode, vnode in node.value:
        key = loader.construct_object(knode, deep=True)
        if key in m:
            raise ConfigurationError(f"duplicate key {key!r}", knode.start_mark.line + 1)
        m[key] = loader.construct_object(vnode, deep=True)
        m.key_lines[key] = knode.start_mark.line + 1
    return m


def _construct_seq(loader, node):
    seq = _List(loader.construct_object(n, deep=True) for n in node.value)
    seq.line = node.start_mark.line + 1
    seq.item_lines = [n.start_mark.line + 1 for n in node.value]
    return seq


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


def _line(obj, key=None):
    if key is not None and isinstance(obj, _Map) and key in obj.key_lines:
        return obj.key_lines[key]
    return getattr(obj, "line", None)


def _need(m, key, where, kind=None):
    if not isinstance(m, dict) or key not in m:
        raise ConfigurationError(f"{where}: missing '{key}'", _line(m))
    value = m[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigurationError(f"{where}: '{key}' must be a {kind.__name__}", _line(m, key))
    return value


def _as_list(value, where, line):
    if value is None:
        return []
    if isinstance(value, str):
        return [value]
    if not isinstance(value, list):
        raise ConfigurationError(f"{where} must be a list", line)
    return list(value)


@dataclass
class PipelineSpec:
    name: str
    classes: DomainSet
    graph: PipelineGraph
    atoms: dict
    relation_sets: list
    policy: CombinationPolicy
    cap: int
    group_configs: list
    base_dir: Path
    source: str = "<string>"
    raw: dict = field(default_factory=dict, repr=False)

    def derive(self) -> DerivationResult:
        return derive(self.graph, self.relation_sets, self.policy, self.cap, atoms=self.atoms, universe=self.classes)

    def groups(self, workdir, seed: Optional[int] = None) -> list:
        """Materialize test groups; generated inputs are written under ``workdir/inputs``."""
        out = []
        for cfg in self.group_configs:
            out.extend(_materialize(cfg, self, Path(workdir), seed))
        ids = [g.id for g in out]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ConfigurationError(f"duplicate test group ids: {', '.join(dup)}")
        return out


def _domain(value, classes: DomainSet, where, line) -> DomainSet:
    if value in (None, "all", "*"):
        return classes
    tags = _as_list(value, where, line)
    unknown = [t for t in tags if t not in classes]
    if unknown:
        raise ConfigurationError(f"{where}: undeclared class(es) {', '.join(map(str, unknown))}", line)
    return DomainSet(tags)


def _builtin_verdict(name, params, vertex):
    fn = lookup("verdict", name)

    def verdict(ctx):
        return fn(ctx, vertex, params)

    try:
        mfn = lookup("metric", name)
    except ConfigurationError:
        return verdict, None

    def metric(ctx):
        return mfn(ctx, vertex, params)

    return verdict, metric


def _command_verdict(template, reads, graph):
    """External checker: exit 0 = holds, 1 = violated, other = not computed."""

    def verdict(ctx):
        files = []
        for k in range(ctx.n):
            for v in reads:
                for port in graph.vertices[v].outputs:
                    files.append(shlex.quote(str(ctx.output(v, port, k))))
        cmd = template.format(files=" ".join(files), n=ctx.n, group=shlex.quote(ctx.group.id),
                              **{"class": shlex.quote(ctx.class_tag)})
        proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
        if proc.returncode in (0, 1):
            return proc.returncode == 0
        raise NotComputed(f"checker exit {proc.returncode}: {proc.stderr.strip()[-300:]}")

    return verdict


def _vertices(doc, classes):
    vs = _need(doc, "vertices", "spec", dict)
    out = []
    for vid, cfg in vs.items():
        where = f"vertex {vid}"
        line = _line(vs, vid)
        if not isinstance(cfg, dict):
            raise ConfigurationError(f"{where}: expected a mapping", line)
        unknown = set(cfg) - {"inputs", "outputs", "executor", "branch_group", "description"}
        if unknown:
            raise ConfigurationError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}", _line(cfg))
        executor = None
        if cfg.get("executor") is not None:
            try:
                executor = executor_from_config(cfg["executor"])
            except ConfigurationError as exc:
                raise ConfigurationError(f"{where}: {exc}", _line(cfg, "executor")) from None
        out.append(VertexSpec(str(vid), [str(p) for p in _as_list(cfg.get("inputs"), where, line)],
                              [str(p) for p in _as_list(cfg.get("outputs"), where, line)],
                              executor, cfg.get("branch_group")))
    return out


def _ports(values, where, line):
    try:
        return [Port.parse(str(p)) for p in _as_list(values, where, line)]
    except ConfigurationError as exc:
        raise ConfigurationError(f"{where}: {exc}", line) from None


def _graph(doc, classes) -> PipelineGraph:
    vertices = _vertices(doc, classes)
    edges_raw = doc.get("edges") or _List()
    edges = []
    for i, text in enumerate(_as_list(edges_raw, "edges", _line(doc, "edges"))):
        line = edges_raw.item_lines[i] if isinstance(edges_raw, _List) else None
        try:
            edges.append(Edge.parse(str(text)))
        except ConfigurationError as exc:
            raise ConfigurationError(str(exc), line) from None
    inputs = {}
    raw_inputs = doc.get("inputs") or {}
    for name, ports in raw_inputs.items():
        inputs[str(name)] = _ports(ports, f"input {name}", _line(raw_inputs, name))
    outputs = _ports(doc.get("outputs"), "outputs", _line(doc, "outputs"))
    groups = []
    raw_groups = doc.get("branch_groups") or {}
    for name, cfg in raw_groups.items():
        where = f"branch group {name}"
        members = tuple(str(m) for m in _as_list(_need(cfg, "members", where), where, _line(cfg, "members")))
        taken = {}
        for m, tags in (cfg.get("taken") or {}).items():
            taken[str(m)] = frozenset(_domain(tags, classes, f"{where} taken[{m}]", _line(cfg, "taken")))
        try:
            guard = guard_from_config(cfg.get("guard"))
        except ConfigurationError as exc:
            raise ConfigurationError(f"{where}: {exc}", _line(cfg, "guard")) from None
        groups.append(BranchGroup(str(name), members, guard, taken))
    graph = PipelineGraph(vertices, edges, inputs, outputs, groups)
    errors = graph.validate()
    if errors:
        raise ConfigurationError("invalid pipeline graph: " + "; ".join(errors), _line(doc, "vertices"))
    return graph


def _atoms(doc, classes, graph) -> dict:
    raw = _need(doc, "atoms", "spec", dict)
    atoms = {}
    for aid, cfg in raw.items():
        aid = str(aid)
        where = f"atom {aid}"
        line = _line(raw, aid)
        if not isinstance(cfg, dict):
            raise ConfigurationError(f"{where}: expected a mapping", line)
        unknown = set(cfg) - {"vertex", "domain", "verdict", "reads", "arity", "description"}
        if unknown:
            raise ConfigurationError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}", _line(cfg))
        vertex = str(_need(cfg, "vertex", where))
        if vertex != CROSS_VERTEX and vertex not in graph.vertices:
            raise ConfigurationError(f"{where}: unknown vertex {vertex!r}", _line(cfg, "vertex"))
        reads = tuple(str(v) for v in _as_list(cfg.get("reads"), where, _line(cfg, "reads")))
        bad = [v for v in reads if v not in graph.vertices]
        if bad:
            raise ConfigurationError(f"{where}: reads unknown vertices {', '.join(bad)}", _line(cfg, "reads"))
        domain = _domain(cfg.get("domain"), classes, where, _line(cfg, "domain"))
        vcfg = _need(cfg, "verdict", where)
        metric = None
        try:
            if isinstance(vcfg, str):
                verdict, metric = _builtin_verdict(vcfg, {}, vertex)
            elif isinstance(vcfg, dict) and "builtin" in vcfg:
                verdict, metric = _builtin_verdict(vcfg["builtin"], dict(vcfg.get("params") or {}), vertex)
            elif isinstance(vcfg, dict) and "command" in vcfg:
                verdict = _command_verdict(vcfg["command"], reads or (vertex,), graph)
            else:
                raise ConfigurationError("verdict needs a built-in name or 'command'")
            atoms[aid] = RelationAtom(aid, vertex, domain, verdict, int(cfg.get("arity", 2)), reads,
                                      str(cfg.get("description", "")), metric)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{where}: {exc}", _line(cfg, "verdict") if "verdict" in cfg else line) from None
    return atoms


def _relation_sets(doc, atoms, graph) -> list:
    raw = doc.get("relation_sets")
    if not raw:
        return group_atoms_by_vertex(atoms)
    sets = []
    for vertex, exprs in raw.items():
        vertex = str(vertex)
        line = _line(raw, vertex)
        if vertex != CROSS_VERTEX and vertex not in graph.vertices:
            raise ConfigurationError(f"relation set for unknown vertex {vertex!r}", line)
        parsed = []
        for text in _as_list(exprs, f"relation set {vertex}", line):
            try:
                e = parse_expr(str(text))
            except ConfigurationError as exc:
                raise ConfigurationError(str(exc), line) from None
            missing = [a for a in atom_ids(e) if a not in atoms]
            if missing:
                raise ConfigurationError(f"relation set {vertex}: unknown atom(s) {', '.join(missing)}", line)
            parsed.append(e)
        sets.append(RelationSet(vertex, parsed))
    have = {s.vertex for s in sets}
    if CROSS_VERTEX not in have:
        cross = [a for a in atoms.values() if a.cross_vertex]
        if cross:
            sets.extend(s for s in group_atoms_by_vertex({a.id: a for a in cross}))
    return sets


def _ops(values, default, where, line):
    if values is None:
        return default
    try:
        return tuple(Op.from_text(str(v)) for v in _as_list(values, where, line))
    except KeyError as exc:
        raise ConfigurationError(f"{where}: unknown operator {exc}", line) from None


def _policy(doc):
    raw = doc.get("policy") or {}
    unknown = set(raw) - {"mode", "operators", "branch_operators", "extension_rounds", "max_set_size",
                          "max_candidates", "cap"}
    if unknown:
        raise ConfigurationError(f"policy: unknown field(s) {', '.join(sorted(unknown))}", _line(raw))
    try:
        mode = BranchMode(str(raw.get("mode", "joint")).replace("_", "-"))
    except ValueError:
        raise ConfigurationError("policy: mode must be 'joint' or 'per-branch'", _line(raw, "mode")) from None
    policy = CombinationPolicy(
        operators=_ops(raw.get("operators"), STEP1_OPERATORS, "policy.operators", _line(raw, "operators")),
        branch_operators=_ops(raw.get("branch_operators"), BRANCH_OPERATORS, "policy.branch_operators",
                              _line(raw, "branch_operators")),
        extension_rounds=int(raw.get("extension_rounds", 1)),
        max_set_size=int(raw.get("max_set_size", 32)),
        max_candidates=int(raw.get("max_candidates", 4096)),
        mode=mode,
    )
    return policy, int(raw.get("cap", 256))


def load_spec_text(text: str, base_dir=".", source: str = "<string>", overrides: Optional[dict] = None) -> PipelineSpec:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigurationError(f"YAML syntax: {exc.problem}", mark.line + 1 if mark else None) from None
    if not isinstance(doc, dict):
        raise ConfigurationError("spec must be a mapping at top level", 1)
    for key, value in (overrides or {}).items():
        doc[key] = value
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigurationError(f"unknown top-level key {key!r}", _line(doc, key))
    raw_classes = _need(doc, "classes", "spec")
    classes = DomainSet(str(c) for c in _as_list(raw_classes, "classes", _line(doc, "classes")))
    if classes.is_empty():
        raise ConfigurationError("at least one input class must be declared", _line(doc, "classes"))
    graph = _graph(doc, classes)
    atoms = _atoms(doc, classes, graph)
    sets = _relation_sets(doc, atoms, graph)
    policy, cap = _policy(doc)
    groups = doc.get("groups") or []
    for g in groups:
        _check_group_config(g, classes)
    return PipelineSpec(str(doc.get("name", Path(source).stem)), classes, graph, atoms, sets, policy, cap,
                        list(groups), Path(base_dir), source, doc)


def load_spec(path, overrides: Optional[dict] = None) -> PipelineSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read spec {path}: {exc.strerror}") from None
    return load_spec_text(text, path.parent, str(path), overrides)


def _check_group_config(cfg, classes):
    if not isinstance(cfg, dict):
        raise ConfigurationError("group entry must be a mapping", _line(cfg))
    if "generator" in cfg:
        for tag in _as_list(cfg.get("classes") or classes.sorted(), "generator classes", _line(cfg, "classes")):
            if tag not in classes:
                raise ConfigurationError(f"generator: undeclared class {tag!r}", _line(cfg, "classes"))
        gen = cfg["generator"]
        name = gen if isinstance(gen, str) else gen.get("builtin")
        lookup("generator", name)
        return
    _need(cfg, "id", "group")
    tag = _need(cfg, "class", f"group {cfg['id']}")
    if tag not in classes:
        raise ConfigurationError(f"group {cfg['id']}: undeclared class {tag!r}", _line(cfg, "class"))
    _need(cfg, "inputs", f"group {cfg['id']}", list)


def group_seed(seed: int, tag: str, index: int) -> int:
    digest = hashlib.sha256(f"{seed}:{tag}:{index}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _materialize(cfg, spec: PipelineSpec, workdir: Path, seed: Optional[int]):
    if "generator" not in cfg:
        inputs = []
        for bundle in cfg["inputs"]:
            inputs.append({k: str((spec.base_dir / str(v)).resolve()) for k, v in bundle.items()})
        return [TestGroup(str(cfg["id"]), str(cfg["class"]), inputs, dict(cfg.get("metadata") or {}))]
    gen = cfg["generator"]
    name = gen if isinstance(gen, str) else gen["builtin"]
    params = {} if isinstance(gen, str) else dict(gen.get("params") or {})
    fn = lookup("generator", name)
    base_seed = int(seed if seed is not None else cfg.get("seed", 0))
    groups = []
    for tag in cfg.get("classes") or spec.classes.sorted():
        for i in range(int(cfg.get("count", 1))):
            gid = f"{tag}-{i:02d}"
            out = workdir / "inputs" / gid
            out.mkdir(parents=True, exist_ok=True)
            inputs, meta = fn(params, tag, i, group_seed(base_seed, tag, i), out)
            meta = dict(meta, seed=base_seed, generator=name)
            groups.append(TestGroup(gid, tag, inputs, meta))
    return groups
