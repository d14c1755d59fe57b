"""Command-line entry point: ``compmr derive | run | demo``.

Exit codes: 0 all composites hold, 1 a composite is FALSE, 2 configuration
error, 3 derivation found no candidate.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .algebra import atom_ids, domain_of
from .derivation import BranchMode, CompositeCandidate, DerivationResult, is_robust
from .errors import CompMRError
from .exprtext import canonical_text, parse_expr, to_symbolic, to_text
from .harness import evaluate, report, run_groups
from .specfile import load_spec, load_spec_text

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_EXHAUSTED = 0, 1, 2, 3
WORKDIR_ENV = "COMPMR_WORKDIR"
SPEC_DIR = Path(__file__).parent / "specs"
DEMO_MARKER = ".compmr-demo"
DEFAULT_FAULT_VERTEX = "strelka2-germline-tumor"


def default_workdir(name: str) -> Path:
    return Path(os.environ.get(WORKDIR_ENV, "compmr-work")) / name


def _load(spec_path, mode=None):
    spec = load_spec(spec_path)
    if mode:
        spec.policy = replace(spec.policy, mode=BranchMode(mode))
    return spec


def candidates_json(result: DerivationResult, graph) -> dict:
    return {
        "selections_total": result.selections_total,
        "selections_tried": result.selections_tried,
        "truncated": result.truncated,
        "exhausted": list(result.exhausted),
        "candidates": [
            {
                "index": i,
                "expr": to_text(c.expr),
                "canonical": canonical_text(c.expr),
                "symbolic": to_symbolic(c.expr),
                "domain": c.domain.sorted(),
                "robust": is_robust(c.expr, graph, result.atoms),
                "provenance": [list(p) for p in c.provenance],
            }
            for i, c in enumerate(result.candidates)
        ],
    }


def cmd_derive(args) -> int:
    spec = _load(args.spec, args.mode)
    result = spec.derive()
    doc = json.dumps(candidates_json(result, spec.graph), indent=1, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(doc)
    if not args.quiet:
        for i, c in enumerate(result.candidates):
            print(f"[{i}] {to_text(c.expr)}    domain={c.domain.sorted()}")
    if not result.candidates:
        print("derivation exhausted: no selection gave a composite with a non-empty domain", file=sys.stderr)
        return EXIT_EXHAUSTED
    return EXIT_OK


def choose_composites(spec, result: DerivationResult, which: str) -> list:
    """Candidates to evaluate: 'auto', comma-separated indices, or an expression."""
    if which in (None, "", "auto"):
        chosen = []
        for tag in spec.classes.sorted():
            pool = [c for c in result.candidates if tag in c.domain]
            robust = [c for c in pool if is_robust(c.expr, spec.graph, result.atoms)]
            ranked = sorted(robust or pool, key=lambda c: -len(c.domain))  # stable: keeps derivation order
            pick = ranked[0] if ranked else None
            if pick is not None and pick not in chosen:
                chosen.append(pick)
        return chosen
    if all(part.strip().isdigit() for part in which.split(",")):
        out = []
        for part in which.split(","):
            i = int(part)
            if i >= len(result.candidates):
                raise CompMRError(f"composite index {i} out of range (0..{len(result.candidates) - 1})")
            out.append(result.candidates[i])
        return out
    expr = parse_expr(which)
    found = result.find(expr)
    if found is not None:
        return [found]
    atoms = result.atoms or spec.atoms
    missing = [a for a in atom_ids(expr) if a not in atoms]
    if missing:
        raise CompMRError(f"composite uses unknown atoms: {', '.join(missing)}")
    return [CompositeCandidate(expr, domain_of(expr, spec.classes, atoms), (("user", which),), atoms)]


def cmd_run(args) -> int:
    spec = _load(args.spec, args.mode)
    result = spec.derive()
    if not result.candidates and not (args.composite and not args.composite.replace(",", "").isdigit()):
        print("derivation exhausted: nothing to run", file=sys.stderr)
        return EXIT_EXHAUSTED
    composites = choose_composites(spec, result, args.composite)
    workdir = Path(args.workdir or default_workdir(spec.name))
    groups = spec.groups(workdir, args.seed)
    plan = [(g, c) for g in groups for c in composites if g.class_tag in c.domain]
    if not plan:
        print("error: no applicable test groups for the chosen composite(s)", file=sys.stderr)
        return EXIT_CONFIG
    run = sorted({g.id: g for g, _ in plan}.values(), key=lambda g: g.id)
    traces = dict(zip([g.id for g in run], run_groups(spec.graph, run, workdir, args.parallel)))
    verdicts = [evaluate(c, g, traces[g.id], spec.graph) for g, c in plan]
    rep = report(verdicts)
    out = Path(args.out) if args.out else workdir / "report"
    rep.write(out)
    print(rep.to_text(), end="")
    print(f"report written to {out}")
    return EXIT_FAILED if any(v.composite_value.is_false for v in verdicts) else EXIT_OK


# -- demos -------------------------------------------------------------------------


def _fresh(workdir: Path) -> Path:
    if workdir.exists() and any(workdir.iterdir()):
        if not (workdir / DEMO_MARKER).exists():
            raise CompMRError(f"workdir {workdir} is not empty and was not created by a demo")
        shutil.rmtree(workdir)
    workdir.mkdir(parents=True)
    (workdir / DEMO_MARKER).write_text("")
    return workdir


def demo_spec(args) -> tuple:
    """(spec document, name) for a built-in demo with the variant flags applied."""
    if args.name == "detector":
        fname = "detector4.yaml" if args.four_component else (
            "detector3_starred.yaml" if args.starred else "detector3.yaml")
        doc = yaml.safe_load((SPEC_DIR / fname).read_text())
        if args.mode:
            doc.setdefault("policy", {})["mode"] = args.mode
        return doc, Path(fname).stem
    doc = yaml.safe_load((SPEC_DIR / "genomics.yaml").read_text())
    params = {}
    if args.noise is not None:
        params["noise_rate"] = args.noise
    if args.coverage is not None:
        params["coverage_depth"] = args.coverage
    if args.series_length is not None:
        params["series_length"] = args.series_length
    if args.reference:
        params["reference_path"] = str(Path(args.reference).resolve())
    gen = {"generator": {"builtin": "genomics.series", "params": params}, "count": args.count}
    if args.kind != "both":
        gen["classes"] = [f"add-{args.kind}"]
    doc["groups"] = [gen]
    name = f"genomics-{args.kind}"
    if args.fault:
        from .genomics.components import Fault, inject_fault

        kind, _, vertex = args.fault.partition(":")
        ex = inject_fault(vertex or DEFAULT_FAULT_VERTEX, Fault.parse(kind))
        doc["vertices"][vertex or DEFAULT_FAULT_VERTEX]["executor"] = {"builtin": ex.name, "params": dict(ex.params)}
        name += f"-{kind}"
    return doc, name


def cmd_demo(args) -> int:
    doc, name = demo_spec(args)
    workdir = _fresh(Path(args.workdir) if args.workdir else default_workdir(f"demo-{name}"))
    spec_file = workdir / "spec.yaml"
    spec_file.write_text(yaml.safe_dump(doc, sort_keys=False))
    load_spec_text(spec_file.read_text(), workdir, str(spec_file))  # fail early, with line numbers
    print(f"== derive ({spec_file})")
    ns = argparse.Namespace(spec=spec_file, out=workdir / "candidates.json", mode=None, quiet=False)
    code = cmd_derive(ns)
    if code != EXIT_OK:
        return code
    print("== run")
    ns = argparse.Namespace(spec=spec_file, composite=args.composite, workdir=workdir, out=workdir / "report",
                            parallel=args.parallel, seed=args.seed, mode=None)
    return cmd_run(ns)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="compmr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive", help="derive composite relations from a pipeline spec")
    d.add_argument("--spec", required=True, type=Path)
    d.add_argument("--out", type=Path, help="write candidates as JSON here")
    d.add_argument("--mode", choices=[m.value for m in BranchMode])
    d.add_argument("--quiet", action="store_true")
    d.set_defaults(func=cmd_derive)

    r = sub.add_parser("run", help="execute test groups and evaluate composites")
    r.add_argument("--spec", required=True, type=Path)
    r.add_argument("--composite", default="auto", help="'auto', candidate index/indices, or an expression")
    r.add_argument("--workdir", type=Path, help=f"default: ${WORKDIR_ENV}/<spec name>")
    r.add_argument("--out", type=Path, help="report directory (default: <workdir>/report)")
    r.add_argument("--parallel", type=int, default=1)
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", choices=[m.value for m in BranchMode])
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("demo", help="run a built-in case study end to end")
    m.add_argument("name", help="detector | genomics")
    m.add_argument("--four-component", action="store_true", help="detector: add the pre-detector branch")
    m.add_argument("--starred", action="store_true", help="detector: use K*/D* relations")
    m.add_argument("--mode", choices=[x.value for x in BranchMode])
    m.add_argument("--kind", choices=["insertions", "deletions", "both"], default="both")
    m.add_argument("--fault", help="KIND[:VERTEX]; KIND is drop-edge, offset or swallow")
    m.add_argument("--noise", type=float)
    m.add_argument("--coverage", type=float)
    m.add_argument("--series-length", type=int)
    m.add_argument("--reference", help="genomics: nucleotide text/FASTA file to use as reference")
    m.add_argument("--count", type=int, default=1, help="genomics: series per class")
    m.add_argument("--composite", default="auto")
    m.add_argument("--workdir", type=Path)
    m.add_argument("--parallel", type=int, default=1)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "demo" and args.name not in ("detector", "genomics"):
        print(f"error: unknown demo {args.name!r} (choose detector or genomics)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CompMRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
