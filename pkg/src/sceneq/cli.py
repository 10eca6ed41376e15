"""Command-line entry point.

Subcommands: ingest, query, serve, synth, report. --format json switches
human-readable summaries to machine-readable records.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import SceneqError


def _cmd_ingest(args) -> int:
    from .storage import active_domains, ingest_dataset

    db = ingest_dataset(Path(args.manifest))
    onames, rnames, anames = active_domains(db)
    summary = {
        "videos": len(db.vids),
        "frames": len(db.frames),
        "objects": len(db.objects),
        "relationships": len(db.relationships),
        "attributes": len(db.attributes),
        "onames": sorted(onames),
        "rnames": sorted(rnames),
        "anames": sorted(anames),
    }
    if args.format == "json":
        print(json.dumps(summary, indent=2))
    else:
        print(f"ingested {summary['videos']} videos: "
              f"{summary['frames']} frames, {summary['objects']} objects, "
              f"{summary['relationships']} relationships, "
              f"{summary['attributes']} attributes")
    return 0


def _cmd_query(args) -> int:
    from .modelgen import DistillConfig
    from .orchestrator import PipelineConfig, run_query
    from .programgen import ProgramGenConfig
    from .selection import SelectionConfig

    if args.config:
        config = PipelineConfig.from_file(Path(args.config))
    else:
        config = PipelineConfig(
            manifest=Path(args.manifest),
            strategy=args.strategy,
            labeler=args.labeler,
            fixtures=Path(args.fixtures) if args.fixtures else None,
            seed=args.seed,
            selection=SelectionConfig(b=args.budget, seed=args.seed),
            programgen=ProgramGenConfig(seed=args.seed),
            distill=DistillConfig(seed=args.seed),
            generation_enabled=not args.no_generation,
        )
    result = run_query(args.text, config)
    if args.out:
        Path(args.out).write_text(result.to_json(include_timings=True) + "\n")
    if args.format == "json":
        print(result.to_json())
    else:
        print(f"dsl: {result.dsl_text}")
        print(f"matched vids: {result.matched_vids}")
        for g in result.generated:
            flag = " (dummied)" if g["dummied"] else ""
            print(f"generated {g['name']} as {g['kind']}{flag}")
    return 0


def _cmd_serve(args) -> int:
    from .modelgen import DistillConfig
    from .orchestrator import PipelineConfig
    from .programgen import ProgramGenConfig
    from .selection import SelectionConfig
    from .service import serve

    if args.config:
        config = PipelineConfig.from_file(Path(args.config))
    else:
        config = PipelineConfig(
            manifest=Path(args.manifest),
            labeler="interactive",
            fixtures=Path(args.fixtures) if args.fixtures else None,
            seed=args.seed,
            selection=SelectionConfig(seed=args.seed),
            programgen=ProgramGenConfig(seed=args.seed),
            distill=DistillConfig(seed=args.seed),
        )
    serve(config, port=args.port, host=args.host)
    return 0


def _cmd_synth(args) -> int:
    from .testkit import SyntheticSpec, generate

    spec = SyntheticSpec(seed=args.seed, n_videos=args.videos,
                         n_frames=args.frames, n_objects=args.objects,
                         render_images=args.images)
    manifest = generate(spec, Path(args.out),
                        exclude_concepts=args.exclude or [])
    if args.format == "json":
        print(json.dumps({"manifest": str(manifest)}))
    else:
        print(f"wrote {manifest}")
    return 0


def _cmd_report(args) -> int:
    record = json.loads(Path(args.result_file).read_text())
    if args.format == "json":
        print(json.dumps(record, indent=2, sort_keys=True))
        return 0
    print(f"query: {record.get('nl_text', '')}")
    print(f"dsl:   {record.get('dsl_text', '')}")
    print(f"vids:  {record.get('matched_vids', [])}")
    for g in record.get("generated", []):
        flag = " (dummied)" if g.get("dummied") else ""
        print(f"  built {g['name']}: {g['kind']}{flag}")
    for rep in record.get("selection_reports", []):
        print(f"  selection for {rep.get('chosen', '?')}: "
              f"{rep.get('budget_used', 0)} labels, "
              f"weights {rep.get('weights', [])}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneq",
        description="compositional video event queries over scene graphs")
    parser.add_argument("--format", choices=("text", "json"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and validate a dataset")
    p.add_argument("manifest")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("query", help="run a natural-language query")
    p.add_argument("text")
    p.add_argument("--manifest", required=False)
    p.add_argument("--config", help="pipeline config file (overrides flags)")
    p.add_argument("--strategy", default="both",
                   choices=("program", "model", "llm", "both"))
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--labeler", default="oracle",
                   choices=("oracle", "interactive", "vlm"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixtures", help="mock client fixture file")
    p.add_argument("--no-generation", action="store_true",
                   help="dummy out missing predicates instead of building")
    p.add_argument("--out", help="write the full result record here")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("serve", help="run the labeling API server")
    p.add_argument("--manifest")
    p.add_argument("--config")
    p.add_argument("--fixtures")
    p.add_argument("--port", type=int, default=8230)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=10)
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--objects", type=int, default=5)
    p.add_argument("--images", action="store_true")
    p.add_argument("--exclude", nargs="*", help="concepts to omit rows for")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="pretty-print a saved query result")
    p.add_argument("result_file")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "query" and not args.config and not args.manifest:
        parser.error("query needs --manifest or --config")
    try:
        return args.func(args)
    except SceneqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
