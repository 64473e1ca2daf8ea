"""Command-line entry point: ``run``, ``gen`` and ``fit``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from typing import List, Optional, Sequence, Tuple

from .density import (
    DEFAULT_THRESHOLD_ERROR,
    PiecewiseDensity,
    connect_classes,
    linearize,
    normalize_density,
    write_density_csv,
)
from .harness import (
    ContextualAgent,
    SyntheticConfig,
    generate_synthetic_log,
    load_event_log,
    replay_evaluate,
    simulate_evaluate,
    write_log,
    write_report,
)
from .policies import CONVENTIONAL, KINDS, LITERAL, PolicyConfig
from .situation import DEFAULT_SIMILARITY_FLOOR, OntologySet, default_ontologies

log = logging.getLogger("linbandit")


def _load_synthetic(value: str) -> SyntheticConfig:
    return SyntheticConfig() if value == "default" else SyntheticConfig.from_file(value)


def _ontologies(directory: Optional[str]) -> OntologySet:
    return OntologySet.from_dir(directory) if directory else default_ontologies()


def cmd_run(args: argparse.Namespace) -> int:
    config = PolicyConfig(
        kind=args.policy,
        epsilon=args.epsilon,
        epsilon0=args.epsilon0,
        horizon=args.horizon,
        batch=args.batch,
        a=args.a,
        b=args.b,
        utility_variant=args.utility_variant,
        threshold_error=args.threshold_error,
        grid_size=args.grid_size,
        fallback_epsilon=args.fallback_epsilon,
        window=args.window,
        branch=args.branch,
    )
    ontologies = _ontologies(args.ontology_dir)
    agent = ContextualAgent(config, args.seed, ontologies, args.similarity_floor)
    echo = config.to_dict()
    echo["similarity_floor"] = args.similarity_floor
    if args.log:
        report = replay_evaluate(agent, load_event_log(args.log), seed=args.seed, policy=echo)
    else:
        stream = generate_synthetic_log(_load_synthetic(args.synthetic), args.seed, ontologies)
        report = simulate_evaluate(agent, stream, policy=echo)
    write_report(report, args.out, args.format)
    if report.no_overlap:
        log.warning("no-overlap: the policy never matched a logged display; CTR undefined")
    else:
        log.info("final CTR %.6f over %d evaluated rounds", report.final_ctr, report.evaluated_rounds)
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    stream = generate_synthetic_log(_load_synthetic(args.synthetic), args.seed, _ontologies(args.ontology_dir))
    write_log(stream.records, args.out)
    if args.latent:
        with open(args.latent, "w") as fh:
            json.dump({"latent_ctr": stream.latent, "arrival": stream.arrivals}, fh, sort_keys=True, indent=1)
            fh.write("\n")
    log.info("wrote %d records to %s", len(stream), args.out)
    return 0


def read_points(path: str) -> List[Tuple[float, float]]:
    points = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns 's,p'")
            try:
                points.append((float(row[0]), float(row[1])))
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    if not points:
        raise ValueError(f"{path}: no points")
    return sorted(points)


def cmd_fit(args: argparse.Namespace) -> int:
    classes = linearize(read_points(args.points), args.threshold_error)
    liaisons = connect_classes(classes) if len(classes) > 1 else []
    if args.no_normalize:
        density = PiecewiseDensity(classes, liaisons)
    else:
        density = normalize_density(classes, liaisons)
    write_density_csv(density, args.out)
    log.info("%d linear classes written to %s", len(classes), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linbandit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate a policy on a log (replay) or a synthetic stream")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--log", help="line-delimited JSON event log")
    source.add_argument("--synthetic", help="synthetic config JSON, or 'default'")
    run.add_argument("--policy", choices=KINDS, default="linearized")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--epsilon", type=float, default=0.1)
    run.add_argument("--epsilon0", type=float, default=1.0)
    run.add_argument("--horizon", type=int, default=1000)
    run.add_argument("--batch", type=int, default=100)
    run.add_argument("--a", type=float, default=1.0)
    run.add_argument("--b", type=float, default=1.0)
    run.add_argument("--utility-variant", choices=("eq11", "eq16"), default="eq11")
    run.add_argument("--threshold-error", type=float, default=DEFAULT_THRESHOLD_ERROR)
    run.add_argument("--grid-size", type=int, default=1024)
    run.add_argument("--fallback-epsilon", type=float, default=0.5)
    run.add_argument("--window", type=int, default=10_000)
    run.add_argument("--branch", choices=(LITERAL, CONVENTIONAL), default=LITERAL)
    run.add_argument("--similarity-floor", type=float, default=DEFAULT_SIMILARITY_FLOOR)
    run.add_argument("--ontology-dir", help="directory with location.tsv, time.tsv, social.tsv")
    run.add_argument("--out", required=True)
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen", help="write a synthetic event log")
    gen.add_argument("--synthetic", required=True, help="synthetic config JSON, or 'default'")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--ontology-dir")
    gen.add_argument("--out", required=True)
    gen.add_argument("--latent", help="also write the hidden latent CTR table here")
    gen.set_defaults(func=cmd_gen)

    fit = sub.add_parser("fit", help="linearize a CSV of s,p points into a segment table")
    fit.add_argument("--points", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--threshold-error", type=float, default=DEFAULT_THRESHOLD_ERROR)
    fit.add_argument("--no-normalize", action="store_true")
    fit.set_defaults(func=cmd_fit)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"linbandit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
