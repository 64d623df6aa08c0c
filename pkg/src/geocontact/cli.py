"""Command line entry point: featurize | train | predict | eval.

Exit codes: 0 success, 2 usage or precondition failure, 3 parse failure,
4 numerical failure, 5 checkpoint/input incompatibility.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import geometry
from .exceptions import (
    CheckpointError,
    ConfigError,
    DegenerateGeometryError,
    DimensionError,
    EmptyStructureError,
    GraphFormatError,
    IncompatibleModelError,
    NumericalError,
    PDBParseError,
)
from .graph import assemble_chain_graph, atomic_write_text, load_graph, save_graph
from .interaction import format_matrix_csv, read_matrix_csv, write_contact_csv, write_contact_pgm
from .metrics import topk_report
from .model import ContactModel
from .structio import derive_contact_labels, read_pdb
from .training import RunConfig, Sample, train

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERIC, EXIT_INCOMPATIBLE = 0, 2, 3, 4, 5

log = logging.getLogger("geocontact")


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _configure_logging():
    level = os.environ.get("GEOT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _split(value):
    return [v for v in value.split(",") if v] if value else []


def _read_features(path):
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise CommandError(f"cannot read feature file {path}: {exc}", EXIT_USAGE) from None


def _load_config(path, seed=None):
    try:
        config = RunConfig.from_json(path) if path else RunConfig()
        if seed is not None:
            config = RunConfig.from_dict({**config.to_dict(), "seed": seed})
    except (OSError, ConfigError) as exc:
        raise CommandError(str(exc), EXIT_USAGE) from None
    return config


def cmd_featurize(args):
    chain_ids = _split(args.chains)
    outputs = _split(args.out)
    if not chain_ids or len(outputs) != len(chain_ids):
        raise CommandError("--chains and --out must list the same number of entries", EXIT_USAGE)
    feature_paths = _split(args.features)
    if feature_paths and len(feature_paths) != len(chain_ids):
        raise CommandError("--features must give one file per chain", EXIT_USAGE)
    k = _load_config(args.config).knn_k if args.k is None else args.k
    try:
        chains = {c.chain_id: c for c in read_pdb(args.pdb)}
    except OSError as exc:
        raise CommandError(f"cannot read {args.pdb}: {exc}", EXIT_USAGE) from None
    except (PDBParseError, EmptyStructureError) as exc:
        raise CommandError(f"{args.pdb}: {exc}", EXIT_PARSE) from None

    selected = []
    for cid in chain_ids:
        if cid not in chains:
            raise CommandError(f"chain {cid!r} not found in {args.pdb} (available: {', '.join(sorted(chains))})", EXIT_USAGE)
        chain = chains[cid]
        if len(chain) < 2:
            raise CommandError(f"chain {cid!r} too short: {len(chain)} residue(s), minimum 2", EXIT_USAGE)
        selected.append(chain)

    for i, (chain, out) in enumerate(zip(selected, outputs)):
        features = _read_features(feature_paths[i]) if feature_paths else None
        try:
            graph = assemble_chain_graph(chain, features, k=k)
        except DimensionError as exc:
            raise CommandError(str(exc), EXIT_USAGE) from None
        if chain.dropped_residues:
            print(f"chain {chain.chain_id}: dropped {chain.dropped_residues} residue(s) missing CA or N", file=sys.stderr)
        try:
            frames = geometry.backbone_frames(chain.ca_coords)
            degenerate = max(0, sum(f.degenerate for f in frames) - 2)
        except DegenerateGeometryError:
            degenerate = len(chain)
        if degenerate:
            print(f"chain {chain.chain_id}: {degenerate} degenerate backbone frame(s) replaced", file=sys.stderr)
        save_graph(graph, out)
        log.info("wrote %s (%d nodes, %d edges)", out, graph.num_nodes, graph.num_edges)

    if args.labels:
        if len(selected) != 2:
            raise CommandError("--labels needs exactly two chains", EXIT_USAGE)
        labels = derive_contact_labels(selected[0], selected[1], threshold=args.threshold)
        atomic_write_text(args.labels, "".join(",".join(str(int(v)) for v in row) + "\n" for row in labels))
    return EXIT_OK


def _read_list(path):
    records = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise CommandError(f"{path}:{lineno}: expected graph_a<TAB>graph_b<TAB>labels", EXIT_USAGE)
                records.append(parts)
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc}", EXIT_USAGE) from None
    base = os.path.dirname(os.path.abspath(path))
    return [[p if os.path.isabs(p) else os.path.join(base, p) for p in rec] for rec in records]


def _load_samples(path):
    samples = []
    for ga_path, gb_path, lab_path in _read_list(path):
        try:
            ga, gb = load_graph(ga_path), load_graph(gb_path)
            labels = read_matrix_csv(lab_path).astype(np.int8)
        except (OSError, GraphFormatError, DimensionError, ValueError) as exc:
            raise CommandError(str(exc), EXIT_PARSE) from None
        if labels.shape != (ga.num_nodes, gb.num_nodes):
            raise CommandError(f"{lab_path}: label shape {labels.shape} != ({ga.num_nodes}, {gb.num_nodes})", EXIT_USAGE)
        samples.append(Sample(ga, gb, labels, os.path.basename(lab_path)))
    return samples


def _sibling(path, suffix):
    stem = path[:-5] if path.endswith(".geot") else path
    return f"{stem}{suffix}"


def cmd_train(args):
    config = _load_config(args.config, args.seed)
    train_samples = _load_samples(args.train)
    if not train_samples:
        raise CommandError("training list is empty", EXIT_USAGE)
    val_samples = _load_samples(args.val) if args.val else None
    width = train_samples[0].graph_a.node_features.shape[1]
    if args.init:
        try:
            model = ContactModel.load(args.init)
        except (OSError, CheckpointError) as exc:
            raise CommandError(f"cannot load {args.init}: {exc}", EXIT_INCOMPATIBLE) from None
    else:
        model = ContactModel(config.geoformer_config(width), config.resnet_config(), seed=config.seed)
    try:
        for s in train_samples + (val_samples or []):
            model.check_graph(s.graph_a)
            model.check_graph(s.graph_b)
    except IncompatibleModelError as exc:
        raise CommandError(str(exc), EXIT_INCOMPATIBLE) from None
    try:
        result = train(model, train_samples, val_samples, config, log_path=_sibling(args.out, ".log.csv"))
    except NumericalError as exc:
        dump = _sibling(args.out, ".failed.geot")
        model.save(dump)
        raise CommandError(f"{exc}; parameters dumped to {dump}", EXIT_NUMERIC) from None
    from .autodiff import checkpoint

    checkpoint.save(args.out, result.best_state)
    if result.swa_state is not None:
        checkpoint.save(_sibling(args.out, ".swa.geot"), result.swa_state)
    print(f"best epoch {result.best_epoch}; checkpoint written to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args):
    try:
        model = ContactModel.load(args.checkpoint)
    except OSError as exc:
        raise CommandError(f"cannot read {args.checkpoint}: {exc}", EXIT_USAGE) from None
    except CheckpointError as exc:
        raise CommandError(f"{args.checkpoint}: {exc}", EXIT_INCOMPATIBLE) from None
    try:
        ga, gb = load_graph(args.graph_a), load_graph(args.graph_b)
    except OSError as exc:
        raise CommandError(str(exc), EXIT_USAGE) from None
    except GraphFormatError as exc:
        raise CommandError(str(exc), EXIT_PARSE) from None
    try:
        probs = model.predict_proba(ga, gb)
    except IncompatibleModelError as exc:
        raise CommandError(str(exc), EXIT_INCOMPATIBLE) from None
    if not np.all(np.isfinite(probs)):
        raise CommandError("prediction produced non-finite values", EXIT_NUMERIC)
    write_contact_csv(args.out, probs)
    if args.pgm:
        write_contact_pgm(args.pgm, probs)
    return EXIT_OK


def cmd_eval(args):
    try:
        pred = read_matrix_csv(args.pred_csv)
        labels = read_matrix_csv(args.label_csv)
    except (OSError, DimensionError, ValueError) as exc:
        raise CommandError(str(exc), EXIT_PARSE) from None
    if pred.shape != labels.shape:
        raise CommandError(f"prediction shape {pred.shape} != label shape {labels.shape}", EXIT_USAGE)
    report = topk_report(pred, labels)
    complex_id = args.id or os.path.splitext(os.path.basename(args.pred_csv))[0]
    sys.stdout.write(report.to_table(complex_id))
    if args.out:
        atomic_write_text(args.out, report.to_csv(complex_id))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="geocontact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="PDB file -> per-chain graph JSON files")
    p.add_argument("pdb")
    p.add_argument("--chains", required=True, help="comma-separated chain ids, e.g. A,B")
    p.add_argument("--out", required=True, help="comma-separated output paths, one per chain")
    p.add_argument("--features", help="comma-separated per-chain feature CSV files (rows = residues)")
    p.add_argument("--labels", help="write the inter-chain contact label CSV (two chains only)")
    p.add_argument("--threshold", type=float, default=6.0, help="contact distance in Å (default 6)")
    p.add_argument("--k", type=int, help="neighbours per node (default: config knn_k)")
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a model on listed complexes")
    p.add_argument("--config", help="run config JSON (RunConfig field names)")
    p.add_argument("--train", required=True, help="list file: graph_a<TAB>graph_b<TAB>labels.csv per line")
    p.add_argument("--val", help="validation list file (default: training list)")
    p.add_argument("--out", required=True, help="checkpoint path for the best-validation weights")
    p.add_argument("--seed", type=int)
    p.add_argument("--init", help="start from an existing checkpoint (fine-tuning)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="contact-probability map for a pair of graphs")
    p.add_argument("checkpoint")
    p.add_argument("graph_a")
    p.add_argument("graph_b")
    p.add_argument("--out", required=True, help="output CSV (A rows x B columns)")
    p.add_argument("--pgm", help="optional P2 grayscale heatmap")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="top-k precision/recall of a prediction")
    p.add_argument("pred_csv")
    p.add_argument("label_csv")
    p.add_argument("--out", help="write the report as CSV")
    p.add_argument("--id", help="complex identifier for the report")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
