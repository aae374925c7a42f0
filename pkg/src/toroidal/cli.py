"""Command-line entry points: train, project, quantize, search, eval,
simulate-distances.

The CLI is a thin orchestration layer over the library modules; it owns no
logic beyond argument parsing and file placement.  Every source of
randomness takes an explicit --seed, and a command run twice with the same
flags writes byte-identical files.  Exit codes: 0 success, 1 runtime
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

from ._version import __version__
from .data import EmbeddingSet, SyntheticDataset
from .exceptions import ToroidalError
from .geometry import GeometryProjector, GeometryTag
from .io import (
    RunManifest,
    load_codebook,
    load_embeddings,
    save_codebook,
    save_embeddings,
)
from .metrics import DistanceKind, distance_distribution_sim
from .quantization import QuantConfig, quantize_set
from .retrieval import (
    EvalReport,
    eval_pipeline,
    few_shot_eval,
    knn_search,
    write_reports_csv,
    write_reports_json,
)
from .training import ContrastiveEmbedder, TrainConfig, TrainResult

_GEOMETRY_CHOICES = ("hypersphere", "torusC", "torusN")
_SIM_GEOMETRIES = ("sphere", "flat-torus", "clifford")


def _add_train(subparsers):
    p = subparsers.add_parser("train", help="train embeddings on the built-in "
                              "synthetic clustered dataset")
    p.add_argument("--geometry", choices=_GEOMETRY_CHOICES)
    p.add_argument("--dim", type=int, help="pre-projection embedding dimension")
    p.add_argument("--koleo", type=float, default=0.0,
                   help="weight of the nearest-neighbour repulsion term")
    p.add_argument("--clip", type=float, default=100.0,
                   help="global-norm gradient clipping threshold")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="embeddings output path")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--input-dim", type=int, default=32)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--encoder", choices=("linear", "free"), default="linear")
    p.add_argument("--split", choices=("train", "test"), default="test",
                   help="which split's embeddings to write")
    p.add_argument("--from-manifest", metavar="PATH",
                   help="replay a previous run's manifest (other flags "
                   "except --out are ignored)")


def _cmd_train(args) -> int:
    if args.from_manifest:
        manifest = RunManifest.load(args.from_manifest)
        config = TrainConfig(**manifest.config)
        dataset = SyntheticDataset(**manifest.dataset)
        split = manifest.artifacts.get("split", "test")
    else:
        if args.geometry is None or args.dim is None or args.seed is None:
            raise ToroidalError(
                "train requires --geometry, --dim, and --seed "
                "(or --from-manifest)"
            )
        config = TrainConfig(
            geometry=args.geometry, dim=args.dim, koleo_weight=args.koleo,
            clip_threshold=args.clip, learning_rate=args.lr,
            epochs=args.epochs, batch_size=args.batch_size,
            temperature=args.temperature, seed=args.seed,
            encoder=args.encoder,
        )
        dataset = SyntheticDataset(
            n_classes=args.classes, n_per_class=args.per_class,
            dim=args.input_dim, spread=args.sigma, seed=args.seed,
        )
        split = args.split

    if config.encoder == "free":
        split = "train"

    x_train, y_train = dataset.sample(split=0)
    est = ContrastiveEmbedder(**config.to_dict())
    est.fit(x_train, y_train)

    log_path = args.out + ".log.csv"
    manifest_path = args.out + ".manifest.json"
    result = TrainResult(embeddings=None, history=est.history_,
                         diverged=est.diverged_)
    result.write_log_csv(log_path)
    RunManifest(
        command="train",
        seed=config.seed,
        config=config.to_dict(),
        dataset=dataset.to_dict(),
        artifacts={"embeddings": os.path.basename(args.out),
                   "log": os.path.basename(log_path),
                   "split": split},
    ).save(manifest_path)

    if est.diverged_:
        print("training diverged; log written, no embeddings", file=sys.stderr)
        return 1
    if split == "test":
        x_test, y_test = dataset.sample(split=1)
        vectors, labels = est.transform(x_test), y_test
    else:
        vectors, labels = est.embedding_, y_train
    save_embeddings(
        EmbeddingSet(geometry=config.output_geometry, vectors=vectors,
                     labels=labels),
        args.out,
    )
    print(f"wrote {args.out} ({vectors.shape[0]} x {vectors.shape[1]}, "
          f"{config.geometry})")
    return 0


def _add_project(subparsers):
    p = subparsers.add_parser("project", help="apply a geometry map to a "
                              "stored embedding set")
    p.add_argument("--mode", required=True,
                   choices=("l2", "clifford", "l2p", "to-flat", "to-clifford"))
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)


def _cmd_project(args) -> int:
    dataset = load_embeddings(args.infile)
    if args.mode == "to-flat" and dataset.geometry != GeometryTag.CLIFFORD:
        raise ToroidalError("to-flat expects a Clifford set")
    if args.mode == "to-clifford" and dataset.geometry != GeometryTag.FLAT_TORUS:
        raise ToroidalError("to-clifford expects a flat-torus set")
    projector = GeometryProjector(mode=args.mode)
    projected = EmbeddingSet(
        geometry=projector.output_geometry,
        vectors=projector.transform(dataset.vectors),
        labels=dataset.labels,
    )
    save_embeddings(projected, args.out)
    print(f"wrote {args.out} ({projected.n} x {projected.dim}, "
          f"{projected.geometry.cli_name})")
    return 0


def _add_quantize(subparsers):
    p = subparsers.add_parser("quantize", help="grid- or product-quantise a "
                              "stored embedding set")
    p.add_argument("--config", required=True,
                   choices=[c.value for c in QuantConfig])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--codebook", help="PQ codebook path: loaded if it exists, "
                   "otherwise trained (needs --seed) and written there")
    p.add_argument("--seed", type=int)


def _cmd_quantize(args) -> int:
    dataset = load_embeddings(args.infile)
    config = QuantConfig.from_name(args.config)
    codebook = None
    if config.is_pq:
        if not args.codebook:
            raise ToroidalError("PQ configs require --codebook")
        if os.path.exists(args.codebook):
            codebook = load_codebook(args.codebook)
        else:
            if args.seed is None:
                raise ToroidalError("training a codebook requires --seed")
            _, trained = quantize_set(dataset, config, seed=args.seed)
            save_codebook(trained, args.codebook)
            # encode with the persisted (f32) centroids so a rerun that
            # loads the file produces byte-identical codes
            codebook = load_codebook(args.codebook)
    coded, _ = quantize_set(dataset, config, seed=args.seed, codebook=codebook)
    save_embeddings(coded, args.out)
    print(f"wrote {args.out} ({coded.n} x {coded.dim}, {config.value})")
    return 0


def _add_search(subparsers):
    p = subparsers.add_parser("search", help="exact k-nearest-neighbour "
                              "search, results as CSV")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--metric", choices=[k.value for k in DistanceKind])
    p.add_argument("--out", help="output CSV (default: stdout)")


def _cmd_search(args) -> int:
    index = load_embeddings(args.index)
    queries = load_embeddings(args.queries)
    kind = DistanceKind.from_name(args.metric) if args.metric else None
    ids, dists = knn_search(queries, index, args.k, kind)
    lines = ["query,rank,index_id,distance"]
    for q in range(ids.shape[0]):
        for rank in range(ids.shape[1]):
            lines.append(
                f"{q},{rank},{int(ids[q, rank])},{dists[q, rank].item()!r}"
            )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _add_eval(subparsers):
    p = subparsers.add_parser("eval", help="retrieval metrics for a stored "
                              "embedding set, optionally after quantisation")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--quant", choices=[c.value for c in QuantConfig])
    p.add_argument("--codebook", help="reuse a trained PQ codebook")
    p.add_argument("--few-shot", type=int, metavar="N",
                   help="also run N-shot nearest-prototype episodes")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--koleo-weight", type=float,
                   help="annotate reports with the training weight")
    p.add_argument("--out", help="output base path; writes BASE.csv and "
                   "BASE.json (default: CSV to stdout)")


def _cmd_eval(args) -> int:
    dataset = load_embeddings(args.infile)
    quant = QuantConfig.from_name(args.quant) if args.quant else None
    if quant is not None and quant.is_pq and args.codebook is None \
            and args.seed is None:
        raise ToroidalError("PQ evaluation requires --seed or --codebook")
    codebook = load_codebook(args.codebook) if args.codebook else None
    reports = eval_pipeline(dataset, quant, seed=args.seed,
                            codebook=codebook, koleo_weight=args.koleo_weight)
    if args.few_shot is not None:
        if args.seed is None:
            raise ToroidalError("few-shot episodes require --seed")
        accuracy = few_shot_eval(dataset, None, n_shot=args.few_shot,
                                 n_episodes=args.episodes, seed=args.seed)
        reports.append(EvalReport(
            metric=f"few_shot_{args.few_shot}shot_acc", value=accuracy,
            geometry=dataset.geometry.cli_name, dim=dataset.dim,
            quant=None, koleo_weight=args.koleo_weight, seed=args.seed,
        ))
    if args.out:
        write_reports_csv(reports, args.out + ".csv")
        write_reports_json(reports, args.out + ".json")
        print(f"wrote {args.out}.csv and {args.out}.json")
    else:
        sys.stdout.write(EvalReport.CSV_HEADER + "\n")
        for report in reports:
            sys.stdout.write(report.csv_row() + "\n")
    return 0


def _add_simulate(subparsers):
    p = subparsers.add_parser(
        "simulate-distances",
        help="histogram normalised distances between uniform random pairs",
    )
    p.add_argument("--geometry", required=True, choices=_SIM_GEOMETRIES)
    p.add_argument("--dims", required=True,
                   help="comma-separated dimensions, e.g. 2,16,128")
    p.add_argument("--pairs", type=int, default=10000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--metric", choices=("cosine", "torus-l1", "torus-l2"),
                   help="default: cosine off the torus, torus-l2 on it")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out-dir", default=".")


def _cmd_simulate(args) -> int:
    geometry = GeometryTag.from_name(args.geometry)
    kind = DistanceKind.from_name(args.metric) if args.metric else None
    dims = [int(part) for part in args.dims.split(",") if part]
    summary = ["dim,mean,std"]
    metric_name = None
    for dim in dims:
        result = distance_distribution_sim(
            geometry, dim, args.pairs, args.seed, kind=kind, bins=args.bins
        )
        metric_name = result.kind.value
        out = os.path.join(
            args.out_dir,
            f"dist_{args.geometry}_{metric_name}_d{dim}.csv",
        )
        result.write_csv(out)
        summary.append(f"{dim},{result.mean!r},{result.std!r}")
        print(f"wrote {out} (mean {result.mean:.4f}, std {result.std:.4f})")
    summary_path = os.path.join(
        args.out_dir, f"dist_{args.geometry}_{metric_name}_summary.csv"
    )
    with open(summary_path, "w", newline="") as fh:
        fh.write("\n".join(summary) + "\n")
    print(f"wrote {summary_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toroidal",
        description="Toroidal embeddings: train, project, quantise, "
        "search, and evaluate.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_train(subparsers)
    _add_project(subparsers)
    _add_quantize(subparsers)
    _add_search(subparsers)
    _add_eval(subparsers)
    _add_simulate(subparsers)
    return parser


_HANDLERS = {
    "train": _cmd_train,
    "project": _cmd_project,
    "quantize": _cmd_quantize,
    "search": _cmd_search,
    "eval": _cmd_eval,
    "simulate-distances": _cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ToroidalError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
