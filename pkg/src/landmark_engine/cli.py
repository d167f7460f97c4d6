"""Command line interface: one subcommand per pipeline stage.

Every stage reads and writes files in a single workspace directory, so a full
run looks like

    landmark-engine generate --config configs/demo.json --out work
    landmark-engine vocab --out work
    landmark-engine index build --out work
    landmark-engine graph build --out work
    landmark-engine cluster --out work
    landmark-engine tags --out work
    landmark-engine evaluate --out work

or, equivalently, `landmark-engine end-to-end --config configs/demo.json
--out work`. Stages record what they wrote in run_manifest.json together
with a digest of the configuration that produced it; the manifest carries no
timestamps, so re-running an identical configuration rewrites identical
bytes.

Exit codes: 2 bad input or config, 3 missing upstream artifact, 4 malformed
file, 5 I/O failure, 1 anything else.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from .compaction import (CompactionConfig, kept_summary, load_kept,
                         reduce_clusters, run_fine_clustering, save_kept,
                         write_tradeoff_csv)
from .configio import dataclass_from_dict
from .data_model import (Dataset, load_annotations, load_dataset,
                         save_annotations, save_dataset)
from .errors import (EngineError, FormatError, MissingArtifactError,
                     ValidationError)
from .eval_harness import (GroupRow, build_report, compute_metrics,
                           config_digest, evaluate_recognition,
                           evaluate_semantics, group_queries,
                           map_clusters_to_scene, save_report)
from .iconoid_shift import (load_clusters, run_clustering, save_clusters,
                            seed_sweep)
from .match_graph import build_graph, load_graph, save_graph
from .pipeline import (EngineConfig, build_corpus_index,
                       build_recognition_state, collect_training_descriptors,
                       quantize_dataset)
from .recognition import METHODS, recognize
from .retrieval_index import load_index, query as index_query, save_index
from .synthgen import GeneratorConfig, GroundTruth, generate_dataset
from .tag_mining import name_clusters, write_tags_csv
from .vocabulary import build_bovw, load_vocab, quantize, save_vocab, train_vocab


@dataclass
class EvaluationConfig:
    k: int = 3
    grouping_depth: int = 20
    duplicate_overlap: float = 0.95


@dataclass
class PipelineConfig:
    seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    compaction: CompactionConfig = field(default_factory=CompactionConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"no config file at {path}", stage="config")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path} is not valid JSON: {exc}") from exc
    return dataclass_from_dict(PipelineConfig, raw, path=str(path))


def _digest_of(config_obj) -> str:
    return config_digest(dataclasses.asdict(config_obj))


# ---------------------------------------------------------------------------
# workspace bookkeeping

def _ws(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _record_stage(ws: Path, stage: str, digest: str, outputs: list[str]) -> None:
    manifest_path = ws / "run_manifest.json"
    manifest = {}
    if manifest_path.exists():
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    manifest.setdefault("stages", {})[stage] = {
        "config_digest": digest,
        "outputs": sorted(outputs),
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _load_queries(ws: Path) -> Dataset:
    return load_dataset(ws / "queries")


def _load_ground_truth(ws: Path) -> GroundTruth:
    path = ws / "ground_truth.jsonl"
    if not path.exists():
        raise MissingArtifactError(
            f"no ground truth at {path}; run the generate stage first",
            stage="generate")
    return GroundTruth.load(path)


def _engine_state(ws: Path, config: PipelineConfig, kept=None):
    """Reassemble the in-memory engine from workspace artifacts."""
    dataset = load_dataset(ws / "dataset")
    vocab = load_vocab(ws / "vocab.bin")
    graph = load_graph(ws / "graph.jsonl")
    clusters = load_clusters(ws / "clusters.jsonl")
    words = quantize_dataset(dataset, vocab)
    return build_recognition_state(dataset, vocab, words, graph, clusters,
                                   config.engine.geometry,
                                   config.engine.clustering, kept=kept)


# ---------------------------------------------------------------------------
# commands

@click.group()
def cli():
    """Object mining and recognition over local-feature image collections."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Pipeline config JSON; defaults apply when omitted.")
@click.option("--out", required=True, help="Workspace directory.")
@click.option("--rng-seed", type=int, default=None,
              help="Override the config seed.")
def generate(config_path, out, rng_seed):
    """Generate a synthetic photo collection with ground truth."""
    config = load_config(config_path)
    seed = config.seed if rng_seed is None else rng_seed
    ws = _ws(out)
    result = generate_dataset(config.generator, seed)
    save_dataset(result.dataset, ws / "dataset")
    save_dataset(result.queries, ws / "queries")
    result.ground_truth.save(ws / "ground_truth.jsonl")
    save_annotations(result.ground_truth.annotation_rows(), ws / "annotations.csv")
    digest = config_digest({"generator": dataclasses.asdict(config.generator),
                            "seed": seed})
    _record_stage(ws, "generate", digest,
                  ["dataset", "queries", "ground_truth.jsonl", "annotations.csv"])
    click.echo(f"generated {len(result.dataset.image_ids)} images, "
               f"{len(result.queries.image_ids)} queries, "
               f"{len(result.ground_truth.objects)} objects")


@cli.command()
@click.option("--descriptors", "desc_path", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", required=True)
def ingest(desc_path, manifest_path, out):
    """Validate an external dataset and copy it into the workspace."""
    src_desc, src_manifest = Path(desc_path), Path(manifest_path)
    if not src_desc.exists() or not src_manifest.exists():
        raise MissingArtifactError(
            "ingest needs both --descriptors and --manifest files", stage="ingest")
    staging = src_desc.parent
    if src_manifest.parent != staging:
        raise ValidationError("descriptors and manifest must sit in one directory")
    dataset = load_dataset(staging)
    ws = _ws(out)
    save_dataset(dataset, ws / "dataset")
    _record_stage(ws, "ingest", config_digest({"images": dataset.image_ids}),
                  ["dataset"])
    click.echo(f"ingested {len(dataset.image_ids)} images")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True)
@click.option("--k", type=int, default=None, help="Override vocabulary size.")
@click.option("--rng-seed", type=int, default=None)
def vocab(config_path, out, k, rng_seed):
    """Train the visual vocabulary on the workspace dataset."""
    config = load_config(config_path)
    vc = config.engine.vocab
    if k is not None:
        vc.k = k
    if rng_seed is not None:
        vc.seed = rng_seed
    ws = _ws(out)
    dataset = load_dataset(ws / "dataset")
    descs = collect_training_descriptors(dataset, vc.sample_cap, vc.sample_seed)
    size = min(vc.k, descs.shape[0])
    trained = train_vocab(descs, size, vc.seed, vc.max_iters)
    save_vocab(trained, ws / "vocab.bin")
    _record_stage(ws, "vocab", _digest_of(vc), ["vocab.bin"])
    click.echo(f"trained vocabulary: k={trained.k} dim={trained.dim}")


@cli.group()
def index():
    """Build or query the retrieval index."""


@index.command("build")
@click.option("--out", required=True)
def index_build(out):
    ws = _ws(out)
    dataset = load_dataset(ws / "dataset")
    vocabulary = load_vocab(ws / "vocab.bin")
    words = quantize_dataset(dataset, vocabulary)
    idx, _ = build_corpus_index(dataset.image_ids, words, vocabulary.k)
    save_index(idx, ws / "index.bin")
    _record_stage(ws, "index", config_digest({"images": len(dataset.image_ids),
                                              "k": vocabulary.k}), ["index.bin"])
    click.echo(f"indexed {len(dataset.image_ids)} images over {vocabulary.k} words")


@index.command("query")
@click.option("--out", required=True)
@click.option("--image", "image_id", required=True)
@click.option("-k", "top_k", type=int, default=10)
def index_query_cmd(out, image_id, top_k):
    """Rank indexed images against one image (a query or a dataset member)."""
    ws = _ws(out)
    vocabulary = load_vocab(ws / "vocab.bin")
    idx = load_index(ws / "index.bin")
    record = None
    for source in ("queries", "dataset"):
        try:
            candidate = load_dataset(ws / source)
        except MissingArtifactError:
            continue
        if image_id in candidate.image_ids:
            record = candidate.get(image_id)
            break
    if record is None:
        raise MissingArtifactError(
            f"image {image_id!r} not found in the workspace dataset or queries",
            stage="generate")
    words = quantize(record.descriptors(), vocabulary) if record.features \
        else np.zeros(0, dtype=np.int64)
    ranked = index_query(idx, build_bovw(words, idx.idf), k=top_k)
    for rank, m in enumerate(ranked, start=1):
        click.echo(f"{rank}\t{m.image_id}\t{m.tfidf_score:.6f}")


@cli.group()
def graph():
    """Build or prune the pairwise matching graph."""


@graph.command("build")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True)
@click.option("--threads", type=int, default=None)
def graph_build(config_path, out, threads):
    config = load_config(config_path)
    ws = _ws(out)
    dataset = load_dataset(ws / "dataset")
    vocabulary = load_vocab(ws / "vocab.bin")
    words = quantize_dataset(dataset, vocabulary)
    idx, idf = build_corpus_index(dataset.image_ids, words, vocabulary.k)
    bovws = {i: build_bovw(words[i], idf) for i in dataset.image_ids}
    nthreads = threads if threads is not None else config.engine.threads
    built = build_graph(dataset, idx, bovws, config.engine.geometry,
                        depth=config.engine.clustering.exploration_depth,
                        threads=nthreads)
    save_graph(built, ws / "graph.jsonl", _digest_of(config.engine.geometry))
    _record_stage(ws, "graph", _digest_of(config.engine.geometry), ["graph.jsonl"])
    click.echo(f"graph: {len(built.nodes)} nodes, {len(built.edges)} edges")


@graph.command("prune")
@click.option("--out", required=True)
@click.option("--min-inliers", type=int, required=True)
def graph_prune(out, min_inliers):
    ws = _ws(out)
    full = load_graph(ws / "graph.jsonl")
    pruned = full.prune(min_inliers)
    save_graph(pruned, ws / "graph_pruned.jsonl",
               config_digest({"min_inliers": min_inliers}))
    _record_stage(ws, "graph-prune", config_digest({"min_inliers": min_inliers}),
                  ["graph_pruned.jsonl"])
    click.echo(f"pruned graph: {len(pruned.edges)} of {len(full.edges)} edges kept")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True)
@click.option("--beta", type=float, default=None)
@click.option("--seeds", type=int, default=None, help="Number of seed images.")
def cluster(config_path, out, beta, seeds):
    """Mine object clusters from the matching graph."""
    config = load_config(config_path)
    cc = config.engine.clustering
    if beta is not None:
        cc.beta = beta
    if seeds is not None:
        cc.seed_count = seeds
    ws = _ws(out)
    dataset = load_dataset(ws / "dataset")
    graph_ = load_graph(ws / "graph.jsonl")
    clusters = run_clustering(dataset, graph_, cc)
    save_clusters(clusters, ws / "clusters.jsonl", _digest_of(cc))
    _record_stage(ws, "cluster", _digest_of(cc), ["clusters.jsonl"])
    sizes = ", ".join(str(c.size) for c in clusters) or "none"
    click.echo(f"{len(clusters)} clusters (sizes: {sizes})")


@cli.command("seeds-sweep")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True)
@click.option("--counts", required=True,
              help="Ascending comma-separated seed counts, e.g. 1,2,5,10.")
def seeds_sweep(config_path, out, counts):
    """Cluster with growing seed counts and tabulate discovery progress."""
    config = load_config(config_path)
    try:
        seed_counts = [int(c) for c in counts.split(",") if c.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --counts value {counts!r}") from exc
    ws = _ws(out)
    dataset = load_dataset(ws / "dataset")
    graph_ = load_graph(ws / "graph.jsonl")
    entries = seed_sweep(dataset, graph_, config.engine.clustering, seed_counts)
    sweep_path = ws / "sweep.csv"
    with open(sweep_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed_count", "clusters", "clusters_min_size",
                         "images", "images_min_size", "per_category"])
        for e in entries:
            cats = ";".join(f"{c}={n}" for c, n in sorted(e.per_category.items()))
            writer.writerow([e.seed_count, e.n_clusters, e.n_clusters_min_size,
                             e.images_covered, e.images_covered_min_size, cats])
    _record_stage(ws, "seeds-sweep",
                  config_digest({"counts": seed_counts,
                                 "clustering": dataclasses.asdict(config.engine.clustering)}),
                  ["sweep.csv"])
    for e in entries:
        click.echo(f"seeds={e.seed_count}: {e.n_clusters} clusters, "
                   f"{e.images_covered} images covered")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True)
@click.option("--method", type=click.Choice(
    ["complete-link", "kvq", "dominating-set", "fine-iconoids", "random"]),
    default=None)
@click.option("--theta", type=int, default=None,
              help="Inlier threshold for complete-link / dominating-set / kvq.")
@click.option("--fraction", type=float, default=None, help="random keep fraction.")
def compact(config_path, out, method, theta, fraction):
    """Reduce each cluster to a compact set of representative images."""
    config = load_config(config_path)
    comp = config.compaction
    if method is not None:
        comp = dataclasses.replace(comp, method=method)
    if fraction is not None:
        comp = dataclasses.replace(comp, keep_fraction=fraction)
    ws = _ws(out)
    dataset = load_dataset(ws / "dataset")
    graph_ = load_graph(ws / "graph.jsonl")
    clusters = load_clusters(ws / "clusters.jsonl")
    fine = None
    if comp.method == "fine-iconoids":
        fine = run_fine_clustering(dataset, graph_, config.engine.clustering,
                                   comp.fine_beta)
    kept = reduce_clusters(clusters, graph_, comp, theta=theta, fine_clusters=fine)
    digest = _digest_of(comp)
    save_kept(kept, ws / "kept.jsonl", method=comp.method,
              param=str(theta if theta is not None else ""), config_digest=digest)
    _record_stage(ws, "compact", digest, ["kept.jsonl"])
    summary = kept_summary(clusters, kept)
    click.echo(f"kept {summary['kept']} of {summary['members']} members "
               f"({summary['fraction']:.2f})")


@cli.command()
@click.option("--out", required=True)
def tags(out):
    """Mine cluster names from image tags."""
    ws = _ws(out)
    dataset = load_dataset(ws / "dataset")
    clusters = load_clusters(ws / "clusters.jsonl")
    names = name_clusters(dataset, clusters)
    write_tags_csv(names, ws / "tags.csv")
    _record_stage(ws, "tags", config_digest({"clusters": len(clusters)}),
                  ["tags.csv"])
    for object_id in sorted(names):
        top = ", ".join(t for t, _ in names[object_id][:3]) or "(unnamed)"
        click.echo(f"{object_id}: {top}")


@cli.command("recognize")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True)
@click.option("--image", "image_id", required=True)
@click.option("--method", type=click.Choice(list(METHODS)), default="voting")
@click.option("-k", "top_k", type=int, default=3)
@click.option("--kept/--no-kept", "use_kept", default=False,
              help="Score against the compacted index from kept.jsonl.")
def recognize_cmd(config_path, out, image_id, method, top_k, use_kept):
    """Recognize the object(s) shown in one query image."""
    config = load_config(config_path)
    ws = _ws(out)
    kept = load_kept(ws / "kept.jsonl") if use_kept else None
    engine = _engine_state(ws, config, kept=kept)
    queries = _load_queries(ws)
    if image_id in queries.image_ids:
        record = queries.get(image_id)
    elif image_id in engine.dataset.image_ids:
        record = engine.dataset.get(image_id)
    else:
        raise MissingArtifactError(
            f"image {image_id!r} not found in the workspace dataset or queries",
            stage="generate")
    results = recognize(record, engine, method=method, k=top_k)
    if not results:
        click.echo("no match")
    for s in results:
        flag = "verified" if s.verified else "unverified"
        click.echo(f"{s.rank}\t{s.object_id}\t{s.score:.4f}\t{flag}")


def _evaluation_inputs(ws: Path, config: PipelineConfig, kept=None):
    engine = _engine_state(ws, config, kept=kept)
    queries_ds = _load_queries(ws)
    queries = [queries_ds.get(i) for i in queries_ds.image_ids]
    gt = _load_ground_truth(ws)
    ratings = load_annotations(ws / "annotations.csv")
    primary = {img_id: img.object_id for img_id, img in gt.images.items()}
    cluster_to_scene = map_clusters_to_scene(engine.clusters, primary)
    groups = group_queries(queries, engine.vocab, config.engine.geometry,
                           overlap_threshold=config.evaluation.duplicate_overlap,
                           depth=config.evaluation.grouping_depth)
    return engine, queries, gt, ratings, cluster_to_scene, groups


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True)
@click.option("-k", "top_k", type=int, default=None)
def evaluate(config_path, out, top_k):
    """Score every recognition method against the annotations."""
    config = load_config(config_path)
    k = top_k if top_k is not None else config.evaluation.k
    ws = _ws(out)
    engine, queries, gt, ratings, cluster_to_scene, groups = \
        _evaluation_inputs(ws, config)
    names = name_clusters(engine.dataset, engine.clusters)
    semantics = evaluate_semantics(
        names, engine.clusters, cluster_to_scene,
        {o: gt.good_names(o) for o in gt.objects},
        {o: gt.ok_names(o) for o in gt.objects},
        {o: obj.category for o, obj in gt.objects.items()})
    digest = _digest_of(config)
    report = build_report(engine, queries, groups, ratings, cluster_to_scene,
                          names=names, semantics=semantics, digest=digest, k=k)
    save_report(report, ws / "report.json")
    _record_stage(ws, "evaluate", digest, ["report.json"])
    for method in METHODS:
        block = report["recognition"][method]["overall"]
        click.echo(f"{method}: good-1 {block['good1']:.3f}  ok-1 {block['ok1']:.3f}  "
                   f"good-3 {block['good3']:.3f}  ok-3 {block['ok3']:.3f}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True)
@click.option("--scorer", type=click.Choice(list(METHODS)), default="voting")
def tradeoff(config_path, out, scorer):
    """Sweep compaction methods and tabulate quality against index size."""
    config = load_config(config_path)
    ws = _ws(out)
    engine, queries, gt, ratings, cluster_to_scene, groups = \
        _evaluation_inputs(ws, config)
    dataset = engine.dataset
    graph_ = engine.graph
    clusters = engine.clusters

    sweeps: list[tuple[str, str, CompactionConfig]] = []
    for theta in config.compaction.edge_thresholds:
        for m in ("complete-link", "kvq", "dominating-set"):
            sweeps.append((m, str(theta),
                           dataclasses.replace(config.compaction, method=m)))
    sweeps.append(("fine-iconoids", str(config.compaction.fine_beta),
                   dataclasses.replace(config.compaction, method="fine-iconoids")))
    sweeps.append(("random", str(config.compaction.keep_fraction),
                   dataclasses.replace(config.compaction, method="random")))

    fine = run_fine_clustering(dataset, graph_, config.engine.clustering,
                               config.compaction.fine_beta)
    rows = []
    for method, param, comp in sweeps:
        theta = int(param) if method in ("complete-link", "kvq", "dominating-set") \
            else None
        kept = reduce_clusters(clusters, graph_, comp, theta=theta,
                               fine_clusters=fine)
        state = build_recognition_state(
            dataset, engine.vocab, engine.words, graph_, clusters,
            config.engine.geometry, config.engine.clustering, kept=kept)
        report = evaluate_recognition(state, queries, groups, ratings,
                                      cluster_to_scene, scorer,
                                      k=config.evaluation.k)
        rows.append({
            "method": method, "param": param,
            "kept": sum(len(v) for v in kept.values()),
            "good1": f"{report.overall.good1:.4f}",
            "ok1": f"{report.overall.ok1:.4f}",
            "good3": f"{report.overall.good3:.4f}",
            "ok3": f"{report.overall.ok3:.4f}",
        })
    write_tradeoff_csv(rows, ws / "tradeoff.csv")
    _record_stage(ws, "tradeoff", _digest_of(config), ["tradeoff.csv"])
    for row in rows:
        click.echo(f"{row['method']}@{row['param']}: kept {row['kept']}, "
                   f"good-1 {row['good1']}")


@cli.command("end-to-end")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True)
@click.option("--rng-seed", type=int, default=None)
def end_to_end(config_path, out, rng_seed):
    """Run every stage: generate, vocab, index, graph, cluster, tags,
    compact, evaluate."""
    ctx = click.get_current_context()
    ctx.invoke(generate, config_path=config_path, out=out, rng_seed=rng_seed)
    ctx.invoke(vocab, config_path=config_path, out=out, k=None, rng_seed=None)
    ctx.invoke(index_build, out=out)
    ctx.invoke(graph_build, config_path=config_path, out=out, threads=None)
    ctx.invoke(cluster, config_path=config_path, out=out, beta=None, seeds=None)
    ctx.invoke(tags, out=out)
    ctx.invoke(compact, config_path=config_path, out=out, method=None,
               theta=None, fraction=None)
    ctx.invoke(evaluate, config_path=config_path, out=out, top_k=None)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except MissingArtifactError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except FormatError as exc:
        click.echo(f"error: {exc}", err=True)
        return 4
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 5
    except EngineError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
