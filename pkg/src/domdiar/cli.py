"""Command-line front end.

Every command reads a JSON configuration (``--config``) that may be patched
with ``--set dotted.key=value``. Exit codes: 0 success, 1 runtime failure,
2 configuration or usage error.

Commands::

    domdiar synth         generate a synthetic corpus
    domdiar adi train     build the domain-identification exemplar model
    domdiar adi predict   predict domains of recordings
    domdiar tune          per-domain sweeps -> lookup table
    domdiar diarize       domain-adaptive diarization -> RTTM
    domdiar score         DER / JER report
"""

import argparse
import copy
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import dataio
from ._validation import DegenerateRecordingError
from .adi import (adi_predict, adi_train, load_adi_model, pool_recording_embedding,
                  save_adi_model)
from .ahc import labels_to_turns
from .annotations import emit_rttm
from .embedkit import (EmbeddingPreprocessor, EmbeddingSet, load_preprocessor,
                       save_preprocessor)
from .metrics import format_report, score_corpus
from .pipeline import cluster_scores, score_recording
from .plda import parse_plda, plda_adapt, plda_estimate, serialize_plda
from .synthcorpus import SynthConfig, generate
from .tuning import (GLOBAL_KEY, DevRecording, SweepGrid, build_lookup_table,
                     format_sweep_report, lookup, parse_table, serialize_table)

logger = logging.getLogger("domdiar")

DEFAULTS = {
    "workers": 1,
    "synth": {"out": None},
    "dev": {"emb_dir": None, "rttm": None, "uem": None, "labels": None,
            "recording_embeddings": None},
    "eval": {"emb_dir": None, "recording_embeddings": None, "rttm": None, "uem": None},
    "preprocess": {"center": False, "whiten": False, "length_norm": True, "model": None},
    "plda": {"model": None, "adapt": False, "within_frac": 0.75, "adapt_pool": "input",
             "adapt_after_projection": False},
    "tune": {"threshold_range": [-1.5, 0.0, 0.1], "pca_range": [0.1, 0.9, 0.1],
             "thresholds": None, "pca_values": None, "mode": "sequential", "out_dir": None},
    "adi": {"model": None, "predictions": None},
    "diarize": {"table": None, "out_dir": None, "force_domain": None, "global_only": False},
    "score": {"ref": None, "hyp": None, "uem": None, "collar": 0.0, "score_overlap": True,
              "core": None, "out": None},
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = _parse_value(value)


def load_config(path, overrides=()):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            user = json.loads(dataio.read_text(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        cfg = _merge(cfg, user)
    for o in overrides:
        apply_override(cfg, o)
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ConfigError("workers must be an integer >= 1")
    return cfg


def _need(cfg, section, key, exists=True):
    val = cfg.get(section, {}).get(key)
    if val in (None, ""):
        raise ConfigError(f"missing config value {section}.{key}")
    if exists and not os.path.exists(val):
        raise ConfigError(f"{section}.{key}: path does not exist: {val}")
    return val


def _optional_path(cfg, section, key):
    val = cfg.get(section, {}).get(key)
    if val in (None, ""):
        return None
    if not os.path.exists(val):
        raise ConfigError(f"{section}.{key}: path does not exist: {val}")
    return val


def _output_dir(cfg, section, key):
    path = _need(cfg, section, key, exists=False)
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ConfigError(f"{section}.{key}: parent directory does not exist: {parent}")
    return path


def _output_file(cfg, section, key):
    path = cfg.get(section, {}).get(key)
    if path in (None, ""):
        return None
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ConfigError(f"{section}.{key}: parent directory does not exist: {parent}")
    return path


def _grid(cfg):
    t = cfg["tune"]
    try:
        thresholds = t["thresholds"]
        pcas = t["pca_values"]
        base = SweepGrid.from_ranges(tuple(t["threshold_range"]), tuple(t["pca_range"]))
        return SweepGrid(thresholds if thresholds is not None else base.thresholds,
                         pcas if pcas is not None else base.pca_values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sweep grid: {exc}") from None


def _mode(cfg):
    mode = cfg["tune"]["mode"]
    if mode not in ("sequential", "joint"):
        raise ConfigError(f"tune.mode must be 'sequential' or 'joint', got {mode!r}")
    return mode


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _preprocessor_from_flags(cfg):
    p = cfg["preprocess"]
    return EmbeddingPreprocessor(bool(p["center"]), bool(p["whiten"]), bool(p["length_norm"]))


def _load_preprocessor(cfg):
    path = _optional_path(cfg, "preprocess", "model")
    if path is not None:
        return load_preprocessor(dataio.read_text(path))
    pre = _preprocessor_from_flags(cfg)
    if not pre.is_stateless:
        raise ConfigError("preprocess.center/whiten need a fitted preprocess.model file")
    return pre


def _transform(pre, es):
    if len(es) == 0:
        return es
    if not hasattr(pre, "n_features_in_"):
        pre.fit(es.vectors)  # stateless: fitting only records the dimension
    return EmbeddingSet(es.recording_id, es.times, pre.transform(es.vectors))


def _recording_embeddings(path, embeddings):
    given = dataio.load_recording_embeddings(path) if path else {}
    out = {}
    for rec, es in embeddings.items():
        if rec in given:
            out[rec] = given[rec]
        elif len(es):
            out[rec] = pool_recording_embedding(es)
    for rec, v in given.items():
        out.setdefault(rec, v)
    return out


def _adapt_pool(cfg, processed, pre):
    src = cfg["plda"]["adapt_pool"]
    if src in (None, "", "input"):
        sets = processed
    else:
        if not os.path.exists(src):
            raise ConfigError(f"plda.adapt_pool: path does not exist: {src}")
        sets = [_transform(pre, es) for es in dataio.load_embedding_dir(src).values()]
    vecs = [es.vectors for es in sets if len(es)]
    if not vecs:
        raise ValueError("adaptation pool is empty")
    return np.vstack(vecs)


def _plda_for_run(cfg, model, processed, pre):
    """Returns (model used for scoring, pool for project-then-adapt or None)."""
    if not cfg["plda"]["adapt"]:
        return model, None
    pool = _adapt_pool(cfg, processed, pre)
    if cfg["plda"]["adapt_after_projection"]:
        return model, pool
    return plda_adapt(model, pool, float(cfg["plda"]["within_frac"])), None


def _map(workers, fn, items):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(cfg, args):
    out = args.out or cfg["synth"].get("out")
    if not out:
        raise ConfigError("missing config value synth.out")
    parent = os.path.dirname(os.path.abspath(out))
    if not os.path.isdir(parent):
        raise ConfigError(f"synth.out: parent directory does not exist: {parent}")
    params = {k: v for k, v in cfg["synth"].items() if k != "out"}
    try:
        config = SynthConfig.from_dict(params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synth config: {exc}") from None
    recs = generate(config, out, workers=cfg["workers"])
    logger.info("wrote %d recordings to %s", len(recs), out)
    return 0


def cmd_adi_train(cfg, args):
    labels_path = _need(cfg, "dev", "labels")
    rec_path = _optional_path(cfg, "dev", "recording_embeddings")
    emb_dir = _optional_path(cfg, "dev", "emb_dir")
    if rec_path is None and emb_dir is None:
        raise ConfigError("adi train needs dev.recording_embeddings or dev.emb_dir")
    out = _need(cfg, "adi", "model", exists=False)
    _output_file(cfg, "adi", "model")
    labels = dataio.load_labels(labels_path)
    embeddings = dataio.load_embedding_dir(emb_dir) if emb_dir else {}
    vectors = _recording_embeddings(rec_path, embeddings)
    missing = sorted(set(labels) - set(vectors))
    if missing:
        raise ValueError(f"no embedding for labelled recordings: {', '.join(missing[:5])}")
    model = adi_train((vectors[rec], labels[rec], rec) for rec in sorted(labels))
    dataio.write_text(out, save_adi_model(model))
    logger.info("ADI model with %d exemplars over %d domains", len(model), len(model.classes))
    return 0


def cmd_adi_predict(cfg, args):
    model_path = _need(cfg, "adi", "model")
    rec_path = _optional_path(cfg, "eval", "recording_embeddings")
    emb_dir = _optional_path(cfg, "eval", "emb_dir")
    if rec_path is None and emb_dir is None:
        raise ConfigError("adi predict needs eval.recording_embeddings or eval.emb_dir")
    out = _output_file(cfg, "adi", "predictions")
    model = load_adi_model(dataio.read_text(model_path))
    embeddings = dataio.load_embedding_dir(emb_dir) if emb_dir else {}
    vectors = _recording_embeddings(rec_path, embeddings)
    lines = []
    for rec in sorted(vectors):
        domain, sim, _ = adi_predict(model, vectors[rec])
        lines.append(f"{rec}\t{domain}\t{sim:.6f}\n")
    text = "".join(lines)
    if out:
        dataio.write_text(out, text)
    else:
        sys.stdout.write(text)
    return 0


def _load_dev(cfg):
    emb_dir = _need(cfg, "dev", "emb_dir")
    rttm = _need(cfg, "dev", "rttm")
    uem = _need(cfg, "dev", "uem")
    labels = dataio.load_labels(_need(cfg, "dev", "labels"))
    embeddings = dataio.load_embedding_dir(emb_dir)
    refs = dataio.load_rttm(rttm)
    regions = dataio.load_uem(uem)
    return embeddings, refs, regions, labels


def _plda_training_data(processed, refs):
    """Label each subsegment with the reference speaker covering most of it."""
    X, y = [], []
    for es in processed:
        ref = refs[es.recording_id]
        for (a, b), v in zip(es.times, es.vectors):
            best, best_ov = None, 0.0
            for t in ref.turns:
                ov = min(b, t.offset) - max(a, t.onset)
                if ov > best_ov:
                    best, best_ov = t.speaker, ov
            if best is not None:
                X.append(v)
                y.append(f"{es.recording_id}/{best}")
    return np.array(X), np.array(y)


def cmd_tune(cfg, args):
    grid = _grid(cfg)
    mode = _mode(cfg)
    out_dir = _output_dir(cfg, "tune", "out_dir")
    embeddings, refs, regions, labels = _load_dev(cfg)
    plda_path = _optional_path(cfg, "plda", "model")
    pre_path = _optional_path(cfg, "preprocess", "model")
    os.makedirs(out_dir, exist_ok=True)

    recs = [rec for rec in sorted(embeddings) if len(embeddings[rec])]
    for rec in recs:
        if rec not in refs or rec not in regions or rec not in labels:
            raise ValueError(f"dev recording {rec!r} lacks reference, UEM or domain label")
    if not recs:
        raise ValueError("development set has no embeddings")

    if pre_path is not None:
        pre = load_preprocessor(dataio.read_text(pre_path))
    else:
        pre = _preprocessor_from_flags(cfg).fit(
            np.vstack([embeddings[r].vectors for r in recs]))
    processed = [_transform(pre, embeddings[r]) for r in recs]
    if plda_path is not None:
        plda = parse_plda(dataio.read_text(plda_path))
    else:
        X, y = _plda_training_data(processed, refs)
        plda = plda_estimate(X, y)
    dataio.write_text(os.path.join(out_dir, "preprocess.txt"), save_preprocessor(pre))
    dataio.write_text(os.path.join(out_dir, "plda.txt"), serialize_plda(plda))

    scoring_plda, pool = _plda_for_run(cfg, plda, processed, pre)
    dev = [DevRecording(es, refs[es.recording_id], regions[es.recording_id],
                        labels[es.recording_id]) for es in processed]
    table, rows, global_rows = build_lookup_table(
        dev, scoring_plda, grid, mode, workers=cfg["workers"], adapt_pool=pool,
        within_frac=float(cfg["plda"]["within_frac"]))
    dataio.write_text(os.path.join(out_dir, "lookup.json"), serialize_table(table))
    dataio.write_text(os.path.join(out_dir, "sweep_report.tsv"), format_sweep_report(rows))
    dataio.write_text(os.path.join(out_dir, "sweep_report_global.tsv"),
                      format_sweep_report(global_rows))
    logger.info("lookup table with %d domains written to %s", len(table.entries), out_dir)
    return 0


def _diarize_one(job):
    es, plda, entry, pool, within_frac = job
    try:
        scores = score_recording(plda, es.vectors, entry.pca_fraction, pool, within_frac)
        labels = cluster_scores(scores, entry.threshold)
    except DegenerateRecordingError:
        logger.warning("%s carries no variance; emitting a single speaker", es.recording_id)
        labels = np.zeros(len(es), dtype=int)
    return labels_to_turns(labels, es.segments, es.recording_id)


def cmd_diarize(cfg, args):
    force = args.force_domain or cfg["diarize"].get("force_domain")
    global_only = args.global_only or bool(cfg["diarize"].get("global_only"))
    if force and global_only:
        raise ConfigError("--force-domain and --global-only are mutually exclusive")
    emb_dir = _need(cfg, "eval", "emb_dir")
    table = parse_table(dataio.read_text(_need(cfg, "diarize", "table")))
    plda = parse_plda(dataio.read_text(_need(cfg, "plda", "model")))
    pre = _load_preprocessor(cfg)
    adi_path = None if (force or global_only) else _need(cfg, "adi", "model")
    rec_path = _optional_path(cfg, "eval", "recording_embeddings")
    out_dir = _output_dir(cfg, "diarize", "out_dir")
    if force and force not in table.entries:
        logger.warning("forced domain %r not in lookup table; using the global entry", force)

    embeddings = dataio.load_embedding_dir(emb_dir)
    recs = []
    for rec in sorted(embeddings):
        if len(embeddings[rec]) == 0:
            logger.warning("skipping %s: no subsegments", rec)
        else:
            recs.append(rec)
    if not recs:
        raise ValueError("no recording with subsegments to diarize")
    processed = {rec: _transform(pre, embeddings[rec]) for rec in recs}
    scoring_plda, pool = _plda_for_run(cfg, plda, list(processed.values()), pre)

    adi = load_adi_model(dataio.read_text(adi_path)) if adi_path else None
    rec_vectors = _recording_embeddings(rec_path, embeddings) if adi else {}
    provenance, jobs = {}, []
    for rec in recs:
        prov = {"recording_id": rec}
        if global_only:
            key, entry = GLOBAL_KEY, table.global_fallback
            prov["source"] = "global-only"
        elif force:
            key = force if force in table.entries else GLOBAL_KEY
            entry = lookup(table, force)
            prov.update(source="forced", domain=force)
        else:
            domain, sim, neighbor = adi_predict(adi, rec_vectors[rec])
            key = domain if domain in table.entries else GLOBAL_KEY
            entry = lookup(table, domain)
            prov.update(source="adi", domain=domain, similarity=round(sim, 6),
                        neighbor_id=neighbor)
        prov.update(table_entry=key, threshold=entry.threshold,
                    pca_fraction=entry.pca_fraction)
        provenance[rec] = prov
        jobs.append((processed[rec], scoring_plda, entry, pool,
                     float(cfg["plda"]["within_frac"])))

    hyps = _map(cfg["workers"], _diarize_one, jobs)
    os.makedirs(os.path.join(out_dir, "provenance"), exist_ok=True)
    dataio.write_text(os.path.join(out_dir, "hyp.rttm"), emit_rttm(hyps))
    for rec, prov in provenance.items():
        dataio.write_text(os.path.join(out_dir, "provenance", f"{rec}.json"),
                          json.dumps(prov, indent=2, sort_keys=True) + "\n")
    logger.info("diarized %d recordings into %s", len(hyps), out_dir)
    return 0


def cmd_score(cfg, args):
    ref_path = _need(cfg, "score", "ref")
    hyp_path = _need(cfg, "score", "hyp")
    uem_path = _optional_path(cfg, "score", "uem")
    core = args.core or cfg["score"].get("core")
    if core and not os.path.exists(core):
        raise ConfigError(f"core list does not exist: {core}")
    out = _output_file(cfg, "score", "out")
    collar = args.collar if args.collar is not None else float(cfg["score"]["collar"])
    refs = dataio.load_rttm(ref_path)
    hyps = dataio.load_rttm(hyp_path)
    regions = dataio.load_uem(uem_path) if uem_path else {}
    subset = dataio.load_recording_list(core) if core else None
    per, overall = score_corpus(refs, hyps, regions, collar,
                                bool(cfg["score"]["score_overlap"]), subset)
    text = format_report(per, overall)
    if out:
        dataio.write_text(out, text)
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="JSON configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config value (dotted key)")
    common.add_argument("--workers", type=int, help="parallel workers (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="domdiar", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--out", help="output directory (overrides synth.out)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("adi", help="acoustic domain identification")
    adi_sub = p.add_subparsers(dest="adi_command", required=True)
    adi_sub.add_parser("train", parents=[common]).set_defaults(func=cmd_adi_train)
    adi_sub.add_parser("predict", parents=[common]).set_defaults(func=cmd_adi_predict)

    p = sub.add_parser("tune", parents=[common], help="build the per-domain lookup table")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("diarize", parents=[common], help="diarize evaluation recordings")
    p.add_argument("--force-domain", help="skip ADI and use this domain's entry")
    p.add_argument("--global-only", action="store_true",
                   help="use the global fallback entry for every recording")
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("score", parents=[common], help="DER / JER report")
    p.add_argument("--core", help="file listing the recordings to score")
    p.add_argument("--collar", type=float, help="collar in seconds (default 0)")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg["workers"] = args.workers
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"domdiar: configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"domdiar: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
