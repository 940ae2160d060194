"""Command-line interface.

    surpsim --config CONFIG [--seed N] [--jobs J] [--backend native|remote] COMMAND

Commands: estimate, variance, correlate, evaluate, plot. Each command is
idempotent given the estimates cache; report data files are written first
and figures rendered from them second.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import analysis, plots
from .backends import load_corpus, train_ngram
from .config import (NativeBackendConfig, RemoteBackendConfig, RunConfig,
                     StageTimer, load_config, write_manifest)
from .embeddings import RemoteEmbeddings, load_embeddings
from .errors import (BackendError, ConfigError, DataError, SurpsimError)
from .estimate import (MODE_EXACT, MODE_MC, append_cache, cache_digest,
                       cache_key, cache_row, estimate_exact, estimate_mc,
                       read_cache, simulate_batch)
from .evaluation import (BASELINE_PREDICTORS, MEASUREMENT_COLUMNS,
                         RegressionSpec, Stimulus, delta_r2_cv, load_dataset,
                         spillover_lags_for)
from .measures import Measure, catalog
from .remote import RemoteBackend
from .rng import digest64
from .tokens import Tokens, tokenize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4


# -- shared pipeline pieces --------------------------------------------------

def build_backend(cfg: RunConfig):
    if isinstance(cfg.backend, NativeBackendConfig):
        corpus = load_corpus(cfg.backend.corpus)
        backend = train_ngram(corpus, cfg.backend.order, cfg.backend.pseudocount)
        with open(cfg.backend.corpus, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        identity = {"kind": "native", "corpus": cfg.backend.corpus,
                    "corpus_sha256": digest, "order": cfg.backend.order,
                    "pseudocount": cfg.backend.pseudocount,
                    "alphabet_size": len(backend.alphabet)}
        return backend, identity
    if isinstance(cfg.backend, RemoteBackendConfig):
        backend = RemoteBackend(cfg.backend.url, cfg.backend.timeout,
                                cfg.backend.max_in_flight)
        return backend, backend.identity()
    raise ConfigError(f"unsupported backend config {type(cfg.backend).__name__}")


def build_rep(cfg: RunConfig, backend, measures: Sequence[Measure]):
    if not any(m.needs_rep for m in measures):
        return None
    if cfg.embeddings == "remote":
        if not isinstance(backend, RemoteBackend):
            raise ConfigError("embeddings: remote requires a remote backend")
        return RemoteEmbeddings(backend)
    if cfg.embeddings is None:
        raise ConfigError(
            "distance-based measures are configured but no embeddings source is")
    return load_embeddings(cfg.embeddings)


def selected_measures(cfg: RunConfig) -> List[Measure]:
    table = catalog(cfg.epsilon)
    return [table[name] for name in cfg.measures]


def stimulus_tokens(stim: Stimulus, backend) -> Tuple[Tokens, Tokens]:
    """Context and target token strings for a stimulus.

    The native backend tokenizes on whitespace; a remote backend owns its
    own tokenization and is asked through the wire protocol.
    """
    if isinstance(backend, RemoteBackend):
        c = backend.tokenize(stim.context)
        w = backend.tokenize_word(stim.target, stim.context)
        return c, w
    return tokenize(stim.context), tokenize(stim.target)


def default_mode(measure: Measure) -> str:
    return MODE_EXACT if measure.closed_form else MODE_MC


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _write_tsv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _map_jobs(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# -- estimate ----------------------------------------------------------------

def cmd_estimate(cfg: RunConfig) -> int:
    timer = StageTimer()
    timer.start("setup")
    if cfg.dataset is None:
        raise ConfigError("estimate needs a dataset")
    stimuli = load_dataset(cfg.dataset, cfg.frequencies)
    backend, identity = build_backend(cfg)
    measures = selected_measures(cfg)
    rep = build_rep(cfg, backend, measures)
    cache_path = _out(cfg, "estimates.tsv")
    existing = read_cache(cache_path)
    timer.stop()

    def plan(measure: Measure) -> List[str]:
        modes = []
        if measure.closed_form:
            modes.append(MODE_EXACT)
            if cfg.modes == "both":
                modes.append(MODE_MC)
        else:
            modes.append(MODE_MC)
        return modes

    timer.start("estimate")

    def work(stim: Stimulus) -> List[dict]:
        rows: List[dict] = []
        c, w = stimulus_tokens(stim, backend)
        batch = None
        for measure in measures:
            for mode in plan(measure):
                if mode == MODE_EXACT:
                    key = cache_key(stim.item_id, measure.name, MODE_EXACT,
                                    None, None, None)
                    if key in existing:
                        continue
                    est = estimate_exact(measure, w, c, backend, rep)
                else:
                    key = cache_key(stim.item_id, measure.name, MODE_MC,
                                    cfg.n_samples, cfg.max_len, cfg.seed)
                    if key in existing:
                        continue
                    if batch is None:
                        batch = simulate_batch(backend, c, cfg.n_samples,
                                               cfg.max_len, cfg.seed)
                    est = estimate_mc(measure, w, c, backend, rep,
                                      n=cfg.n_samples, max_len=cfg.max_len,
                                      seed=cfg.seed, batch=batch)
                rows.append(cache_row(stim.item_id, measure.name, est))
        return rows

    # Chunked appends keep completed work on disk if a later backend call
    # fails; the cache key set makes the rerun skip straight past it.
    n_new = 0
    chunk_size = 25
    try:
        for start in range(0, len(stimuli), chunk_size):
            chunk = stimuli[start:start + chunk_size]
            rows = [row for rows in _map_jobs(work, chunk, cfg.jobs)
                    for row in rows]
            append_cache(cache_path, rows)
            n_new += len(rows)
    finally:
        timer.stop()

    manifest_path = _out(cfg, "manifest_estimate.json")
    write_manifest(cfg, manifest_path, backend_identity=identity,
                   stages=timer.stages,
                   outputs={"estimates": cache_path,
                            "cache_digest": cache_digest(cache_path)})
    print(f"estimate: {n_new} new rows "
          f"({len(existing)} cached) -> {cache_path}")
    return EXIT_OK


# -- variance ----------------------------------------------------------------

def cmd_variance(cfg: RunConfig) -> int:
    timer = StageTimer()
    timer.start("setup")
    if cfg.dataset is None:
        raise ConfigError("variance needs a dataset")
    stimuli = load_dataset(cfg.dataset, cfg.frequencies)
    backend, identity = build_backend(cfg)
    measures = selected_measures(cfg)
    rep = build_rep(cfg, backend, measures)
    b = cfg.variance.resamples
    timer.stop()

    timer.start("bootstrap")
    token_pairs = [(s.item_id,) + stimulus_tokens(s, backend) for s in stimuli]
    series: List[dict] = []
    cv_rows: List[tuple] = []
    corr_rows: List[tuple] = []
    runtime_rows: List[tuple] = []
    for measure in measures:
        for max_len in cfg.variance.l_grid:
            points = []
            for n in cfg.variance.n_grid:
                resampled: Dict[str, np.ndarray] = {}
                spent = 0.0
                for item_id, c, w in token_pairs:
                    t0 = time.perf_counter()
                    batch = simulate_batch(backend, c, n, max_len, cfg.seed)
                    from .estimate import score_samples
                    scores = score_samples(measure, batch, w, c, backend, rep,
                                           max_len, measure.warping.epsilon)
                    spent += time.perf_counter() - t0
                    boot_seed = digest64(cfg.seed, "variance", item_id,
                                         measure.name, n, max_len)
                    resampled[item_id] = analysis.bootstrap_scores(
                        scores, b, boot_seed, measure.warping)
                report = analysis.bootstrap_report(resampled, b, n, max_len, cfg.seed)
                matrix = np.stack([resampled[i] for i, _, _ in token_pairs])
                corr = analysis.resample_correlation(matrix)
                seconds = spent / max(len(token_pairs), 1)
                points.append({
                    "n": n, "mean_cv": report.mean_cv,
                    "cv_ci": [report.cv_ci_low, report.cv_ci_high],
                    "cv_excluded": report.n_excluded,
                    "corr_mean": corr.mean,
                    "corr_ci": [corr.ci_low, corr.ci_high],
                    "seconds_per_stimulus": seconds,
                })
                cv_rows.append((measure.name, max_len, n, f"{report.mean_cv:.6g}",
                                f"{report.cv_ci_low:.6g}", f"{report.cv_ci_high:.6g}",
                                report.n_excluded))
                corr_rows.append((measure.name, max_len, n, f"{corr.mean:.6g}",
                                  f"{corr.ci_low:.6g}", f"{corr.ci_high:.6g}",
                                  corr.n_pairs))
                runtime_rows.append((measure.name, "mc", max_len, n, f"{seconds:.6g}"))
            series.append({"measure": measure.name, "max_len": max_len,
                           "points": points})
    timer.stop()

    timer.start("exact-baseline")
    exact_measures = [m for m in measures if m.closed_form]
    exact_seconds = None
    if exact_measures:
        t0 = time.perf_counter()
        count = 0
        for item_id, c, w in token_pairs:
            for measure in exact_measures:
                estimate_exact(measure, w, c, backend, rep)
                count += 1
        exact_seconds = (time.perf_counter() - t0) / max(count, 1)
        runtime_rows.append(("all_closed_form", "exact", "", "", f"{exact_seconds:.6g}"))
    timer.stop()

    report = {"kind": "variance", "b": b, "seed": cfg.seed,
              "n_stimuli": len(stimuli), "series": series,
              "exact_seconds_per_stimulus": exact_seconds}
    report_path = _out(cfg, "variance_report.json")
    _write_json(report_path, report)
    _write_tsv(_out(cfg, "variance_cv.tsv"),
               ("measure", "L", "N", "mean_cv", "ci_low", "ci_high", "excluded"),
               cv_rows)
    _write_tsv(_out(cfg, "variance_resample_corr.tsv"),
               ("measure", "L", "N", "mean_r", "ci_low", "ci_high", "pairs"),
               corr_rows)
    _write_tsv(_out(cfg, "variance_runtime.tsv"),
               ("measure", "mode", "L", "N", "seconds_per_stimulus"),
               runtime_rows)
    figure = plots.plot_variance_report(report, _out(cfg, "variance_report.svg"))
    write_manifest(cfg, _out(cfg, "manifest_variance.json"),
                   backend_identity=identity, stages=timer.stages,
                   outputs={"report": report_path, "figure": figure})
    print(f"variance: {len(series)} series over {len(stimuli)} stimuli -> {report_path}")
    return EXIT_OK


# -- correlate ----------------------------------------------------------------

def _series_from_cache(cfg: RunConfig, measures: Sequence[Measure],
                       stimuli: Sequence[Stimulus]):
    cache = read_cache(_out(cfg, "estimates.tsv"))
    series: Dict[str, Dict[str, float]] = {}
    gaps: List[str] = []

    def column(measure: Measure, mode: str) -> Optional[Dict[str, float]]:
        out: Dict[str, float] = {}
        for stim in stimuli:
            if mode == MODE_EXACT:
                key = cache_key(stim.item_id, measure.name, mode, None, None, None)
            else:
                key = cache_key(stim.item_id, measure.name, mode,
                                cfg.n_samples, cfg.max_len, cfg.seed)
            row = cache.get(key)
            if row is None:
                gaps.append(f"{measure.name}[{mode}] @ {stim.item_id}")
                return None
            out[stim.item_id] = float(row["value"])
        return out

    for measure in measures:
        main_mode = default_mode(measure)
        col = column(measure, main_mode)
        if col is not None:
            series[measure.name] = col
        if measure.closed_form:
            mc = column(measure, MODE_MC)
            if mc is not None:
                series[f"{measure.name}_mc"] = mc
            elif cfg.modes != "both":
                gaps[:] = [g for g in gaps if not g.startswith(f"{measure.name}[mc]")]
    return series, gaps


def cmd_correlate(cfg: RunConfig) -> int:
    if cfg.dataset is None:
        raise ConfigError("correlate needs a dataset")
    timer = StageTimer()
    timer.start("correlate")
    stimuli = load_dataset(cfg.dataset, cfg.frequencies)
    measures = selected_measures(cfg)
    series, gaps = _series_from_cache(cfg, measures, stimuli)
    if gaps:
        preview = "; ".join(gaps[:10])
        raise DataError(f"estimates cache is missing {len(gaps)} entries "
                        f"(run estimate first): {preview}")
    if not series:
        raise DataError("no estimate series available")
    item_ids = [s.item_id for s in stimuli]
    aligned = {name: [col[i] for i in item_ids] for name, col in series.items()}

    outputs = {}
    for method in ("pearson", "spearman"):
        matrix = analysis.correlation_matrix(aligned, method)
        rows = [[name] + [f"{matrix.values[i, j]:.6g}" for j in range(len(matrix.names))]
                for i, name in enumerate(matrix.names)]
        tsv = _out(cfg, f"correlate_{method}.tsv")
        _write_tsv(tsv, ["measure"] + matrix.names, rows)
        report = {"kind": "correlation", "method": method, "names": matrix.names,
                  "values": [[float(v) for v in row] for row in matrix.values]}
        path = _out(cfg, f"correlate_{method}.json")
        _write_json(path, report)
        figure = plots.plot_correlation_matrix(report, _out(cfg, f"correlate_{method}.svg"))
        outputs[method] = path
        outputs[f"{method}_figure"] = figure

    pairs = {}
    for measure in measures:
        if measure.closed_form and f"{measure.name}_mc" in aligned:
            pairs[measure.name] = {
                "pearson": analysis.pearson(aligned[measure.name],
                                            aligned[f"{measure.name}_mc"]),
                "spearman": analysis.spearman(aligned[measure.name],
                                              aligned[f"{measure.name}_mc"]),
            }
    pairs_path = _out(cfg, "correlate_exact_vs_mc.json")
    _write_json(pairs_path, {"kind": "exact_vs_mc", "n_samples": cfg.n_samples,
                             "max_len": cfg.max_len, "pairs": pairs})
    outputs["exact_vs_mc"] = pairs_path
    timer.stop()
    _, identity = build_backend(cfg)
    write_manifest(cfg, _out(cfg, "manifest_correlate.json"),
                   backend_identity=identity, stages=timer.stages, outputs=outputs)
    print(f"correlate: {len(aligned)} series over {len(item_ids)} stimuli")
    return EXIT_OK


# -- evaluate ----------------------------------------------------------------

def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg.dataset is None:
        raise ConfigError("evaluate needs a dataset")
    timer = StageTimer()
    timer.start("evaluate")
    stimuli = load_dataset(cfg.dataset, cfg.frequencies)
    measures = selected_measures(cfg)
    series, gaps = _series_from_cache(cfg, measures, stimuli)
    if any(m.name not in series for m in measures):
        preview = "; ".join(gaps[:10])
        raise DataError(f"estimates cache is incomplete (run estimate first): {preview}")

    responses = cfg.evaluation.responses
    if not responses:
        counts = {name: sum(1 for s in stimuli if name in s.measurements)
                  for name in MEASUREMENT_COLUMNS}
        responses = tuple(name for name, k in counts.items() if k >= 50)
    if not responses:
        raise DataError("no response columns with enough data")

    by_name = {m.name: m for m in measures}
    summary_rows: List[tuple] = []
    outputs: Dict[str, str] = {}
    for response in responses:
        lags = spillover_lags_for(response)
        reports = []
        for measure in measures:
            spec = RegressionSpec(
                response=response, baseline=BASELINE_PREDICTORS,
                target=(measure.name,), spillover_lags=lags,
                folds=cfg.evaluation.folds, seeds=cfg.evaluation.cv_seeds,
                grouped_by_sentence=cfg.evaluation.grouped_by_sentence)
            report = delta_r2_cv(
                spec, stimuli, series, label=measure.name,
                permutation_resamples=cfg.evaluation.permutation_resamples,
                permutation_seed=cfg.seed)
            reports.append(report)
        anchor = "exp_next_surprisal"
        if "surprisal" in by_name and anchor in by_name:
            combined = BASELINE_PREDICTORS + ("surprisal", anchor)
            for measure in measures:
                if not measure.anticipatory or measure.name == anchor:
                    continue
                spec = RegressionSpec(
                    response=response, baseline=combined,
                    target_full=BASELINE_PREDICTORS + ("surprisal", measure.name),
                    spillover_lags=lags, folds=cfg.evaluation.folds,
                    seeds=cfg.evaluation.cv_seeds,
                    grouped_by_sentence=cfg.evaluation.grouped_by_sentence)
                report = delta_r2_cv(
                    spec, stimuli, series, label=f"combined:{measure.name}",
                    permutation_resamples=cfg.evaluation.permutation_resamples,
                    permutation_seed=cfg.seed)
                reports.append(report)
        collection = {"kind": "eval_collection", "response": response,
                      "reports": [r.to_json() for r in reports]}
        path = _out(cfg, f"eval_{response}.json")
        _write_json(path, collection)
        figure = plots.plot_eval_reports(collection["reports"],
                                         _out(cfg, f"eval_{response}.svg"),
                                         title=response)
        outputs[response] = path
        outputs[f"{response}_figure"] = figure
        for r in reports:
            summary_rows.append((response, r.label, f"{r.mean:.6g}",
                                 f"{r.ci_low:.6g}", f"{r.ci_high:.6g}",
                                 f"{r.p_value:.6g}", r.n_rows))
    summary = _out(cfg, "eval_summary.tsv")
    _write_tsv(summary, ("response", "target", "mean_delta_r2", "ci_low",
                         "ci_high", "p_value", "n_rows"), summary_rows)
    outputs["summary"] = summary
    timer.stop()
    _, identity = build_backend(cfg)
    write_manifest(cfg, _out(cfg, "manifest_evaluate.json"),
                   backend_identity=identity, stages=timer.stages, outputs=outputs)
    print(f"evaluate: {len(summary_rows)} reports over {len(responses)} responses "
          f"-> {summary}")
    return EXIT_OK


# -- plot ---------------------------------------------------------------------

def cmd_plot(files: Sequence[str], outdir: Optional[str]) -> int:
    if not files:
        raise DataError("plot needs at least one report file")
    written: List[str] = []
    for path in files:
        if not os.path.exists(path):
            raise DataError(f"report file does not exist: {path}")
        target = outdir or os.path.join(os.path.dirname(os.path.abspath(path)),
                                        "figures")
        written.extend(plots.render_report_file(path, target))
    for path in written:
        print(path)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.backend is not None:
        actual = "native" if isinstance(cfg.backend, NativeBackendConfig) else "remote"
        if actual != args.backend:
            raise ConfigError(
                f"config defines a {actual} backend but --backend {args.backend} "
                "was requested")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surpsim",
        description="Predictive-uncertainty measures over LM continuations.")
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=None, help="worker threads")
    parser.add_argument("--backend", choices=("native", "remote"), default=None,
                        help="assert which backend kind the config must define")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("estimate", "fill the estimates cache"),
                      ("variance", "bootstrap variation, resample correlation, runtime"),
                      ("correlate", "correlation matrices between measures"),
                      ("evaluate", "delta-R2 predictive power reports")):
        sub.add_parser(name, help=doc)
    plot = sub.add_parser("plot", help="render figures from report files")
    plot.add_argument("files", nargs="*", help="report JSON files")
    plot.add_argument("--out", default=None, help="figure output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            return cmd_plot(args.files, args.out)
        if not args.config:
            raise ConfigError(f"{args.command} needs --config")
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "estimate":
            return cmd_estimate(cfg)
        if args.command == "variance":
            return cmd_variance(cfg)
        if args.command == "correlate":
            return cmd_correlate(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except SurpsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
