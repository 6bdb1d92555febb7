"""Command-line pipeline: build graphs, decode, verify, inspect.

Stages communicate only via files so intermediate graphs stay inspectable
and runs are resumable. Exit codes: 0 success, 2 partial failure, 64 usage
error, 69 judge service unavailable.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .align import ScoringParams
from .corpus import load_response_sets
from .decode import consensus_decode, guided_self_verify
from .errors import ConsgraphError, JudgeTransportError
from .judge import Judge, OfflineProvider, RemoteProvider, VerdictCache
from .refine import ConsensusGraph, build_consensus_graph
from .stats import graph_stats, lexical_overlap_profile, stats_table

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_USAGE = 64
EXIT_JUDGE_UNAVAILABLE = 69

DEFAULT_JUDGE_URL = "http://localhost:8000/v1/chat/completions"
DEFAULT_JUDGE_MODEL = "gpt-4.1-mini"


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _resolve(flag, config: dict, key: str, default):
    """Precedence: explicit flag > config file entry > built-in default."""
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _make_judge(config: dict, judge: str | None, judge_url: str | None,
                judge_model: str | None, cache_path: str | None) -> Judge:
    kind = _resolve(judge, config, "judge", "offline")
    cache = VerdictCache(_resolve(cache_path, config, "cache_path", None))
    if kind == "remote":
        provider = RemoteProvider(
            url=_resolve(judge_url, config, "judge_url", DEFAULT_JUDGE_URL),
            model=_resolve(judge_model, config, "judge_model", DEFAULT_JUDGE_MODEL),
        )
    elif kind == "offline":
        provider = OfflineProvider()
    else:
        raise click.UsageError(f"unknown judge kind: {kind}")
    return Judge(provider, cache)


def _make_params(config: dict, match, mismatch, gap_open, gap_extend) -> ScoringParams:
    return ScoringParams(
        match_penalty=_resolve(match, config, "match_penalty", 1.0),
        mismatch_penalty=_resolve(mismatch, config, "mismatch_penalty", -2.0),
        gap_open_penalty=_resolve(gap_open, config, "gap_open_penalty", -1.0),
        gap_extend_penalty=_resolve(gap_extend, config, "gap_extend_penalty", -1.0),
    )


def _graph_files(graphs: str) -> list[Path]:
    path = Path(graphs)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
    elif path.exists():
        files = [path]
    else:
        files = []
    if not files:
        raise click.UsageError(f"no graph files found at {graphs}")
    return files


def _load_graphs(graphs: str) -> list[ConsensusGraph]:
    return [ConsensusGraph.loads(p.read_text(encoding="utf-8")) for p in _graph_files(graphs)]


judge_options = [
    click.option("--judge", type=click.Choice(["offline", "remote"]), default=None,
                 help="Judge provider (default: offline)."),
    click.option("--judge-url", default=None, help="Chat-completions endpoint URL."),
    click.option("--judge-model", default=None, help="Model name for remote judge calls."),
    click.option("--cache-path", default=None, help="Verdict cache JSONL path."),
]


def add_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return wrap


@click.group()
def cli() -> None:
    """Fuse sampled LM responses into consensus graphs and synthesize answers."""


@cli.command("build")
@click.option("--input", "-i", "input_path", required=True, help="JSONL of prompt/response records.")
@click.option("--output-dir", "-o", required=True, help="Directory for per-prompt graph JSON files.")
@click.option("--config", "config_path", default=None, help="JSON config file (flags take precedence).")
@click.option("--match", type=float, default=None)
@click.option("--mismatch", type=float, default=None)
@click.option("--gap-open", type=float, default=None)
@click.option("--gap-extend", type=float, default=None)
@click.option("--task-kind", type=click.Choice(["text", "math"]), default=None)
@click.option("--jobs", type=int, default=1, help="Record-level parallelism.")
@add_options(judge_options)
def cmd_build(input_path, output_dir, config_path, match, mismatch, gap_open, gap_extend,
              task_kind, jobs, judge, judge_url, judge_model, cache_path) -> None:
    """Construct one consensus graph JSON file per input record."""
    config = _load_config(config_path)
    params = _make_params(config, match, mismatch, gap_open, gap_extend)
    the_judge = _make_judge(config, judge, judge_url, judge_model, cache_path)
    kind = _resolve(task_kind, config, "task_kind", "text")
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    if not Path(input_path).exists():
        raise click.UsageError(f"input file not found: {input_path}")
    records = list(load_response_sets(input_path))
    if not records:
        raise click.UsageError(f"no records in {input_path}")

    failures: list[tuple[str, Exception]] = []

    def process(rs):
        graph = build_consensus_graph(rs, the_judge, params, task_kind=kind)
        (outdir / f"{rs.prompt_id}.json").write_text(graph.dumps() + "\n", encoding="utf-8")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(process, rs): rs for rs in records}
            for fut, rs in futures.items():
                try:
                    fut.result()
                except Exception as exc:
                    failures.append((rs.prompt_id, exc))
    else:
        for rs in records:
            try:
                process(rs)
            except Exception as exc:
                failures.append((rs.prompt_id, exc))

    _finish(failures)


def _finish(failures: list[tuple[str, Exception]]) -> None:
    if not failures:
        return
    for pid, exc in failures:
        click.echo(f"FAILED {pid}: {exc}", err=True)
    causes = [exc for _, exc in failures]

    def is_transport(exc: Exception) -> bool:
        while exc is not None:
            if isinstance(exc, JudgeTransportError):
                return True
            exc = exc.__cause__
        return False

    if all(is_transport(exc) for exc in causes):
        sys.exit(EXIT_JUDGE_UNAVAILABLE)
    sys.exit(EXIT_PARTIAL)


@cli.command("decode")
@click.option("--graphs", "-g", required=True, help="Graph JSON file or directory.")
@click.option("--output", "-o", required=True, help="Results JSONL path.")
@click.option("--config", "config_path", default=None)
@click.option("--tau", "taus", type=float, multiple=True, help="Consensus threshold(s); repeatable.")
@click.option("--task-label", default=None, help="Task description used in the edit prompt.")
@add_options(judge_options)
def cmd_decode(graphs, output, config_path, taus, task_label,
               judge, judge_url, judge_model, cache_path) -> None:
    """Run consensus decoding per graph and threshold; one JSONL row each."""
    config = _load_config(config_path)
    the_judge = _make_judge(config, judge, judge_url, judge_model, cache_path)
    tau_values = list(taus) or list(config.get("taus", [0.3, 0.5]))
    for t in tau_values:
        if not 0.0 <= t <= 1.0:
            raise click.UsageError(f"tau must be in [0, 1]: {t}")
    label = _resolve(task_label, config, "task_label", "response")

    failures: list[tuple[str, Exception]] = []
    with open(output, "w", encoding="utf-8") as out:
        for graph in _load_graphs(graphs):
            for tau in tau_values:
                try:
                    result = consensus_decode(graph, tau, the_judge, task_label=label)
                except Exception as exc:
                    failures.append((graph.prompt_id, exc))
                    continue
                row = {"prompt_id": graph.prompt_id, **result.to_json()}
                out.write(json.dumps(row, ensure_ascii=False) + "\n")
    _finish(failures)


@cli.command("verify")
@click.option("--graphs", "-g", required=True, help="Graph JSON file or directory.")
@click.option("--problems", required=True, help="JSONL of {prompt_id, problem} rows.")
@click.option("--output", "-o", required=True, help="Results JSONL path.")
@click.option("--config", "config_path", default=None)
@click.option("--kappa", type=float, default=None, help="Pruning threshold (default 0.7).")
@add_options(judge_options)
def cmd_verify(graphs, problems, output, config_path, kappa,
               judge, judge_url, judge_model, cache_path) -> None:
    """Run guided self-verification per graph using its matching problem text."""
    config = _load_config(config_path)
    the_judge = _make_judge(config, judge, judge_url, judge_model, cache_path)
    kappa_value = _resolve(kappa, config, "kappa", 0.7)
    if not 0.0 <= kappa_value <= 1.0:
        raise click.UsageError(f"kappa must be in [0, 1]: {kappa_value}")

    problem_by_id: dict[str, str] = {}
    with open(problems, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                problem_by_id[str(rec["prompt_id"])] = rec["problem"]

    graph_list = _load_graphs(graphs)
    missing = [g.prompt_id for g in graph_list if g.prompt_id not in problem_by_id]
    if missing:
        raise click.UsageError(f"missing problem text for: {', '.join(missing)}")

    failures: list[tuple[str, Exception]] = []
    with open(output, "w", encoding="utf-8") as out:
        for graph in graph_list:
            try:
                result = guided_self_verify(
                    graph, None, kappa_value, the_judge, problem_by_id[graph.prompt_id]
                )
            except Exception as exc:
                failures.append((graph.prompt_id, exc))
                continue
            row = {"prompt_id": graph.prompt_id, **result.to_json()}
            out.write(json.dumps(row, ensure_ascii=False) + "\n")
    _finish(failures)


@cli.command("stats")
@click.option("--graphs", "-g", default=None, help="Graph JSON file or directory.")
@click.option("--json", "as_json", is_flag=True, help="Emit JSON instead of a table.")
@click.option("--overlap-input", default=None, help="Response JSONL for the overlap profile.")
@click.option("--quantiles", type=int, default=10, show_default=True)
@click.option("--shuffle-baseline", is_flag=True, help="Also print the sentence-shuffled baseline.")
@click.option("--seed", type=int, default=42, show_default=True)
def cmd_stats(graphs, as_json, overlap_input, quantiles, shuffle_baseline, seed) -> None:
    """Per-graph statistics and (optionally) the lexical-overlap profile."""
    if not graphs and not overlap_input:
        raise click.UsageError("provide --graphs and/or --overlap-input")
    if graphs:
        rows = [graph_stats(g) for g in _load_graphs(graphs)]
        if as_json:
            click.echo(json.dumps([r.to_json() for r in rows], indent=2))
        else:
            click.echo(stats_table(rows), nl=False)
    if overlap_input:
        for rs in load_response_sets(overlap_input):
            profile = lexical_overlap_profile(rs, n_quantiles=quantiles)
            line = {"prompt_id": rs.prompt_id, "profile": [round(v, 4) for v in profile]}
            if shuffle_baseline:
                base = lexical_overlap_profile(
                    rs, n_quantiles=quantiles, shuffle_baseline=True, seed=seed
                )
                line["shuffled_baseline"] = [round(v, 4) for v in base]
            click.echo(json.dumps(line, ensure_ascii=False))


@cli.command("export-dot")
@click.option("--graphs", "-g", required=True, help="Graph JSON file or directory.")
@click.option("--output-dir", "-o", required=True, help="Directory for DOT files.")
def cmd_export_dot(graphs, output_dir) -> None:
    """Write one Graphviz DOT file per graph."""
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for path in _graph_files(graphs):
        graph = ConsensusGraph.loads(path.read_text(encoding="utf-8"))
        (outdir / f"{path.stem}.dot").write_text(graph.to_dot(), encoding="utf-8")


@cli.command("cache-info")
@click.option("--cache-path", required=True, help="Verdict cache JSONL path.")
def cmd_cache_info(cache_path) -> None:
    """Summarize the verdict cache: total entries and per-kind counts."""
    cache = VerdictCache(cache_path)
    click.echo(json.dumps({"entries": len(cache), "by_kind": cache.counts_by_kind()}, indent=2))


def main(argv: list[str] | None = None) -> int:
    """Entry point mapping errors onto the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    except JudgeTransportError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_JUDGE_UNAVAILABLE
    except ConsgraphError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
