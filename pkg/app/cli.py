"""
grep-style command line: match a query against perception streams.

Exit codes follow grep: 0 when something matched, 1 when nothing did,
2 on any error.
"""

import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterator, List, Optional, Sequence, Tuple

import click

from app.automaton import StateLimitError, to_dot
from app.bench import measure_online, run_benchmark, run_sweep
from app.config import (
    BENCH_SAMPLES,
    BENCH_WARMUP,
    GENERATOR_CLASSES,
    GENERATOR_FRAMES,
    GENERATOR_HEIGHT,
    GENERATOR_OBJECTS_PER_FRAME,
    GENERATOR_OVERLAP_PROBABILITY,
    GENERATOR_SEED,
    GENERATOR_WIDTH,
    KEYFRAME_EPSILON,
    LOG_FORMAT,
    LOG_LEVEL,
)
from app.generator import GeneratorConfig, GeneratorError, generate_stream
from app.ingest import IngestConfig, IngestError, iter_frames, load_stream, write_stream
from app.matcher import CompiledQuery, MatchReport, MatcherConfigError, OnlineSession, match_offline, report
from app.monitor import MonitorError
from app.parser import QueryError
from app.regions import RegionError
from app.stream import StreamError

logger = logging.getLogger(__name__)

DOMAIN_ERRORS = (
    QueryError,
    IngestError,
    MonitorError,
    StateLimitError,
    MatcherConfigError,
    RegionError,
    StreamError,
    GeneratorError,
    OSError,
)


class CommandError(click.ClickException):
    """Error reported on stderr with exit status 2."""

    exit_code = 2


@contextmanager
def _open_input(path: str) -> Iterator[IO[bytes]]:
    if path == "-":
        yield click.get_binary_stream("stdin")
    else:
        with open(path, "rb") as handle:
            yield handle


def _format(match: MatchReport, output_format: str, source: Optional[str]) -> str:
    if output_format == "json":
        data = match.to_dict()
        if source is not None:
            data["input"] = source
        return json.dumps(data, separators=(",", ":"))
    prefix = f"{source}:" if source is not None else ""
    return f"{prefix}{match}"


def _offline_reports(query: CompiledQuery, path: str, config: IngestConfig, channel: Optional[str]) -> List[MatchReport]:
    with _open_input(path) as handle:
        stream = load_stream(handle, config)
    found = match_offline(stream, query.forward, query.monitor(channel))
    return [report(stream, match, query.text, channel) for match in found]


def _offline_worker(args: Tuple[str, str, IngestConfig, Optional[str]]) -> Tuple[List[MatchReport], Optional[str]]:
    query_text, path, config, channel = args
    try:
        return _offline_reports(CompiledQuery.compile(query_text), path, config, channel), None
    except DOMAIN_ERRORS as e:
        # domain exceptions carry extra constructor arguments and do not survive pickling
        return [], f"{path}: {e}"


def _run_offline(
    query: CompiledQuery,
    inputs: Sequence[str],
    config: IngestConfig,
    channel: Optional[str],
    jobs: int,
) -> List[Tuple[str, List[MatchReport]]]:
    if jobs > 1 and len(inputs) > 1 and "-" not in inputs:
        tasks = [(query.text, path, config, channel) for path in inputs]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_offline_worker, tasks))
        for _, error in results:
            if error is not None:
                raise CommandError(error)
        return [(path, reports) for path, (reports, _) in zip(inputs, results)]
    return [(path, _offline_reports(query, path, config, channel)) for path in inputs]


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose: bool):
    """Search perception streams with spatial regular expressions."""
    logging.basicConfig(
        level=logging.INFO if verbose else LOG_LEVEL,
        format=LOG_FORMAT,
        stream=sys.stderr,
    )


@cli.command("match")
@click.argument("query")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(dir_okay=False, allow_dash=True))
@click.option("--online", is_flag=True, help="Report the longest match ending at every frame.")
@click.option("--max-window", type=click.IntRange(min=1), default=None, help="Frame window for online mode.")
@click.option("--channel", default=None, help="Channel to evaluate (default: first channel).")
@click.option("--format", "output_format", type=click.Choice(["text", "json"]), default="text")
@click.option("--epsilon", type=click.FloatRange(min=0.0), default=KEYFRAME_EPSILON, help="Key-frame threshold in seconds.")
@click.option("--drop-misaligned", is_flag=True, help="Skip frames whose channels are not aligned.")
@click.option("--count", is_flag=True, help="Print only the number of matches.")
@click.option("--dump-automaton", type=click.Path(dir_okay=False), default=None, help="Write the automaton as Graphviz.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, help="Worker processes for multiple inputs.")
@click.pass_context
def match_command(
    ctx: click.Context,
    query: str,
    inputs: Tuple[str, ...],
    online: bool,
    max_window: Optional[int],
    channel: Optional[str],
    output_format: str,
    epsilon: float,
    drop_misaligned: bool,
    count: bool,
    dump_automaton: Optional[str],
    jobs: int,
):
    """Print the frame ranges of INPUTS matching QUERY ('-' reads stdin)."""
    config = IngestConfig(keyframe_threshold=epsilon, drop_misaligned=drop_misaligned)
    multiple = len(inputs) > 1
    total = 0

    try:
        compiled = CompiledQuery.compile(query)
        if dump_automaton:
            Path(dump_automaton).write_text(to_dot(compiled.forward))

        if online:
            for path in inputs:
                session = OnlineSession(compiled, channel, max_window)
                found_here = 0
                with _open_input(path) as handle:
                    for frame in iter_frames(handle, config):
                        found = session.push(frame)
                        if found is None:
                            continue
                        found_here += 1
                        if not count:
                            click.echo(_format(session.report_for(found), output_format, path if multiple else None))
                if count:
                    click.echo(f"{path}:{found_here}" if multiple else str(found_here))
                total += found_here
        else:
            for path, reports in _run_offline(compiled, inputs, config, channel, jobs):
                if count:
                    click.echo(f"{path}:{len(reports)}" if multiple else str(len(reports)))
                else:
                    for item in reports:
                        click.echo(_format(item, output_format, path if multiple else None))
                total += len(reports)
    except DOMAIN_ERRORS as e:
        logger.error(f"match failed: {e}")
        raise CommandError(str(e)) from e

    ctx.exit(0 if total else 1)


@cli.command("generate")
@click.option("-o", "--output", default="-", type=click.Path(dir_okay=False, allow_dash=True), help="Output file ('-' for stdout).")
@click.option("--frames", type=click.IntRange(min=0), default=GENERATOR_FRAMES)
@click.option("--objects-per-frame", type=click.IntRange(min=0), default=GENERATOR_OBJECTS_PER_FRAME)
@click.option("--classes", default=",".join(GENERATOR_CLASSES), help="Comma-separated classification vocabulary.")
@click.option("--overlap-probability", type=click.FloatRange(0.0, 1.0), default=GENERATOR_OVERLAP_PROBABILITY)
@click.option("--overlap-runs", type=click.IntRange(min=0), default=0, help="Plant exactly this many overlap runs.")
@click.option("--run-length", type=click.IntRange(min=1), default=3)
@click.option("--seed", type=int, default=GENERATOR_SEED)
@click.option("--width", type=float, default=GENERATOR_WIDTH)
@click.option("--height", type=float, default=GENERATOR_HEIGHT)
def generate_command(
    output: str,
    frames: int,
    objects_per_frame: int,
    classes: str,
    overlap_probability: float,
    overlap_runs: int,
    run_length: int,
    seed: int,
    width: float,
    height: float,
):
    """Write a seeded synthetic stream as newline-delimited JSON."""
    try:
        config = GeneratorConfig(
            frames=frames,
            objects_per_frame=objects_per_frame,
            classes=tuple(name.strip() for name in classes.split(",") if name.strip()),
            overlap_probability=overlap_probability,
            overlap_runs=overlap_runs,
            run_length=run_length,
            width=width,
            height=height,
            seed=seed,
        )
        stream = generate_stream(config)
        with click.open_file(output, "w") as sink:
            written = write_stream(stream, sink)
    except DOMAIN_ERRORS as e:
        logger.error(f"generate failed: {e}")
        raise CommandError(str(e)) from e
    logger.info(f"Wrote {written} frames to {output}")


@cli.command("bench")
@click.argument("query")
@click.argument("input_path", metavar="INPUT", type=click.Path(dir_okay=False, allow_dash=True))
@click.option("--samples", type=click.IntRange(min=1), default=BENCH_SAMPLES)
@click.option("--warmup", type=click.IntRange(min=0), default=BENCH_WARMUP, help="Untimed runs before sampling.")
@click.option("--sweep", type=click.IntRange(min=1), default=None, help="Benchmark N evenly spaced stream prefixes.")
@click.option("--online", is_flag=True, help="Measure per-frame online cost instead.")
@click.option("--max-window", type=click.IntRange(min=1), default=None)
@click.option("--channel", default=None)
@click.option("--epsilon", type=click.FloatRange(min=0.0), default=KEYFRAME_EPSILON)
@click.option("--drop-misaligned", is_flag=True)
@click.option("--format", "output_format", type=click.Choice(["text", "json"]), default="text")
def bench_command(
    query: str,
    input_path: str,
    samples: int,
    warmup: int,
    sweep: Optional[int],
    online: bool,
    max_window: Optional[int],
    channel: Optional[str],
    epsilon: float,
    drop_misaligned: bool,
    output_format: str,
):
    """Time matching of QUERY over INPUT."""
    config = IngestConfig(keyframe_threshold=epsilon, drop_misaligned=drop_misaligned)
    try:
        compiled = CompiledQuery.compile(query)
        with _open_input(input_path) as handle:
            stream = load_stream(handle, config)
        if online:
            rows = [measure_online(compiled, stream, max_window, channel).to_dict()]
        elif sweep:
            rows = [item.to_dict() for item in run_sweep(compiled, stream, sweep, samples, channel, warmup)]
        else:
            rows = [run_benchmark(compiled, stream, samples, channel, warmup).to_dict()]
    except DOMAIN_ERRORS as e:
        logger.error(f"bench failed: {e}")
        raise CommandError(str(e)) from e

    for row in rows:
        if output_format == "json":
            click.echo(json.dumps(row, separators=(",", ":")))
        else:
            click.echo(" ".join(f"{key}={value}" for key, value in row.items() if key != "query"))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point returning the exit status.

    A first argument that is not a subcommand is treated as a query, so
    `spre QUERY INPUT` is shorthand for `spre match QUERY INPUT`.
    """
    args = list(sys.argv[1:] if argv is None else argv)
    if args and args[0] not in cli.commands and not args[0].startswith("-"):
        args.insert(0, "match")
    try:
        result = cli.main(args=args, prog_name="spre", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 2 if isinstance(e, (CommandError, click.UsageError)) else e.exit_code
    except click.Abort:
        return 2
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
