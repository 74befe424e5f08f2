"""`shuffle-loader` command line: gen, convert, bench, verify, compare.

Flags are generated from `BenchSettings`, so every flag can also be set
through its `SHUFFLE_LOADER_*` environment variable. Flags typed on the
command line win over the environment.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from tqdm import tqdm

from ..command_line import add_settings_arguments, explicit_arguments
from ..config import BenchSettings
from ..dataset_format import (
    SampleEncoding,
    convert_stream_to_indexable,
    write_file_tree,
    write_indexable_dataset,
    write_stream_dataset,
)
from ..dataset_format.convert import ConversionStats
from ..errors import (
    AbortedFileError,
    BatchFetchError,
    ConversionError,
    DatasetFormatError,
    ShuffleLoaderError,
    VerificationError,
)
from ..fetch_engine import FetchConfig, FetchStrategy
from .compare import compare
from .metrics import append_csv, append_jsonl, read_csv
from .runner import BenchConfig, run_bench
from .synth import DatasetKind, payload_size, payloads_for
from .verify import verify_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFICATION = 2
EXIT_IO = 3

NEGATIVE_FLAGS = {"ordered": "unordered"}

HELP = {
    "samples": "number of samples (bench: expected dataset size)",
    "sample_bytes": "payload size of opaque random samples (minimum with --max-sample-bytes)",
    "max_sample_bytes": "write variable-size, length-prefixed samples up to this size",
    "variable_samples_per_chunk": "samples per chunk for variable-size samples",
    "dim": "write SyntheticSamples of this dimension instead of random bytes",
    "chunk_samples": "samples per chunk (default: derived from --chunk-bytes)",
    "chunk_bytes": "target chunk size in bytes",
    "seed": "random seed",
    "format": "dataset layout",
    "checksum": "chunk checksum algorithm",
    "mode": "shuffle mode",
    "ordered": "serial in-order batch generation (--unordered: concurrent, the default)",
    "batch_size": "samples per batch",
    "steps": "measured steps per repeat",
    "warmup": "unmeasured steps before each repeat",
    "repeats": "measured repeats",
    "concurrency": "concurrent fetches per learner (0: one per batch sample)",
    "prefetch_depth": "batches in flight beyond the current one",
    "assembly": "intra-batch assembly order",
    "inject_latency_us": "synthetic latency added to every chunk read, microseconds",
    "compute_us": "simulated compute per step, microseconds",
    "workers": "data-parallel learners to emulate",
    "buffer_size": "buffer size for --mode buffered",
    "open": "open chunked files through the footer index or by scanning every chunk",
    "cache_chunks": "per-handle LRU chunk cache size (0 disables)",
    "drop_cache": "evict the dataset from the OS page cache before each repeat",
    "out": "CSV file to append rows to",
    "json": "also append rows as JSON lines next to --out",
    "log_level": "logging level",
}

GEN_SETTINGS = [
    "samples", "sample_bytes", "max_sample_bytes", "dim", "chunk_samples", "chunk_bytes",
    "variable_samples_per_chunk", "seed", "format", "checksum",
]
BENCH_SETTINGS = [
    "samples", "mode", "ordered", "batch_size", "steps", "warmup", "repeats", "concurrency",
    "prefetch_depth", "assembly", "inject_latency_us", "compute_us", "workers", "buffer_size",
    "seed", "open", "cache_chunks", "drop_cache", "out", "json",
]
COMPARE_SETTINGS = ["out"]


class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors with the validation exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    """The full parser with one subparser per command."""
    parser = _ArgumentParser(
        prog="shuffle-loader",
        description="Globally shuffled dataset loading: generate, convert, benchmark, verify.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def subcommand(name: str, help_text: str, settings: Sequence[str]) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        add_settings_arguments(
            sub,
            BenchSettings,
            list(settings) + ["log_level"],
            negative_flags=NEGATIVE_FLAGS,
            help_texts=HELP,
        )
        return sub

    gen = subcommand("gen", "generate a deterministic synthetic dataset", GEN_SETTINGS)
    gen.add_argument("path", type=Path, help="output file (directory for --format tree)")

    convert = subcommand("convert", "convert a stream file to an indexable file", [])
    convert.add_argument("source", type=Path)
    convert.add_argument("destination", type=Path)

    bench = subcommand("bench", "run the loading benchmark", BENCH_SETTINGS)
    bench.add_argument("dataset", type=Path)

    verify = subcommand("verify", "verify checksums, footer and sibling consistency", [])
    verify.add_argument("dataset", type=Path)
    verify.add_argument("--sibling", type=Path, help="the same dataset in the other layout")

    compare_parser = subcommand("compare", "speedup table from a metrics CSV", COMPARE_SETTINGS)
    compare_parser.add_argument("metrics", type=Path)
    compare_parser.add_argument("--baseline", required=True, help="label, e.g. indices-mapping/ordered")
    compare_parser.add_argument("--candidate", required=True, help="label, e.g. indices-mapping/unordered")
    return parser


def _samples_per_chunk(settings) -> Optional[int]:
    for name, source in (
        ("chunk_samples", "--chunk-samples"),
        ("samples_per_chunk", BenchSettings.env_name("samples_per_chunk")),
    ):
        value = getattr(settings, name)
        if value is not None:
            if value < 1:
                raise ValueError(f"{source} must be at least 1, got {value}")
            return value
    return None


def cmd_gen(args: argparse.Namespace, settings) -> int:
    n = settings.samples
    if n < 0:
        raise ValueError(f"--samples must be non-negative, got {n}")
    samples_per_chunk = _samples_per_chunk(settings)
    payloads = payloads_for(
        n, settings.seed, settings.sample_bytes, settings.dim, settings.max_sample_bytes
    )
    if settings.max_sample_bytes is None:
        encoding = SampleEncoding.FIXED_SIZE
        fixed_sample_bytes = payload_size(settings.sample_bytes, settings.dim)
    else:
        encoding, fixed_sample_bytes = SampleEncoding.LENGTH_PREFIXED, None
    with tqdm(payloads, total=n, unit="sample", desc="gen", disable=None) as progress:
        if settings.format is DatasetKind.TREE:
            write_file_tree(progress, args.path)
            print(f"wrote {n} sample files under {args.path}")
            return EXIT_OK
        writer = (
            write_stream_dataset if settings.format is DatasetKind.STREAM else write_indexable_dataset
        )
        writer(
            progress,
            args.path,
            samples_per_chunk,
            encoding=encoding,
            fixed_sample_bytes=fixed_sample_bytes,
            total_samples=n,
            checksum=settings.checksum,
            chunk_bytes=settings.chunk_bytes,
            variable_samples_per_chunk=settings.variable_samples_per_chunk,
        )
    print(f"wrote {n} samples to {args.path} ({args.path.stat().st_size} bytes, {settings.format.label})")
    return EXIT_OK


def cmd_convert(args: argparse.Namespace, settings) -> int:
    stats = ConversionStats()
    total = args.source.stat().st_size
    with tqdm(total=total, unit="B", unit_scale=True, desc="convert", disable=None) as progress:
        manifest = convert_stream_to_indexable(
            args.source, args.destination, stats=stats, progress=progress.update
        )
    print(
        f"{args.destination}: {manifest.schema.total_samples} samples, "
        f"{stats.chunks} chunks, {stats.bytes_written} bytes, "
        f"peak chunk buffer {stats.peak_buffer_bytes} bytes"
    )
    return EXIT_OK


def bench_config_from_settings(dataset: Path, settings, expected_samples: Optional[int]) -> BenchConfig:
    """Translate resolved settings into a BenchConfig."""
    concurrency = settings.concurrency
    if concurrency is None:
        concurrency = settings.max_concurrent_fetches
    fetch = FetchConfig(
        max_concurrent_fetches=concurrency,
        prefetch_depth=settings.prefetch_depth,
        assembly=settings.assembly,
        synthetic_read_latency=settings.inject_latency_us / 1e6,
        strategy=FetchStrategy.ORDERED if settings.ordered else FetchStrategy.UNORDERED,
    )
    return BenchConfig(
        dataset_path=dataset,
        mode=settings.mode,
        batch_size=settings.batch_size,
        steps=settings.steps,
        warmup_steps=settings.warmup,
        repeats=settings.repeats,
        fetch=fetch,
        simulated_compute=settings.compute_us / 1e6,
        workers=settings.workers,
        seed=settings.seed,
        buffer_size=settings.buffer_size,
        open_mode=settings.open,
        cache_chunks=settings.cache_chunks,
        drop_cache=settings.drop_cache,
        expected_samples=expected_samples,
    )


def cmd_bench(args: argparse.Namespace, settings, explicit: Dict[str, object]) -> int:
    expected = settings.samples if "samples" in explicit else None
    config = bench_config_from_settings(args.dataset, settings, expected)
    rows = run_bench(config)
    if settings.out is not None:
        append_csv(settings.out, rows)
        if settings.json:
            append_jsonl(Path(settings.out).with_suffix(".jsonl"), rows)
    for row in rows:
        print(
            f"{row.label} {row.variant} {row.repeat}: "
            f"{row.samples_per_second:.1f} samples/s, wall {row.wall_time:.3f}s"
        )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, settings) -> int:
    report = verify_dataset(args.dataset, args.sibling)
    print(report.summary())
    report.raise_for_failure()
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, settings) -> int:
    result = compare(read_csv(args.metrics), args.baseline, args.candidate)
    print(result.table())
    if settings.out is not None:
        result.write_csv(settings.out)
    return EXIT_OK


COMMANDS: Dict[str, Callable[..., int]] = {
    "gen": cmd_gen,
    "convert": cmd_convert,
    "verify": cmd_verify,
    "compare": cmd_compare,
}


def _exit_code(error: BaseException, command: str) -> int:
    if isinstance(error, BatchFetchError):
        return EXIT_IO if isinstance(error.cause, OSError) else EXIT_VERIFICATION
    if isinstance(error, (AbortedFileError, OSError)):
        return EXIT_IO
    if isinstance(error, (VerificationError, ConversionError)):
        return EXIT_VERIFICATION
    if command == "verify" and isinstance(error, DatasetFormatError):
        return EXIT_VERIFICATION
    return EXIT_VALIDATION


def _log_environment() -> None:
    from_env = BenchSettings.from_env()
    names = [name for name in BenchSettings.setting_names() if hasattr(from_env, name)]
    for name in names:
        logger.info("%s=%r from %s", name, getattr(from_env, name), BenchSettings.env_name(name))


def main(argv: Optional[List[str]] = None) -> int:
    """Run the command line and return the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_VALIDATION
    explicit = explicit_arguments(args, BenchSettings, argv, NEGATIVE_FLAGS)
    BenchSettings.apply_command_line(explicit)
    try:
        settings = BenchSettings.to_static()
        logging.basicConfig(
            level=str(settings.log_level).upper(),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        _log_environment()
        if args.command == "bench":
            return cmd_bench(args, settings, explicit)
        return COMMANDS[args.command](args, settings)
    except (ValueError, ShuffleLoaderError, OSError) as e:
        print(f"shuffle-loader {args.command}: {e}", file=sys.stderr)
        return _exit_code(e, args.command)
    finally:
        BenchSettings.clear_command_line()


if __name__ == "__main__":
    sys.exit(main())
