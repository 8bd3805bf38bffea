"""dedupacq command-line interface.

Exit codes: 0 success, 1 other error, 2 reconstruction mismatch,
3 missing artifacts, 4 I/O error, 5 protocol error.
"""

from __future__ import annotations

import contextlib
import functools
import json
import logging
import sys
from pathlib import Path

import click
import httpx

from . import corpus
from .acquire import acquire as run_acquire
from .digest import ArtifactDigest
from .errors import DedupAcqError, MissingArtifactsError, ProtocolError
from .index import DedupIndex
from .manifest import MANIFEST_SUFFIX, parse_manifest, write_manifest
from .reconstruct import BrokenChainError, reconstruct as run_reconstruct, resolve_chain
from .repository import Repository
from .report import triage_report
from .segmenter import DEFAULT_BLOCK_SIZE, DEFAULT_RISK_PREFIX, SourceSpec

EXIT_MISMATCH = 2
EXIT_MISSING = 3
EXIT_IO = 4
EXIT_PROTOCOL = 5


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MissingArtifactsError as exc:
            click.echo(f"error: {len(exc.digests)} missing artifact(s):", err=True)
            for d in exc.digests:
                click.echo(str(d), err=True)
            sys.exit(EXIT_MISSING)
        except BrokenChainError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_MISSING)
        except (ProtocolError, httpx.HTTPError) as exc:
            click.echo(f"protocol error: {exc}", err=True)
            sys.exit(EXIT_PROTOCOL)
        except OSError as exc:
            click.echo(f"I/O error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except (DedupAcqError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


def backend_options(fn):
    fn = click.option("--offline", type=click.Path(file_okay=False, path_type=Path),
                      help="Local repository directory instead of a server.")(fn)
    fn = click.option("--token", envvar="DEDUPACQ_TOKEN", help="Bearer token for the server.")(fn)
    fn = click.option("--server", envvar="DEDUPACQ_SERVER", help="Manifest service URL.")(fn)
    return fn


@contextlib.contextmanager
def open_backend(server, token, offline, required=True):
    if server and offline:
        raise click.UsageError("--server and --offline are mutually exclusive")
    if offline:
        with Repository(offline) as repo:
            yield repo
    elif server:
        from .service.client import ServiceClient
        with ServiceClient(server, token) as client:
            yield client
    elif required:
        raise click.UsageError("one of --server URL or --offline DIR is required")
    else:
        yield None


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              help="JSON file of default option values, keyed by command name.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config, verbose):
    """Deduplicated evidence acquisition and reconstruction."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if config:
        ctx.default_map = json.loads(Path(config).read_text("utf-8"))


@main.command()
@click.argument("source", type=click.Path(exists=True, path_type=Path))
@click.option("--case", "case_id", required=True, help="Case identifier.")
@click.option("--kind", type=click.Choice(["raw_image", "directory_tree"]), default=None,
              help="Source kind (default: guessed from SOURCE).")
@click.option("--block-size", type=int, default=DEFAULT_BLOCK_SIZE, show_default=True)
@click.option("--risk", type=int, is_flag=False, flag_value=DEFAULT_RISK_PREFIX, default=None,
              help=f"Deduplicate on partial digests of this many leading bytes (bare flag: {DEFAULT_RISK_PREFIX}).")
@click.option("--snapshot-of", help="Manifest id of the previous acquisition of this device.")
@click.option("--local-index", type=click.Path(file_okay=False, path_type=Path),
              help="Client-side lookup database to consult and update.")
@click.option("--meta", multiple=True, help="Device metadata as key=value (repeatable).")
@click.option("--manifest-out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--report-json", type=click.Path(dir_okay=False, path_type=Path))
@backend_options
@_handle_errors
def acquire(source, case_id, kind, block_size, risk, snapshot_of, local_index, meta,
            manifest_out, report_json, server, token, offline):
    """Acquire SOURCE, uploading only artifacts the store has never seen."""
    kind = kind or ("directory_tree" if source.is_dir() else "raw_image")
    spec = SourceSpec(source, kind, block_size, risk)
    device_meta = {}
    for item in meta:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.BadParameter(f"expected key=value, got {item!r}", param_hint="--meta")
        device_meta[key] = value
    device_meta.setdefault("source_name", source.name)
    with open_backend(server, token, offline) as backend, contextlib.ExitStack() as stack:
        index = stack.enter_context(DedupIndex(local_index)) if local_index else None
        result = run_acquire(spec, backend, case_id=case_id, device_meta=device_meta,
                             snapshot_of=snapshot_of, local_index=index)
    out = manifest_out or Path(f"{result.manifest.manifest_id}{MANIFEST_SUFFIX}")
    write_manifest(result.manifest, out)
    click.echo(result.report.to_text(), nl=False)
    click.echo(f"manifest written to {out}")
    if report_json:
        report_json.write_text(json.dumps(result.report.to_dict(), indent=2) + "\n")


def _load_manifest(ref, backend):
    path = Path(ref)
    if path.is_file():
        return parse_manifest(path.read_bytes())
    if backend is None:
        raise click.UsageError(f"{ref} is not a manifest file and no --server/--offline was given")
    return backend.get_manifest(ref)


@main.command()
@click.argument("manifest")
@click.argument("target", type=click.Path(path_type=Path))
@click.option("--workers", type=int, default=8, show_default=True)
@backend_options
@_handle_errors
def reconstruct(manifest, target, workers, server, token, offline):
    """Rebuild MANIFEST (file or id) into TARGET and verify it."""
    with open_backend(server, token, offline) as backend:
        m = _load_manifest(manifest, backend)
        if m.snapshot_of is not None:
            resolve_chain(lambda mid: m if mid == m.manifest_id else backend.get_manifest(mid), m.manifest_id)
        result = run_reconstruct(m, backend, target, workers=workers)
    click.echo(result.describe())
    if not result.verified:
        sys.exit(EXIT_MISMATCH)


@main.command()
@click.argument("digest")
@click.argument("category", type=click.Choice(["benign", "incriminating"]))
@click.option("--note", default="")
@click.option("--hashset", help="Hash set to add the digest to (default: named after CATEGORY).")
@click.option("--local-index", type=click.Path(file_okay=False, path_type=Path))
@backend_options
@_handle_errors
def flag(digest, category, note, hashset, local_index, server, token, offline):
    """Mark DIGEST as benign or incriminating."""
    d = ArtifactDigest.parse(digest)
    if local_index:
        with DedupIndex(local_index) as index:
            rec = index.flag(d, category, note, hashset)
    else:
        with open_backend(server, token, offline) as backend:
            rec = backend.flag(d, category, note, hashset)
    click.echo(f"{rec.digest} -> {rec.category.value}")


@main.group()
def hashset():
    """Import, export, pull and push hash sets."""


@hashset.command("pull")
@click.argument("name")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--local-index", type=click.Path(file_okay=False, path_type=Path),
              help="Also import the set into this local index.")
@backend_options
@_handle_errors
def hashset_pull(name, out, local_index, server, token, offline):
    """Download hash set NAME from the service."""
    with open_backend(server, token, offline) as backend:
        data = backend.export_hashset(name)
    if local_index:
        with DedupIndex(local_index) as index:
            index.import_hashset(data)
    if out:
        out.write_bytes(data)
    elif not local_index:
        click.echo(data.decode(), nl=False)


@hashset.command("push")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@backend_options
@_handle_errors
def hashset_push(file, server, token, offline):
    """Upload a hash-set FILE to the service (or offline repository)."""
    with open_backend(server, token, offline) as backend:
        result = backend.import_hashset(file.read_bytes())
    name = result["name"] if isinstance(result, dict) else result.name
    click.echo(f"imported hash set {name}")


@hashset.command("import")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--local-index", type=click.Path(file_okay=False, path_type=Path), required=True)
@_handle_errors
def hashset_import(file, local_index):
    """Import a hash-set FILE into a local index."""
    with DedupIndex(local_index) as index:
        hs = index.import_hashset(file)
    click.echo(f"hash set {hs.name}: {len(hs.digests)} digests ({hs.category.value})")


@hashset.command("export")
@click.argument("name")
@click.option("--local-index", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path))
@_handle_errors
def hashset_export(name, local_index, out):
    """Export hash set NAME from a local index."""
    with DedupIndex(local_index) as index:
        data = index.export_hashset(name)
    if out:
        out.write_bytes(data)
    else:
        click.echo(data.decode(), nl=False)


@main.command()
@click.argument("manifest")
@click.option("--json", "as_json", is_flag=True, help="Emit JSON instead of text.")
@click.option("--local-index", type=click.Path(file_okay=False, path_type=Path))
@backend_options
@_handle_errors
def report(manifest, as_json, local_index, server, token, offline):
    """Triage report for MANIFEST (file or id)."""
    with open_backend(server, token, offline, required=False) as backend, contextlib.ExitStack() as stack:
        m = _load_manifest(manifest, backend)
        index = stack.enter_context(DedupIndex(local_index)) if local_index else backend
        rep = triage_report(m, index)
    if as_json:
        click.echo(json.dumps(rep.to_dict(), indent=2))
    else:
        click.echo(rep.to_text(), nl=False)


@main.command()
@backend_options
@_handle_errors
def stats(server, token, offline):
    """Store statistics (artifact count, stored/logical bytes, savings)."""
    with open_backend(server, token, offline) as backend:
        s = backend.stats()
    click.echo(json.dumps(s.as_dict(), indent=2))


@main.command()
@click.option("--offline", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--server", envvar="DEDUPACQ_SERVER", required=True)
@click.option("--token", envvar="DEDUPACQ_TOKEN")
@_handle_errors
def sync(offline, server, token):
    """Push every offline acquisition to a server."""
    from .service.client import ServiceClient
    from .sync import push_repository

    with Repository(offline) as repo, ServiceClient(server, token) as client:
        mapping = push_repository(repo, client)
    for local_id, remote_id in mapping.items():
        click.echo(f"{local_id} -> {remote_id}")


@main.command()
@click.option("--data", "data_root", type=click.Path(file_okay=False, path_type=Path))
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
              help="Service JSON config (data_root, host, port, tokens, max_batch, ...).")
@click.option("--host")
@click.option("--port", type=int)
@click.option("--token", "tokens", multiple=True, help="Accepted bearer token (repeatable).")
@click.option("--max-batch", type=int)
@click.option("--max-artifact-bytes", type=int)
def serve(data_root, config_file, host, port, tokens, max_batch, max_artifact_bytes):
    """Run the manifest service."""
    from .service.server import ServiceConfig, serve as run_server

    overrides = {"data_root": data_root, "host": host, "port": port, "tokens": tokens or None,
                 "max_batch": max_batch, "max_artifact_bytes": max_artifact_bytes}
    if config_file:
        config = ServiceConfig.from_file(config_file, **overrides)
    else:
        if data_root is None:
            raise click.UsageError("--data or --config is required")
        config = ServiceConfig(**{k: v for k, v in overrides.items() if v is not None})
    run_server(config)


@main.group("corpus")
def corpus_group():
    """Generate synthetic test evidence."""


@corpus_group.command("image")
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=1)
@click.option("--blocks", type=int, required=True)
@click.option("--block-size", type=int, default=DEFAULT_BLOCK_SIZE)
@click.option("--tail", type=int, default=0, help="Extra bytes after the last full block.")
def corpus_image(out, seed, blocks, block_size, tail):
    corpus.gen_image(out, seed, blocks, block_size, tail)
    click.echo(str(out))


@corpus_group.command("pair")
@click.argument("directory", type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, default=1)
@click.option("--blocks", type=int, required=True)
@click.option("--overlap", type=float, required=True)
@click.option("--block-size", type=int, default=DEFAULT_BLOCK_SIZE)
def corpus_pair(directory, seed, blocks, overlap, block_size):
    directory.mkdir(parents=True, exist_ok=True)
    a, b, shared = corpus.gen_overlapping_pair(directory, seed, blocks, overlap, block_size)
    click.echo(f"{a}\n{b}\nshared blocks: {len(shared)}/{blocks}")


@corpus_group.command("collision")
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--prefix-len", type=int, default=DEFAULT_RISK_PREFIX)
@click.option("--total-len", type=int, default=2 * DEFAULT_RISK_PREFIX)
def corpus_collision(out, prefix_len, total_len):
    """Write an image of two blocks that agree only on their first PREFIX-LEN bytes."""
    a, b = corpus.gen_prefix_collision_pair(prefix_len, total_len)
    out.write_bytes(a + b)
    click.echo(f"{out}: acquire with --block-size {total_len} --risk {prefix_len}")


if __name__ == "__main__":
    main()
