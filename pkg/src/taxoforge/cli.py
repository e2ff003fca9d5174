"""Command line front end.

Exit status: 0 on success, 1 on a domain error (message on stderr),
2 on a usage error.
"""

import argparse
import json
import logging
import signal
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

from taxoforge import __version__
from taxoforge.config import load_config, resolve_config_path
from taxoforge.errors import TaxoforgeError

log = logging.getLogger("taxoforge")

SUBCOMMANDS = ("fetch-taxa", "crawl", "stats", "eval-plan", "eval-split", "eval-restore", "eval-run", "hash", "version")


def _dataset_arg(text):
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return name, Path(path)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (default: $TAXOFORGE_CONFIG or ./taxoforge.json)")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--log-level", default="INFO")

    ap = argparse.ArgumentParser(prog="taxoforge", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True

    p = sub.add_parser("fetch-taxa", parents=[common], help="list species grouped by rank as JSON")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("crawl", parents=[common], help="crawl images into the dataset (resumable)")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("stats", parents=[common], help="dataset statistics as JSON")
    p.add_argument("root", nargs="?", help="dataset root (default: dataset_root from config)")

    p = sub.add_parser("eval-plan", parents=[common], help="plan category-intersection runs")
    p.add_argument("datasets", nargs="+", type=_dataset_arg, metavar="NAME=PATH")

    p = sub.add_parser("eval-split", parents=[common], help="isolate a seeded holdout subset")
    p.add_argument("root")
    p.add_argument("--per-cat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", help="holdout directory (default: <root>.holdout)")

    p = sub.add_parser("eval-restore", parents=[common], help="put a holdout subset back")
    p.add_argument("manifest", help="manifest.json or the holdout directory holding it")

    p = sub.add_parser("eval-run", parents=[common], help="run the evaluation protocol")
    p.add_argument("datasets", nargs="+", type=_dataset_arg, metavar="NAME=PATH")
    p.add_argument("--run", help="only this run (default: all planned runs)")
    p.add_argument("--per-cat", type=int, default=5)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=5)

    p = sub.add_parser("hash", parents=[common], help="print the 64-bit average hash of an image")
    p.add_argument("file")

    sub.add_parser("version", parents=[common], help="print the version")
    return ap


def _emit(args, payload):
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def _config(args, required=True):
    path = resolve_config_path(args.config)
    if not required and not path.exists():
        return None
    cfg = load_config(path)
    if getattr(args, "workers", None):
        cfg = replace(cfg, workers=args.workers)
    return cfg


def cmd_fetch_taxa(args):
    from taxoforge.taxonomy import TaxonomyClient

    cfg = _config(args)
    client = TaxonomyClient(cfg.api_base, cfg.http, workers=cfg.workers)
    entries = client.collect_species(cfg.root_taxon, cfg.leaf_rank, cfg.group_rank)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        statuses = list(pool.map(lambda e: client.resolve_status(e.species_key), entries))
    _emit(args, [replace(e, status=s).to_dict() for e, s in zip(entries, statuses)])
    return 0


def cmd_crawl(args):
    from taxoforge.gate import make_backend
    from taxoforge.pipeline import run_crawl
    from taxoforge.store import StateStore

    cfg = _config(args)
    stop = threading.Event()

    def on_signal(signum, frame):
        log.warning("signal %d: finishing in-flight work and checkpointing", signum)
        stop.set()

    previous = {s: signal.signal(s, on_signal) for s in (signal.SIGINT, signal.SIGTERM)}
    backend = make_backend(cfg.classifier, labels=[cfg.positive_label])
    try:
        with StateStore(cfg.state_path) as store:
            report = run_crawl(cfg, store, backend, stop=stop)
            cursor = store.cursor
    finally:
        for s, h in previous.items():
            signal.signal(s, h)
        if hasattr(backend, "close"):
            backend.close()
    out = asdict(report)
    out["cursor"] = cursor
    _emit(args, out)
    if report.interrupted:
        print(f"interrupted after {cursor} species; state saved, re-run crawl to resume", file=sys.stderr)
        return 1
    return 0


def cmd_stats(args):
    from taxoforge.layout import stats

    root = args.root or _config(args).dataset_root
    if not Path(root).is_dir():
        raise TaxoforgeError(f"not a directory: {root}")
    _emit(args, stats(root).to_dict())
    return 0


def cmd_eval_plan(args):
    from taxoforge.evaluation import plan_runs
    from taxoforge.layout import category_sets

    names = [n for n, _ in args.datasets]
    sets = category_sets([p for _, p in args.datasets])
    _emit(args, [r.to_dict() for r in plan_runs(zip(names, sets))])
    return 0


def cmd_eval_split(args):
    from taxoforge.evaluation import isolate_subset

    m = isolate_subset(args.root, args.per_cat, args.seed, holdout=args.holdout)
    _emit(args, json.loads(m.to_json()))
    return 0


def cmd_eval_restore(args):
    from taxoforge.evaluation import MANIFEST_NAME, restore_subset

    path = Path(args.manifest)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise TaxoforgeError(f"no manifest at {path}")
    restore_subset(path)
    return 0


def _eval_backend(cfg, labels):
    from taxoforge.gate import CommandBackend, FolderBackend, make_backend

    if cfg is None:
        return FolderBackend(labels), None
    if not cfg.trainer:
        return make_backend(cfg.classifier, labels), None
    if cfg.classifier.kind == "command":
        return (lambda graph, _labels: CommandBackend(cfg.classifier.command, graph)), cfg.trainer
    fixed = make_backend(cfg.classifier, labels)
    return (lambda graph, _labels: fixed), cfg.trainer


def cmd_eval_run(args):
    from taxoforge.evaluation import plan_runs, run_eval
    from taxoforge.layout import category_sets

    cfg = _config(args, required=False)
    names = [n for n, _ in args.datasets]
    sets = category_sets([p for _, p in args.datasets])
    plans = plan_runs(zip(names, sets))
    if args.run:
        plans = [p for p in plans if p.name == args.run]
        if not plans:
            raise TaxoforgeError(f"no run named {args.run!r}")
    backend, trainer = _eval_backend(cfg, set().union(*sets))
    roots = dict(args.datasets)
    results = []
    for plan in plans:
        res = run_eval(plan, roots, backend, args.per_cat, args.repeats, args.seed, trainer=trainer, k=args.k)
        print(res.table(), file=sys.stderr)
        results.append(res.to_dict())
    if hasattr(backend, "close"):
        backend.close()
    _emit(args, results)
    return 0


def cmd_hash(args):
    from taxoforge.imaging import average_hash, decode, hash_hex

    _emit(args, hash_hex(average_hash(decode(Path(args.file).read_bytes()))))
    return 0


def cmd_version(args):
    _emit(args, f"taxoforge {__version__}")
    return 0


COMMANDS = {
    "fetch-taxa": cmd_fetch_taxa,
    "crawl": cmd_crawl,
    "stats": cmd_stats,
    "eval-plan": cmd_eval_plan,
    "eval-split": cmd_eval_split,
    "eval-restore": cmd_eval_restore,
    "eval-run": cmd_eval_run,
    "hash": cmd_hash,
    "version": cmd_version,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return COMMANDS[args.command](args)
    except (TaxoforgeError, OSError) as exc:
        print(f"taxoforge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
