"""Command line: ``divtsp {train,generate-pool,select,scaling}``.

Every option can also come from ``--config FILE`` (``key = value`` lines,
keys spelled like the long options without dashes); flags win over the file.
``DIVTSP_OUTPUT_DIR`` sets the default output directory.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .construction import read_pool, write_pool
from .instance import load_instance, load_registry, with_best_known
from .pipeline import (
    generate_pool,
    file_sha256,
    read_manifest,
    revalidate_rows,
    scaling_table,
    select_rows,
    write_manifest,
    write_report,
)
from .policy import load_checkpoint
from .reference import resolve_reference
from .training import TrainConfig, train

log = logging.getLogger("divtsp")


def _default_out() -> str:
    return os.environ.get("DIVTSP_OUTPUT_DIR", "divtsp-out")


def read_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise SystemExit(f"{path}:{line_no}: expected 'key = value'")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="divtsp", description="Diverse TSP tour pools from a learned spanning-tree policy.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file with option defaults")
        p.add_argument("--out", default=None, help="output directory (default: $DIVTSP_OUTPUT_DIR or ./divtsp-out)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a tree or matching policy")
    common(p)
    p.add_argument("--mode", choices=("tree", "matching"), default="tree")
    p.add_argument("--alpha", type=float, default=0.0, help="entropy coefficient")
    p.add_argument("--n-train", type=int, default=40)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--steps", type=int, default=1000, help="steps per epoch")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--hidden-dim", type=int, default=128)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--checkpoint-every", type=int, default=1)
    p.add_argument("--entropy-term", choices=("mean", "sum"), default="mean")
    p.add_argument("--advantage", choices=("sequence", "per_step"), default="sequence")
    p.add_argument("--aggregation", choices=("set", "neighbors"), default="set")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")

    p = sub.add_parser("generate-pool", help="sample a pool of tours")
    common(p)
    p.add_argument("--instance", required=True, help="TSPLIB path, bundled name (berlin52) or random:N:SEED")
    p.add_argument("--tree-ckpt", required=True)
    p.add_argument("--matching-ckpt")
    p.add_argument("--method", choices=("gpn-tree", "gpn-treem"), default="gpn-tree")
    p.add_argument("--pool-size", "-M", type=int, default=1000)
    p.add_argument("--fanout", type=int, default=1, help="matchings per tree (gpn-treem)")

    p = sub.add_parser("select", help="filter a pool and select k diverse tours per c")
    common(p)
    p.add_argument("--pool", required=True, help="pool file written by generate-pool")
    p.add_argument("--instance", help="defaults to the instance named in the pool manifest")
    p.add_argument("--registry", help="best-known costs file (default: bundled registry)")
    p.add_argument("--c", type=_floats, default=[2.0, 4.0, 8.0, 16.0], help="dispersion factors, e.g. '2 4 8 16'")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--first", choices=("index", "random"), default="index")

    p = sub.add_parser("scaling", help="time pool generation across instance sizes")
    common(p)
    p.add_argument("--tree-ckpt", required=True)
    p.add_argument("--sizes", type=_ints, default=[50, 100, 200, 400])
    p.add_argument("--pool-size", "-M", type=int, default=100)
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config and command:
        values = read_config_file(known.config)
        sub = parser._subparsers._group_actions[0].choices[command]
        by_dest = {a.dest: a for a in sub._actions}
        unknown = sorted(set(values) - set(by_dest))
        if unknown:
            parser.error(f"unknown keys in {known.config}: {', '.join(unknown)}")
        defaults = {}
        for dest, raw in values.items():
            action = by_dest[dest]
            defaults[dest] = action.type(raw) if action.type else raw
            # the file may supply options that are otherwise mandatory
            action.required = False
        sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.out is None:
        args.out = _default_out()
    return args


def cmd_train(args) -> int:
    config = TrainConfig(
        mode=args.mode, n_train=args.n_train, epochs=args.epochs, steps_per_epoch=args.steps,
        batch_size=args.batch_size, learning_rate=args.lr, alpha=args.alpha, seed=args.seed,
        checkpoint_every=args.checkpoint_every, hidden_dim=args.hidden_dim, n_layers=args.layers,
        aggregation=args.aggregation, entropy_term=args.entropy_term, advantage=args.advantage,
        dtype=args.dtype, out_dir=args.out,
    )
    train(config)
    print(Path(args.out) / "final.json")
    return 0


def cmd_generate_pool(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inst = load_instance(args.instance)
    tree_policy, tree_meta = load_checkpoint(args.tree_ckpt)
    matching_policy = None
    if args.method == "gpn-treem":
        if not args.matching_ckpt:
            raise SystemExit("gpn-treem needs --matching-ckpt")
        matching_policy, _ = load_checkpoint(args.matching_ckpt)
    res = generate_pool(inst, tree_policy, args.method, args.pool_size, args.seed, matching_policy, args.fanout)
    pool_path = out / "pool.txt"
    write_pool(res.tours, pool_path)
    manifest = {
        "command": "generate-pool",
        "instance": args.instance,
        "instance_name": inst.name,
        "n": inst.n,
        "method": args.method,
        "pool_size": args.pool_size,
        "fanout": args.fanout,
        "seed": args.seed,
        "alpha": tree_meta.get("alpha", ""),
        "tree_ckpt": args.tree_ckpt,
        "tree_ckpt_sha256": file_sha256(args.tree_ckpt),
        "matching_ckpt": args.matching_ckpt or "",
        "matching_ckpt_sha256": file_sha256(args.matching_ckpt) if args.matching_ckpt else "",
        "pool_file": pool_path.name,
        "pool_sha256": file_sha256(pool_path),
    }
    manifest.update({k: repr(v) for k, v in res.timings.items()})
    write_manifest(out / "pool.manifest", manifest)
    print(pool_path)
    return 0


def cmd_select(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = Path(args.pool).with_name("pool.manifest")
    manifest = read_manifest(manifest_path) if manifest_path.exists() else {}
    spec = args.instance or manifest.get("instance")
    if not spec:
        raise SystemExit("no --instance given and no pool.manifest next to the pool")
    registry = load_registry(args.registry)
    inst = with_best_known(load_instance(spec), registry)
    tours = read_pool(args.pool, inst)
    reference = resolve_reference(inst, registry, args.seed)
    alpha = manifest.get("alpha") or None
    gen_seconds = float(manifest.get("gen_seconds", 0.0))
    rows, selections = select_rows(
        inst, tours, reference, args.c, args.k, manifest.get("method", ""),
        None if alpha is None else float(alpha), gen_seconds, args.first, args.seed,
    )
    for c, selected in selections.items():
        write_pool(selected, out / f"selected_c{c:g}.txt")
    revalidate_rows(rows, selections, inst, reference)
    write_report(rows, out / "report.csv")
    write_manifest(out / "report.manifest", {
        "command": "select",
        "pool": args.pool,
        "pool_sha256": file_sha256(args.pool),
        "instance": spec,
        "registry": args.registry or "bundled",
        "c": " ".join(f"{c:g}" for c in args.c),
        "k": args.k,
        "first": args.first,
        "seed": args.seed,
        "reference_value": repr(reference.value),
        "reference_provenance": reference.provenance,
    })
    for row in rows:
        print(f"c={row['c']:g} status={row['status']} avg_jaccard={row['avg_jaccard']:.4f} "
              f"std={row['std_jaccard']:.4f} mean_cost={row['mean_cost']:.4f} filtered={row['n_filtered']}")
    return 0


def cmd_scaling(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    policy, _ = load_checkpoint(args.tree_ckpt)
    rows, slope = scaling_table(policy, args.sizes, args.pool_size, args.seed)
    with open(out / "scaling.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    write_manifest(out / "scaling.manifest", {
        "command": "scaling",
        "tree_ckpt": args.tree_ckpt,
        "tree_ckpt_sha256": file_sha256(args.tree_ckpt),
        "sizes": " ".join(map(str, args.sizes)),
        "pool_size": args.pool_size,
        "seed": args.seed,
        "loglog_slope": "" if slope is None else repr(slope),
    })
    for row in rows:
        print(f"n={row['n']} seconds={row['seconds']:.3f}")
    print("loglog_slope=" + ("n/a" if slope is None else f"{slope:.3f}"))
    return 0


COMMANDS = {"train": cmd_train, "generate-pool": cmd_generate_pool, "select": cmd_select, "scaling": cmd_scaling}


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"divtsp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
