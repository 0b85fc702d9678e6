"""Command-line entry point: ``sata <subcommand> ...``.

Exit codes: 0 success, 1 validation error (bad input, config or check
failure), 2 internal error.  Diagnostics go to stderr; results go to files
or stdout.
"""

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as runconfig
from .errors import SATAError, ValidationError


class UnknownSubcommand(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class UsageError(ValidationError):
    pass


# --- helpers -----------------------------------------------------------------------

def _seed(args):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("SATA_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SATA_SEED must be an integer, got {env!r}") from None
    return None


def _config(args):
    entries = {}
    if getattr(args, "config", None):
        entries.update(runconfig.parse_text(Path(args.config).read_text(encoding="utf-8"), args.config))
    for item in getattr(args, "set", None) or ():
        entries.update(runconfig.parse_text(item, "--set"))
    seed = _seed(args)
    if seed is not None:
        entries["seed"] = str(seed)
    cfg = runconfig.build(entries)
    return cfg


def _read(path, units):
    from .bvh import read_bvh

    return read_bvh(path, units=units)


def _tags(path):
    from .semantics import TagDictionary

    return TagDictionary.from_json(path)


def _provider(cfg):
    from .semantics import make_provider

    e = cfg.embedding
    return make_provider(e.kind, e.dimension, e.seed, e.path or None)


def _write_json(path, obj):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _sidecar(out, cfg, extra=None):
    """Echo the effective configuration next to an output artifact."""
    meta = {"config": cfg.to_dict()}
    if extra:
        meta.update(extra)
    _write_json(str(out) + ".json", meta)


def _common(p, seed=True):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
    if seed:
        p.add_argument("--seed", type=int, help="seed (default: SATA_SEED or config)")
    p.add_argument("--units", choices=("auto", "m", "cm"), default="auto", help="BVH length units")


# --- subcommands -------------------------------------------------------------------

def cmd_inspect(args):
    sk, clip = _read(args.file, args.units)
    info = {
        "file": str(args.file),
        "joints": len(sk),
        "end_sites": sum(j.is_end_site for j in sk.joints),
        "frames": clip.n_frames,
        "frame_time": clip.frame_time,
        "duration": clip.duration,
        "height_m": sk.height(),
        "depth_table": {j.name: int(d) for j, d in zip(sk.joints, sk.depth_table())},
    }
    _write_json(args.out, info)
    return 0


def cmd_canonicalize(args):
    from .bvh import save_bvh
    from .kinematics import canonicalize

    cfg = _config(args)
    sk, clip = _read(args.file, args.units)
    save_bvh(args.out, sk, canonicalize(clip))
    _sidecar(args.out, cfg, {"input": str(args.file)})
    return 0


def cmd_mirror(args):
    from .bvh import save_bvh
    from .kinematics import mirror

    cfg = _config(args)
    _, clip = _read(args.file, args.units)
    out = mirror(clip)
    save_bvh(args.out, out.skeleton, out)
    _sidecar(args.out, cfg, {"input": str(args.file)})
    return 0


def cmd_extract(args):
    from .graphrepr import save_sequence
    from .inference import prepare

    cfg = _config(args)
    _, clip = _read(args.file, args.units)
    seq = prepare(clip, _tags(args.tags), _provider(cfg))
    save_sequence(args.out, seq)
    _sidecar(args.out, cfg, {"input": str(args.file), "frames": seq.n_frames, "joints": seq.n_joints})
    return 0


def cmd_synth(args):
    from . import synth
    from .bvh import save_bvh

    seed = _seed(args) or 0
    clip, tags = synth.generate(synth.SynthSpec(args.skeleton, args.motion, args.frames, seed, args.speed))
    save_bvh(args.out, clip.skeleton, clip)
    tags_out = args.tags_out or str(Path(args.out).with_suffix(".tags.json"))
    tags.save(tags_out)
    return 0


def _load_dataset(args, cfg):
    from .inference import prepare

    files = list(args.data)
    if args.tags and len(args.tags) not in (1, len(files)):
        raise UsageError("--tags takes one file for all clips or one per --data file")
    provider = _provider(cfg)
    seqs = []
    for i, f in enumerate(files):
        tpath = (args.tags[i] if len(args.tags) > 1 else args.tags[0]) if args.tags \
            else str(Path(f).with_suffix(".tags.json"))
        _, clip = _read(f, args.units)
        seqs.append(prepare(clip, _tags(tpath), provider))
    return seqs


def cmd_train(args):
    from dataclasses import replace

    from .training import fit, save_model

    cfg = _config(args)
    model_cfg = replace(cfg.model, seed=cfg.seed, d_text=cfg.embedding.dimension)
    train_cfg = replace(cfg.train, seed=cfg.seed)
    if args.epochs is not None:
        train_cfg = replace(train_cfg, epochs=args.epochs)
    seqs = _load_dataset(args, cfg)
    if args.log:
        Path(args.log).write_text("", encoding="utf-8")
    res = fit(model_cfg, seqs, train_cfg, cfg.loss, log_path=args.log, max_steps=args.max_steps)
    extra = {"embedding": {"kind": cfg.embedding.kind, "dimension": cfg.embedding.dimension,
                           "seed": cfg.embedding.seed, "path": cfg.embedding.path or None},
             "run": cfg.to_dict()}
    save_model(args.ckpt, res.model, train_cfg, cfg.loss, extra)
    print(f"trained {res.steps} steps; checkpoint {args.ckpt}", file=sys.stderr)
    return 0


def _model(args):
    from .inference import provider_for
    from .training import load_model

    model, ck = load_model(args.ckpt)
    return model, ck, provider_for(ck, model.config.d_text)


def cmd_reconstruct(args):
    from .bvh import save_bvh
    from .inference import reconstruct

    cfg = _config(args)
    model, ck, provider = _model(args)
    _, clip = _read(args.src, args.units)
    mode = args.stitch or cfg.run.stitch
    out = reconstruct(model, clip, _tags(args.src_tags), provider, mode)
    save_bvh(args.out, out.skeleton, out)
    _sidecar(args.out, cfg, {"checkpoint": ck, "stitch": mode, "source": str(args.src)})
    return 0


def cmd_retarget(args):
    from .bvh import save_bvh
    from .inference import retarget

    cfg = _config(args)
    model, ck, provider = _model(args)
    _, clip = _read(args.src, args.units)
    tsk, _ = _read(args.target_skeleton, args.units)
    mode = args.stitch or cfg.run.stitch
    out = retarget(model, clip, _tags(args.src_tags), tsk, _tags(args.target_tags), provider, mode)
    save_bvh(args.out, out.skeleton, out)
    _sidecar(args.out, cfg, {"checkpoint": ck, "stitch": mode, "source": str(args.src),
                             "target": str(args.target_skeleton)})
    return 0


def cmd_eval(args):
    from .graphrepr import contact_joint_set
    from .metrics import corpus_means, geometric_metrics, retarget_error
    from .semantics import resolve_descriptions

    cfg = _config(args)
    if len(args.gt) != len(args.pred):
        raise UsageError("--gt and --pred need the same number of files")
    variant = args.fs_variant or cfg.run.fs_variant
    rows, reports = [], []
    for g, p in zip(args.gt, args.pred):
        _, gc = _read(g, args.units)
        _, pc = _read(p, args.units)
        desc = resolve_descriptions(gc.skeleton, _tags(args.tags)) if args.tags else gc.skeleton.names
        feet = contact_joint_set(gc.skeleton, desc)
        rep = geometric_metrics(gc, pc, feet, variant)
        H = args.height or gc.skeleton.height()
        row = {"gt": str(g), "pred": str(p), **rep.to_dict(), "retarget_error": retarget_error(gc, pc, H)}
        rows.append(row)
        reports.append(rep)
    means = corpus_means(reports)
    means["retarget_error"] = float(np.mean([r["retarget_error"] for r in rows]))
    _write_json(args.out, {"clips": rows, "mean": means, "fs_variant": variant, "config": cfg.to_dict()})
    return 0


def cmd_gradcheck(args):
    from .checks import gradcheck_suite

    rows = gradcheck_suite(quick=args.quick, seed=_seed(args) or 0)
    ok = all(r["passed"] for r in rows)
    _write_json(args.out, {"checks": rows, "passed": ok})
    for r in rows:
        if not r["passed"]:
            print(f"FAIL {r['name']}: rel err {r['max_rel_error']:.3g} >= {r['tol']:g}", file=sys.stderr)
    return 0 if ok else 1


def cmd_roundtrip(args):
    from .checks import roundtrip_report

    rows = roundtrip_report(args.files, args.units, args.tags)
    ok = all(r["passed"] for r in rows)
    _write_json(args.out, {"files": rows, "passed": ok})
    return 0 if ok else 1


COMMANDS = {
    "inspect": cmd_inspect, "canonicalize": cmd_canonicalize, "mirror": cmd_mirror, "extract": cmd_extract,
    "synth": cmd_synth, "train": cmd_train, "reconstruct": cmd_reconstruct, "retarget": cmd_retarget,
    "eval": cmd_eval, "gradcheck": cmd_gradcheck, "roundtrip": cmd_roundtrip,
}


def build_parser():
    from . import synth

    ap = _Parser(prog="sata", description="Topology-agnostic motion autoencoder toolkit")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("inspect", help="print skeleton and clip statistics as JSON")
    p.add_argument("file")
    p.add_argument("--out", help="JSON output (default stdout)")
    p.add_argument("--units", choices=("auto", "m", "cm"), default="auto")

    for name, helptext in (("canonicalize", "move frame-0 root to the origin facing +Z"),
                           ("mirror", "left/right mirror a clip")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("file")
        p.add_argument("--out", required=True)
        _common(p)

    p = sub.add_parser("extract", help="write the graph representation cache")
    p.add_argument("file")
    p.add_argument("--tags", required=True)
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("synth", help="generate a synthetic clip and its tags")
    p.add_argument("--skeleton", choices=synth.SKELETONS, required=True)
    p.add_argument("--motion", choices=synth.MOTIONS, required=True)
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--speed", type=float, default=0.05, help="walk speed, m/frame")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="BVH output")
    p.add_argument("--tags-out", help="tags JSON output (default <out>.tags.json)")

    p = sub.add_parser("train", help="train a model on BVH clips")
    p.add_argument("--data", nargs="+", required=True, help="BVH files")
    p.add_argument("--tags", nargs="+", help="tags JSON (one, or one per clip; default <clip>.tags.json)")
    p.add_argument("--ckpt", required=True, help="checkpoint output")
    p.add_argument("--log", help="JSON-lines training log")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    _common(p)

    p = sub.add_parser("reconstruct", help="encode and decode a clip on its own skeleton")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--src-tags", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stitch", choices=("crop", "blend"))
    _common(p)

    p = sub.add_parser("retarget", help="decode a clip onto another skeleton")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--src-tags", required=True)
    p.add_argument("--target-skeleton", required=True, help="BVH whose hierarchy is the target")
    p.add_argument("--target-tags", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stitch", choices=("crop", "blend"))
    _common(p)

    p = sub.add_parser("eval", help="geometric metrics of predictions against ground truth")
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--tags", help="tags JSON used to pick contact joints")
    p.add_argument("--height", type=float, help="character height for the retarget error (default: rest height)")
    p.add_argument("--fs-variant", choices=("plain", "height_weighted"))
    p.add_argument("--out", help="JSON report (default stdout)")
    _common(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and block")
    p.add_argument("--quick", action="store_true", help="sample fewer parameter entries")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="JSON report (default stdout)")

    p = sub.add_parser("roundtrip", help="BVH and representation round-trip checks")
    p.add_argument("files", nargs="+")
    p.add_argument("--tags", help="tags JSON for contact-joint selection")
    p.add_argument("--units", choices=("auto", "m", "cm"), default="auto")
    p.add_argument("--out", help="JSON report (default stdout)")
    return ap


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        parser = build_parser()
        if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
            raise UnknownSubcommand(f"unknown subcommand {argv[0]!r}; choose from {', '.join(COMMANDS)}")
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:  # --help
            return int(e.code or 0)
        if not args.command:
            parser.print_help(sys.stderr)
            return 1
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except (ValidationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SATAError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - last-resort boundary
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
