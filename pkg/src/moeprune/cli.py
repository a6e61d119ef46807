"""Command-line interface: ``moeprune <subcommand> ...``.

Every subcommand logs to stderr and exits nonzero, naming the failed stage,
when something goes wrong.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import torch

from . import analysis, pipeline as pl
from . import stats as gs
from .data import by_direction, read_tsv
from .evaluation import MemorySpec, corpus_eval, estimate_memory
from .mask import load_mask
from .moe.checkpoint import load_checkpoint
from .moe.decode import translate_corpus

log = logging.getLogger("moeprune")

METRIC_CHOICES = ("top1", "top2", "lb", "importance-vanilla", "importance")
ALGO_CHOICES = pl.ALGORITHMS
GRANULARITY_CHOICES = ("global", "lang-pair", "lang")


def _add_pruning_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--metric", choices=METRIC_CHOICES)
    p.add_argument("--algo", choices=ALGO_CHOICES)
    p.add_argument("--granularity", choices=GRANULARITY_CHOICES)
    p.add_argument("--rate", type=float, help="fraction of experts to prune, e.g. 0.75")
    p.add_argument("--split", help="balanced | ratio=E:D | explicit=E,D")
    p.add_argument("--min-per-layer", type=int)


def _pruning_spec(args, base: pl.PruningSpec) -> pl.PruningSpec:
    kw = {}
    if args.metric:
        kw["metric"] = args.metric
    if args.algo:
        kw["algorithm"] = args.algo
    if args.granularity:
        kw["granularity"] = args.granularity
    if args.rate is not None:
        kw["rate"] = args.rate
    if args.split:
        kw.update(pl.PruningSpec.parse_split(args.split))
    if args.min_per_layer is not None:
        kw["min_per_layer"] = args.min_per_layer
    return replace(base, **kw)


def _config(args) -> pl.PipelineConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return pl.load_config(args.config, **overrides)


def cmd_gen_data(args) -> None:
    cfg = _config(args)
    out = Path(args.out) if args.out else cfg.out_dir
    for split, path in pl.gen_data(cfg, out, force=args.force).items():
        log.info("wrote %s", path)


def cmd_train(args) -> None:
    cfg = _config(args)
    data = Path(args.data)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pl.train_model(cfg, data / "train.tsv", data / "valid.tsv", out, out.with_suffix(".log.json"))
    log.info("wrote %s", out)


def _masks_arg(args):
    if args.mask and args.masks:
        raise ValueError("pass --mask or --masks, not both")
    if args.mask:
        return load_mask(args.mask)
    if args.masks:
        return pl.load_direction_masks(Path(args.masks))
    return None


def cmd_decode(args) -> None:
    model, extra = load_checkpoint(args.checkpoint)
    vocab = pl.vocab_from_checkpoint(extra)
    samples = read_tsv(args.input)
    masks = _masks_arg(args)
    recorder = gs.StatsRecorder(model.config) if args.stats_out else None
    hyps = []
    for d, group in sorted(by_direction(samples).items()):
        mask = masks.get(d) if isinstance(masks, dict) else masks
        if isinstance(masks, dict) and mask is None:
            raise ValueError(f"no mask for direction {d[0]}-{d[1]}")
        for s, h in zip(group, translate_corpus(group, model, vocab, mask=mask, recorder=recorder,
                                                beam_size=args.beam)):
            hyps.append(f"{s.src_lang}\t{s.tgt_lang}\t{s.src_text}\t{h}")
    out = Path(args.out)
    out.write_text("\n".join(hyps) + "\n", encoding="utf-8")
    log.info("wrote %d hypotheses to %s", len(hyps), out)
    if recorder is not None:
        gs.save_stats(gs.per_direction_table(recorder), args.stats_out)
        log.info("wrote statistics to %s", args.stats_out)


def cmd_prune(args) -> None:
    cfg = _config(args)
    spec = _pruning_spec(args, cfg.pruning)
    model, _ = load_checkpoint(args.checkpoint)
    per_direction = gs.per_direction_from_table(gs.load_stats(args.stats))
    masks = pl.build_direction_masks(model.config, per_direction, spec, sorted(per_direction))
    paths = pl.save_direction_masks(masks, Path(args.out))
    log.info("wrote %d masks (%s) to %s", len(paths), spec.tag, args.out)


def cmd_eval(args) -> None:
    model, extra = load_checkpoint(args.checkpoint)
    vocab = pl.vocab_from_checkpoint(extra)
    test = read_tsv(args.test)
    report = corpus_eval(model, vocab, test, _masks_arg(args), label=args.label, beam_size=args.beam)
    report.save(args.out)
    sys.stdout.write(report.to_tsv())


def cmd_analyze(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.masks:
        masks = pl.load_direction_masks(Path(args.masks))
        for side, res in pl.encoder_decoder_jaccard(masks).items():
            (out / f"jaccard_{side}.tsv").write_text(analysis.similarity_tsv(res["labels"], res["matrix"]))
            log.info("%s jaccard: same source %.3f, same target %.3f, different target %.3f",
                     side, res["same_src"], res["same_tgt"], res["diff_tgt"])
    if args.stats:
        per_direction = gs.per_direction_from_table(gs.load_stats(args.stats))
        model_cfg = load_checkpoint(args.checkpoint)[0].config if args.checkpoint else None
        for side, tree in pl.language_dendrograms(per_direction, model_cfg).items():
            newick, svg = analysis.emit_dendrogram(tree)
            (out / f"dendrogram_{side}.nwk").write_text(newick + "\n")
            (out / f"dendrogram_{side}.svg").write_text(svg)
            log.info("%s dendrogram: %s", side, newick)
    if args.baseline and args.pruned:
        base, pruned = pl.read_report(args.baseline).by_direction(), pl.read_report(args.pruned).by_direction()
        diffs = [pruned[d].length_ratio - base[d].length_ratio for d in sorted(pruned) if d in base]
        if not diffs:
            raise ValueError("reports share no directions")
        import numpy as np

        sys.stdout.write(f"length_ratio_difference\tmean\t{np.mean(diffs):.4f}\tstd\t{np.std(diffs):.4f}\n")


def cmd_mem_estimate(args) -> None:
    if args.checkpoint:
        spec = MemorySpec.from_model_config(load_checkpoint(args.checkpoint)[0].config, args.bytes_per_param)
    else:
        spec = replace(MemorySpec.nllb_moe(), bytes_per_param=args.bytes_per_param)
    if args.mask:
        est = estimate_memory(spec, load_mask(args.mask))
    elif args.rate is not None:
        keep = round((1 - args.rate) * spec.num_experts_total)
        est = estimate_memory(spec, retained_experts=keep)
    else:
        est = estimate_memory(spec, retained_experts=args.retain)
    sys.stdout.write(f"params\t{est.params:.0f}\nbytes\t{est.bytes:.0f}\ngib\t{est.gib:.4f}\n")


def cmd_pipeline(args) -> None:
    cfg = _config(args)
    if args.out:
        cfg = replace(cfg, out=args.out)
    spec = _pruning_spec(args, cfg.pruning)
    res = pl.run_pipeline(cfg, spec, force=args.force, with_random=args.random)
    sys.stdout.write(f"unpruned\t{res.baseline.mean_chrf:.2f}\n{spec.tag}\t{res.pruned.mean_chrf:.2f}\n")
    for rep in res.random:
        sys.stdout.write(f"{rep.label}\t{rep.mean_chrf:.2f}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moeprune", description="Expert pruning for mixture-of-experts translation models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn, stage=name)
        p.add_argument("--config", help="INI config (see configs/default.ini)")
        p.add_argument("--seed", type=int)
        return p

    p = add("gen-data", cmd_gen_data, "write synthetic train/valid/test corpora")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true", help="overwrite existing corpora")

    p = add("train", cmd_train, "train the toy MoE model")
    p.add_argument("--data", required=True, help="directory holding train.tsv and valid.tsv")
    p.add_argument("--out", required=True, help="checkpoint path")

    for name, fn, help_ in (("decode", cmd_decode, "beam-search a TSV corpus, optionally recording gate statistics"),
                            ("eval", cmd_eval, "score a test corpus with chrF++ and length ratio")):
        p = add(name, fn, help_)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--mask", help="one mask for every direction")
        p.add_argument("--masks", help="directory of <src>-<tgt>.mask files")
        p.add_argument("--beam", type=int)
        p.add_argument("--out", required=True)
        if name == "decode":
            p.add_argument("--input", required=True)
            p.add_argument("--stats-out")
        else:
            p.add_argument("--test", required=True)
            p.add_argument("--label", default="")

    p = add("prune", cmd_prune, "build per-direction masks from gate statistics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stats", required=True, help="lang-pair statistics written by decode --stats-out")
    p.add_argument("--out", required=True, help="mask directory")
    _add_pruning_flags(p)

    p = add("analyze", cmd_analyze, "Jaccard tables, dendrograms and length-ratio shifts")
    p.add_argument("--masks")
    p.add_argument("--stats")
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", help="unpruned eval report")
    p.add_argument("--pruned", help="pruned eval report")
    p.add_argument("--out", required=True)

    p = add("mem-estimate", cmd_mem_estimate, "parameter memory of a pruned model")
    p.add_argument("--checkpoint", help="toy model; omit for the 54.5B reference model")
    p.add_argument("--mask")
    p.add_argument("--rate", type=float)
    p.add_argument("--retain", type=int)
    p.add_argument("--bytes-per-param", type=int, default=2)

    p = add("pipeline", cmd_pipeline, "run every stage end to end")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true", help="rerun stages even when up to date")
    p.add_argument("--random", action="store_true", help="also evaluate random-mask baselines")
    _add_pruning_flags(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)
    try:
        args.func(args)
    except pl.PipelineError as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:
        log.error("stage %r failed: %s", args.stage, exc)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
