"""End-to-end experiment driver.

Stages: gen-data -> train -> decode valid (gate statistics) -> prune -> eval
on test -> analysis. Every stage persists its artifacts under the output
directory together with a content hash of its inputs, so a rerun with
identical inputs is skipped and a changed input invalidates downstream work.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import analysis, stats as gs
from .data import (LanguageSpec, Vocabulary, by_direction, directions as all_directions,
                   generate_corpora, read_tsv, write_tsv)
from .evaluation import EvalReport, MemorySpec, corpus_eval, estimate_memory
from .mask import PruningMask, load_mask, save_mask
from .moe.checkpoint import load_checkpoint, save_checkpoint
from .moe.config import ModelConfig
from .moe.decode import translate_corpus
from .moe.model import MoEModel
from .moe.train import token_accuracy, train
from .pruning import Budget, compute_metric, normalize_per_layer, prune, random_mask
from .stats import FinalStats, StatsKey, finalize, stats_key_for

log = logging.getLogger(__name__)

METRIC_ALIASES = {"top1": "top1", "top2": "top2", "lb": "load_balancing", "load_balancing": "load_balancing",
                  "importance-vanilla": "importance_vanilla", "importance_vanilla": "importance_vanilla",
                  "importance": "importance"}
GRANULARITY_ALIASES = {"global": "global", "lang-pair": "lang_pair", "lang_pair": "lang_pair",
                       "lang": "lang_specific", "lang_specific": "lang_specific"}
ALGORITHMS = ("fixed", "global-threshold", "encdec-threshold")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


# configuration

@dataclass(frozen=True)
class PruningSpec:
    metric: str = "importance"
    algorithm: str = "fixed"
    granularity: str = "lang_pair"
    rate: float = 0.5
    split: str = "balanced"
    ratio: tuple[int, int] = (1, 1)
    enc_count: int | None = None
    dec_count: int | None = None
    min_per_layer: int = 4

    def __post_init__(self):
        object.__setattr__(self, "metric", METRIC_ALIASES.get(self.metric, self.metric))
        object.__setattr__(self, "granularity", GRANULARITY_ALIASES.get(self.granularity, self.granularity))
        if self.metric not in METRIC_ALIASES.values():
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.granularity not in gs.GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

    def budget(self, config: ModelConfig, per_layer: bool | None = None) -> Budget:
        """Per-layer budgets round the retained count down to whole per-layer quotas."""
        if per_layer is None:
            per_layer = self.algorithm == "fixed"
        layers = (len(config.side_layers("encoder")), len(config.side_layers("decoder"))) if per_layer else None
        return Budget.from_rate(self.rate, config.total_experts, layers=layers, split=self.split, ratio=self.ratio,
                                enc_count=self.enc_count, dec_count=self.dec_count,
                                min_per_layer=self.min_per_layer)

    @property
    def tag(self) -> str:
        return f"{self.metric}.{self.algorithm}.{self.granularity}.{self.rate:g}.{self.split}"

    @classmethod
    def parse_split(cls, text: str) -> dict:
        """'balanced' | 'ratio=E:D' | 'explicit=E,D' -> PruningSpec keyword arguments."""
        if text == "balanced":
            return {"split": "balanced"}
        if text.startswith("ratio="):
            e, d = text[len("ratio="):].split(":")
            return {"split": "ratio", "ratio": (int(e), int(d))}
        if text.startswith("explicit="):
            e, d = text[len("explicit="):].split(",")
            return {"split": "explicit", "enc_count": int(e), "dec_count": int(d)}
        raise ValueError(f"bad split {text!r}; expected balanced, ratio=E:D or explicit=E,D")


@dataclass(frozen=True)
class PipelineConfig:
    model: ModelConfig = ModelConfig()
    languages: tuple[LanguageSpec, ...] = (
        LanguageSpec("la", None, "identity"),
        LanguageSpec("lb", 11, "identity"),
        LanguageSpec("lc", 12, "reverse"),
        LanguageSpec("ld", 13, "rotate"),
    )
    base_vocab: int = 16
    num_words: int = 64
    surface: str = "disjoint"
    min_len: int = 3
    max_len: int = 9
    train_size: int = 2000
    valid_size: int = 50
    test_size: int = 50
    train_steps: int = 5000
    batch_size: int = 64
    lr: float = 1e-3
    target_accuracy: float | None = None
    eval_every: int = 1000
    seed: int = 0
    out: str = "runs/default"
    pruning: PruningSpec = PruningSpec()
    random_seeds: int = 5

    def __post_init__(self):
        codes = [l.code for l in self.languages]
        if len(set(codes)) != len(codes):
            raise ValueError(f"language codes must be unique: {codes}")
        if min(self.train_size, self.valid_size, self.test_size) <= 0:
            raise ValueError("corpus sizes must be positive")
        need = len(Vocabulary(codes, self.num_words))
        if self.model.vocab_size != need:
            object.__setattr__(self, "model", replace(self.model, vocab_size=need))

    @property
    def vocab(self) -> Vocabulary:
        return Vocabulary([l.code for l in self.languages], self.num_words)

    @property
    def directions(self) -> list[tuple[str, str]]:
        return all_directions([l.code for l in self.languages])

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def data_params(self) -> dict:
        return dict(languages=[[l.code, l.cipher_seed, l.transform, l.shift] for l in self.languages],
                    base_vocab=self.base_vocab, num_words=self.num_words, surface=self.surface,
                    min_len=self.min_len, max_len=self.max_len, sizes=self.sizes, seed=self.seed)

    @property
    def sizes(self) -> dict[str, int]:
        return {"train": self.train_size, "valid": self.valid_size, "test": self.test_size}

    def train_params(self) -> dict:
        return dict(model=self.model.to_dict(), steps=self.train_steps, batch_size=self.batch_size, lr=self.lr,
                    target_accuracy=self.target_accuracy, eval_every=self.eval_every, seed=self.seed)


def _parse_language(text: str) -> LanguageSpec:
    parts = text.strip().split(":")
    if len(parts) not in (3, 4):
        raise ValueError(f"language {text!r}: expected code:transform:cipher_seed[:shift]")
    code, transform, seed = parts[:3]
    shift = int(parts[3]) if len(parts) == 4 else 1
    return LanguageSpec(code, None if seed in ("-", "identity") else int(seed), transform, shift)


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """Read an INI config (see configs/default.ini); keyword overrides win."""
    cfg = PipelineConfig()
    kw: dict = {}
    model_kw: dict = {}
    prune_kw: dict = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with open(path, encoding="utf-8") as f:
            parser.read_file(f)
        ints = {f for f, v in cfg.model.to_dict().items() if isinstance(v, int)}
        known = set(cfg.model.to_dict())
        for key, value in parser.items("model") if parser.has_section("model") else []:
            if key not in known:
                raise ValueError(f"unknown [model] key {key!r}")
            model_kw[key] = int(value) if key in ints else float(value)
        if parser.has_section("data"):
            d = parser["data"]
            if "languages" in d:
                kw["languages"] = tuple(_parse_language(t) for t in d["languages"].split(",") if t.strip())
            for key in ("base_vocab", "num_words", "min_len", "max_len", "train_size", "valid_size", "test_size"):
                if key in d:
                    kw[key] = d.getint(key)
            if "surface" in d:
                kw["surface"] = d["surface"]
        if parser.has_section("train"):
            t = parser["train"]
            for key, conv in (("steps", int), ("batch_size", int), ("eval_every", int), ("lr", float)):
                if key in t:
                    kw["train_steps" if key == "steps" else key] = conv(t[key])
            if "target_accuracy" in t:
                kw["target_accuracy"] = None if t["target_accuracy"] in ("", "none") else float(t["target_accuracy"])
        if parser.has_section("run"):
            r = parser["run"]
            if "seed" in r:
                kw["seed"] = r.getint("seed")
            if "out" in r:
                kw["out"] = r["out"]
            if "random_seeds" in r:
                kw["random_seeds"] = r.getint("random_seeds")
        if parser.has_section("pruning"):
            p = parser["pruning"]
            for key in ("metric", "algorithm", "granularity"):
                if key in p:
                    prune_kw[key] = p[key]
            if "rate" in p:
                prune_kw["rate"] = p.getfloat("rate")
            if "min_per_layer" in p:
                prune_kw["min_per_layer"] = p.getint("min_per_layer")
            if "split" in p:
                prune_kw.update(PruningSpec.parse_split(p["split"]))
    if model_kw:
        kw["model"] = replace(cfg.model, **model_kw)
    if prune_kw:
        kw["pruning"] = replace(cfg.pruning, **prune_kw)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return replace(cfg, **kw)


# content-hashed stages

def _hash_inputs(paths: Sequence[Path], params: dict) -> str:
    h = hashlib.sha256(json.dumps(params, sort_keys=True, default=str).encode())
    for p in paths:
        h.update(str(p.name).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def run_stage(name: str, out_dir: Path, inputs: Sequence[Path], params: dict, outputs: Sequence[Path],
              fn: Callable[[], None], force: bool = False) -> bool:
    """Run ``fn`` unless every output exists and was produced from identical inputs.

    Returns True when the stage actually ran.
    """
    stamp = out_dir / ".stages" / f"{name}.json"
    try:
        missing = [p for p in inputs if not p.exists()]
        if missing:
            raise FileNotFoundError(f"missing inputs: {', '.join(map(str, missing))}")
        key = _hash_inputs(inputs, params)
        if not force and stamp.exists() and all(p.exists() for p in outputs):
            recorded = json.loads(stamp.read_text())
            if recorded.get("input_hash") == key and recorded.get("outputs") == _hash_outputs(outputs):
                log.info("stage %s: up to date", name)
                return False
        log.info("stage %s: running", name)
        fn()
        stamp.parent.mkdir(parents=True, exist_ok=True)
        stamp.write_text(json.dumps({"input_hash": key, "outputs": _hash_outputs(outputs)}, indent=1))
        return True
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def _hash_outputs(outputs: Sequence[Path]) -> dict:
    return {str(p): hashlib.sha256(p.read_bytes()).hexdigest() for p in outputs if p.is_file()}


# stage bodies

def gen_data(config: PipelineConfig, out_dir: Path | None = None, force: bool = False) -> dict[str, Path]:
    """Write train/valid/test TSV corpora; refuses to overwrite unless ``force``."""
    data_dir = (out_dir or config.out_dir) / "data"
    paths = {split: data_dir / f"{split}.tsv" for split in ("train", "valid", "test")}
    existing = [p for p in paths.values() if p.exists()]
    if existing and not force:
        raise FileExistsError(f"refusing to overwrite {', '.join(map(str, existing))} (use force)")
    data_dir.mkdir(parents=True, exist_ok=True)
    corpora = generate_corpora(config.languages, config.sizes, config.seed, base_vocab=config.base_vocab,
                               num_words=config.num_words, min_len=config.min_len, max_len=config.max_len,
                               surface=config.surface)
    for split, path in paths.items():
        write_tsv(corpora[split], path)
    return paths


def train_model(config: PipelineConfig, train_path: Path, valid_path: Path, ckpt_path: Path,
                log_path: Path | None = None) -> MoEModel:
    torch.manual_seed(config.seed)
    model = MoEModel(config.model)
    vocab = config.vocab
    history = train(model, read_tsv(train_path), vocab, steps=config.train_steps, batch_size=config.batch_size,
                    lr=config.lr, seed=config.seed, valid=read_tsv(valid_path), eval_every=config.eval_every,
                    target_accuracy=config.target_accuracy)
    # wall-clock timings stay in the log so identical runs give identical checkpoints
    timeless = [{k: v for k, v in h.items() if k != "seconds"} for h in history]
    save_checkpoint(model, ckpt_path, extra={"languages": vocab.lang_codes, "num_words": vocab.num_words,
                                             "history": timeless})
    if log_path is not None:
        log_path.write_text(json.dumps(history, indent=1))
    return model


def vocab_from_checkpoint(extra: dict) -> Vocabulary:
    return Vocabulary(extra["languages"], extra["num_words"])


def collect_stats(model: MoEModel, vocab: Vocabulary, samples, mask: PruningMask | None = None):
    """Decode ``samples`` and return (recorder, hypotheses)."""
    recorder = gs.StatsRecorder(model.config)
    hyps = translate_corpus(samples, model, vocab, mask=mask, recorder=recorder)
    return recorder, hyps


def _combined_final(config: ModelConfig, finals: dict[str, FinalStats]) -> FinalStats:
    parts = [finals[side] for side in gs.SIDES if finals.get(side) is not None]
    layer_ids = tuple(l for p in parts for l in p.layer_ids)
    return FinalStats(layer_ids, *(np.vstack([getattr(p, f) for p in parts]) for f in ("top1", "top2", "mean", "conf")))


def direction_granularity_label(granularity: str, src: str, tgt: str) -> str:
    if granularity == "global":
        return "global"
    if granularity == "lang_pair":
        return f"lang_pair:{src}-{tgt}"
    return f"lang:enc={src},dec={tgt}"


def direction_metric_table(config: ModelConfig, aggregated: dict[StatsKey, gs.ExpertStats], granularity: str,
                           metric: str, src: str, tgt: str):
    finals = {}
    for side in gs.SIDES:
        key = stats_key_for(granularity, side, src, tgt)
        if key not in aggregated:
            raise ValueError(f"no statistics for {key.label()} ({side}) needed by {src}-{tgt}")
        finals[side] = finalize(aggregated[key], key=key.label())
    sides = {info.layer_id: info.side for info in config.moe_layers}
    return normalize_per_layer(compute_metric(_combined_final(config, finals), metric, sides))


def build_direction_masks(config: ModelConfig, per_direction, spec: PruningSpec,
                          directions: Sequence[tuple[str, str]]) -> dict[tuple[str, str], PruningMask]:
    """One mask per test direction, from statistics at the requested granularity."""
    aggregated = gs.aggregate_by_granularity(per_direction, spec.granularity)
    budget = spec.budget(config)
    masks = {}
    for src, tgt in directions:
        table = direction_metric_table(config, aggregated, spec.granularity, spec.metric, src, tgt)
        label = direction_granularity_label(spec.granularity, src, tgt)
        masks[(src, tgt)] = prune(table, spec.algorithm, budget, granularity=label)
    return masks


def random_direction_masks(config: ModelConfig, spec: PruningSpec, directions, seed: int):
    """Random experts with fixed-per-layer quotas; one independent draw per direction."""
    sides = {info.layer_id: info.side for info in config.moe_layers}
    from .pruning import MetricTable

    layout = MetricTable("random", tuple(sides), np.ones((len(sides), config.num_experts)), True, sides)
    budget = spec.budget(config, per_layer=True)
    return {d: random_mask(layout, budget, seed=seed * 100003 + i, granularity="random")
            for i, d in enumerate(sorted(directions))}


def mask_dir_name(spec: PruningSpec) -> str:
    return spec.tag


def save_direction_masks(masks: dict[tuple[str, str], PruningMask], directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for (src, tgt), mask in sorted(masks.items()):
        p = directory / f"{src}-{tgt}.mask"
        save_mask(mask, p)
        paths.append(p)
    return paths


def load_direction_masks(directory: Path) -> dict[tuple[str, str], PruningMask]:
    out = {}
    for p in sorted(Path(directory).glob("*.mask")):
        src, tgt = p.stem.split("-")
        out[(src, tgt)] = load_mask(p)
    if not out:
        raise FileNotFoundError(f"no .mask files in {directory}")
    return out


def encoder_decoder_jaccard(masks: dict[tuple[str, str], PruningMask]) -> dict[str, dict]:
    """Table-3 style comparisons between directions sharing a source or a target language.

    Returns, per side, the similarity matrix plus mean Jaccard for
    same-source and same-target direction pairs.
    """
    out = {}
    for side in gs.SIDES:
        sets = {f"{s}-{t}": analysis.ExpertSet.from_mask(m, side) for (s, t), m in sorted(masks.items())}
        labels, mat = analysis.similarity_matrix(sets)
        same_src, same_tgt, diff_tgt = [], [], []
        dirs = sorted(masks)
        for i, (s1, t1) in enumerate(dirs):
            for j, (s2, t2) in enumerate(dirs):
                if j <= i:
                    continue
                v = mat[i, j]
                if s1 == s2:
                    same_src.append(v)
                if t1 == t2:
                    same_tgt.append(v)
                else:
                    diff_tgt.append(v)
        out[side] = dict(labels=labels, matrix=mat,
                         same_src=float(np.mean(same_src)) if same_src else float("nan"),
                         same_tgt=float(np.mean(same_tgt)) if same_tgt else float("nan"),
                         diff_tgt=float(np.mean(diff_tgt)) if diff_tgt else float("nan"))
    return out


def language_dendrograms(per_direction, config: ModelConfig) -> dict[str, analysis.Tree]:
    aggregated = gs.aggregate_by_granularity(per_direction, "lang_specific")
    trees = {}
    for side in gs.SIDES:
        lang_stats = {(k.src_lang if side == "encoder" else k.tgt_lang): s
                      for k, s in aggregated.items() if k.side == side}
        if len(lang_stats) >= 2:
            trees[side] = analysis.hcluster(analysis.build_importance_vectors(lang_stats, side))
    return trees


@dataclass
class PipelineResult:
    baseline: EvalReport
    pruned: EvalReport
    random: list[EvalReport] = field(default_factory=list)
    valid_accuracy: float = float("nan")
    paths: dict[str, Path] = field(default_factory=dict)


def run_pipeline(config: PipelineConfig, spec: PruningSpec | None = None, force: bool = False,
                 with_random: bool = False) -> PipelineResult:
    """Train (or reuse), collect valid statistics, prune, evaluate on test, analyse."""
    spec = spec or config.pruning
    torch.set_num_threads(1)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    data_dir = out / "data"
    splits = {s: data_dir / f"{s}.tsv" for s in ("train", "valid", "test")}
    ckpt = out / "model.ckpt"
    stats_path = out / "stats" / "valid.lang_pair.tsv"
    valid_hyps = out / "stats" / "valid.hyps.txt"
    reports = out / "reports"
    masks_dir = out / "masks" / mask_dir_name(spec)
    baseline_path = reports / "unpruned.tsv"
    report_path = reports / f"{spec.tag}.tsv"

    def _gen():
        gen_data(config, out, force=True)

    run_stage("gen-data", out, [], config.data_params(), list(splits.values()), _gen, force)

    def _train():
        train_model(config, splits["train"], splits["valid"], ckpt, out / "train_log.json")

    run_stage("train", out, [splits["train"], splits["valid"]], config.train_params(), [ckpt], _train, force)
    model, extra = load_checkpoint(ckpt)
    vocab = vocab_from_checkpoint(extra)
    valid = read_tsv(splits["valid"])
    test = read_tsv(splits["test"])

    def _decode_valid():
        recorder, hyps = collect_stats(model, vocab, valid)
        stats_path.parent.mkdir(parents=True, exist_ok=True)
        gs.save_stats(gs.per_direction_table(recorder), stats_path)
        valid_hyps.write_text("\n".join(hyps) + "\n", encoding="utf-8")

    run_stage("decode-valid", out, [ckpt, splits["valid"]], {}, [stats_path, valid_hyps], _decode_valid, force)
    per_direction = gs.per_direction_from_table(gs.load_stats(stats_path))
    dirs = sorted(by_direction(test))

    def _prune():
        masks = build_direction_masks(model.config, per_direction, spec, dirs)
        save_direction_masks(masks, masks_dir)

    prune_params = dict(spec=spec.__dict__, directions=dirs)
    run_stage(f"prune-{spec.tag}", out, [stats_path], prune_params, [masks_dir], _prune, force)
    masks = load_direction_masks(masks_dir)

    reports.mkdir(parents=True, exist_ok=True)

    def _baseline():
        corpus_eval(model, vocab, test, None, dirs, label="unpruned").save(baseline_path)

    run_stage("eval-unpruned", out, [ckpt, splits["test"]], {}, [baseline_path], _baseline, force)

    pruned_holder = {}

    def _eval():
        rep = corpus_eval(model, vocab, test, masks, dirs, label=spec.tag)
        rep.save(report_path)
        pruned_holder["r"] = rep

    mask_files = sorted(masks_dir.glob("*.mask"))
    run_stage(f"eval-{spec.tag}", out, [ckpt, splits["test"], *mask_files], {}, [report_path], _eval, force)

    random_reports = []
    if with_random:
        for seed in range(config.random_seeds):
            rpath = reports / f"random.{spec.rate:g}.seed{seed}.tsv"
            rmasks = random_direction_masks(model.config, spec, dirs, seed)

            def _rand(rmasks=rmasks, rpath=rpath, seed=seed):
                corpus_eval(model, vocab, test, rmasks, dirs, label=f"random-{seed}").save(rpath)

            run_stage(f"eval-random-{spec.rate:g}-{seed}", out, [ckpt, splits["test"]],
                      {"seed": seed, "rate": spec.rate}, [rpath], _rand, force)
            random_reports.append(read_report(rpath))

    def _analyze():
        adir = out / "analysis" / spec.tag
        adir.mkdir(parents=True, exist_ok=True)
        jac = encoder_decoder_jaccard(masks)
        for side, res in jac.items():
            (adir / f"jaccard_{side}.tsv").write_text(analysis.similarity_tsv(res["labels"], res["matrix"]))
        for side, tree in language_dendrograms(per_direction, model.config).items():
            newick, svg = analysis.emit_dendrogram(tree)
            (adir / f"dendrogram_{side}.nwk").write_text(newick + "\n")
            (adir / f"dendrogram_{side}.svg").write_text(svg)
        base = read_report(baseline_path).by_direction()
        pruned = read_report(report_path).by_direction()
        lines = ["src\ttgt\tratio_unpruned\tratio_pruned\tdifference"]
        diffs = []
        for d in sorted(pruned):
            diff = pruned[d].length_ratio - base[d].length_ratio
            diffs.append(diff)
            lines.append(f"{d[0]}\t{d[1]}\t{base[d].length_ratio:.4f}\t{pruned[d].length_ratio:.4f}\t{diff:.4f}")
        lines.append(f"mean\t*\t\t\t{np.mean(diffs):.4f}")
        lines.append(f"std\t*\t\t\t{np.std(diffs):.4f}")
        (adir / "length_ratio.tsv").write_text("\n".join(lines) + "\n")
        spec_mem = MemorySpec.from_model_config(model.config)
        any_mask = next(iter(masks.values()))
        full, pruned_mem = estimate_memory(spec_mem), estimate_memory(spec_mem, any_mask)
        (adir / "memory.tsv").write_text(
            "model\tparams\tbytes\tgib\n"
            f"unpruned\t{full.params:.0f}\t{full.bytes:.0f}\t{full.gib:.6f}\n"
            f"pruned\t{pruned_mem.params:.0f}\t{pruned_mem.bytes:.0f}\t{pruned_mem.gib:.6f}\n")

    run_stage(f"analyze-{spec.tag}", out, [stats_path, baseline_path, report_path, *mask_files], {},
              [out / "analysis" / spec.tag / "jaccard_encoder.tsv"], _analyze, force)

    history = extra.get("history") or []
    acc = history[-1]["valid_acc"] if history else token_accuracy(model, valid, vocab)
    return PipelineResult(read_report(baseline_path), read_report(report_path), random_reports, acc,
                          dict(checkpoint=ckpt, stats=stats_path, masks=masks_dir, report=report_path))


def read_report(path: str | Path) -> EvalReport:
    from .evaluation import DirectionResult

    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        src, tgt, c, lr = line.split("\t")
        if src.startswith("avg:"):
            continue
        rows.append(DirectionResult(src, tgt, float(c), float(lr)))
    return EvalReport(rows, Path(path).stem)
