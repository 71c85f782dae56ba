"""
radscribe command line

    python -m pipeline.cli synth    --spec S --out DIR --seed N [--previews]
    python -m pipeline.cli curate   --in M --rules R --out M2 --report J
    python -m pipeline.cli train    --config C --corpus DIR --out CKPT
    python -m pipeline.cli generate --ckpt CKPT --prompt FILE --images V1 [V2 ...]
    python -m pipeline.cli eval     --ckpt CKPT --manifest M --lexicon L --out REPORT

Exit codes: 0 success, 1 usage error, 2 data or runtime error. Failures
print one line `error: <ErrorClass>: <message>` to standard error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from tools.errors import DataError, RadscribeError, UsageError
from tools.lexicon import Lexicon
from tools.volume_io import load_volume, preprocess

from pipeline.corpus.curation import curate, load_rules
from pipeline.corpus.sample import load_manifest, write_manifest
from pipeline.corpus.synth import SynthSpec, synth_corpus
from pipeline.evalbench.benchmark import BenchmarkConfig, ModelPredictor, run_benchmark, write_records
from pipeline.model.multimodal import RadiologyVLM
from pipeline.model.vocabulary import Vocabulary
from pipeline.run_config import RunConfig
from pipeline.training.trainer import STAGES, plot_trace, prepare_samples, run_training, write_trace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class CLIParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad arguments."""

    def error(self, message):
        raise UsageError(message)


def _write_json(path: Path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


# ----------------------------------------------------------------------
# Subcommands

def cmd_synth(args) -> int:
    spec = SynthSpec.load(args.spec)
    result = synth_corpus(spec, args.seed, Path(args.out), previews=args.previews)
    counts = ", ".join(f"{name}={n}" for name, n in result.counts.items())
    print(f"✓ Synthesized {spec.count} samples into {args.out} ({counts})")
    return EXIT_OK


def cmd_curate(args) -> int:
    manifest = Path(args.input)
    pool = load_manifest(manifest)
    rules = load_rules(args.rules)
    volume_root = Path(args.volume_root) if args.volume_root else manifest.parent
    kept, report = curate(pool, rules, volume_root=volume_root)
    write_manifest(Path(args.out), kept)
    _write_json(Path(args.report), report.to_dict())
    print(f"✓ Kept {report.output_count} of {report.input_count} samples")
    return EXIT_OK


def _load_corpus(corpus_dir: Path):
    corpora = {}
    for stage in STAGES:
        path = corpus_dir / f"{stage}.jsonl"
        if path.exists():
            corpora[stage] = load_manifest(path)
    if not any(corpora.values()):
        raise DataError(f"No training samples under {corpus_dir} (expected pretrain.jsonl / finetune.jsonl)")
    return corpora


def cmd_train(args) -> int:
    config = RunConfig.load(args.config)
    seed = config.seed if args.seed is None else args.seed
    corpus_dir = Path(args.corpus)
    corpora = _load_corpus(corpus_dir)
    lexicon = Lexicon.load(config.lexicon_path)

    lm = config.model.lm
    texts = [s.text for samples in corpora.values() for s in samples]
    vocab = Vocabulary.build(texts, max_images=lm.max_images, limit=lm.vocab_limit)
    model = RadiologyVLM(config.model, vocab, seed=seed, preprocess=config.preprocess,
                         max_new=config.generation.max_new)
    print(f"🚀 Model with {model.params.count()} parameters, vocabulary of {len(vocab)} tokens")

    prepared = {
        stage: prepare_samples(samples, corpus_dir, model, lexicon, config.preprocess)
        for stage, samples in corpora.items()
    }
    result = run_training(prepared, model, config.schedule, config.optimizer, seed,
                          config.training, verbose=True)

    out = Path(args.out)
    model.save(out, result.stages)
    write_trace(result, Path(args.trace) if args.trace else out / "trace.csv")
    if args.plot:
        plot_trace(result, Path(args.plot), config.training.smoothing_window)
    print(f"✅ Checkpoint written to {out} after {result.steps} steps")
    return EXIT_OK


def cmd_generate(args) -> int:
    model = RadiologyVLM.load(args.ckpt)
    prompt_path = Path(args.prompt)
    if not prompt_path.exists():
        raise DataError(f"Prompt file not found: {prompt_path}")
    prompt = prompt_path.read_text(encoding="utf-8").strip()
    volumes = [preprocess(load_volume(p), model.preprocess) for p in args.images]
    print(model.generate(prompt, volumes, args.max_new))
    return EXIT_OK


def cmd_eval(args) -> int:
    model = RadiologyVLM.load(args.ckpt)
    manifest = Path(args.manifest)
    samples = load_manifest(manifest)
    lexicon = Lexicon.load(args.lexicon)
    config = BenchmarkConfig(resamples=args.resamples)
    predictor = ModelPredictor(model, manifest.parent, max_new=args.max_new)

    report = run_benchmark(predictor, samples, lexicon, args.seed, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    if args.records:
        write_records(report.records, Path(args.records))

    table = report.table().to_string()
    if args.table:
        Path(args.table).write_text(table + "\n", encoding="utf-8")
    print(table)
    for warning in report.warnings:
        print(f"⚠️  {warning}")
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser

def build_parser() -> CLIParser:
    parser = CLIParser(prog="radscribe", description="Radiology vision-language pipeline")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="synthetic corpus spec (JSON)")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, required=True, help="generation seed")
    p.add_argument("--previews", action="store_true", help="also write PNG slice previews")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("curate", help="apply curation rules to a manifest")
    p.add_argument("--in", dest="input", required=True, help="input manifest (JSON lines)")
    p.add_argument("--rules", required=True, help="curation rules (JSON)")
    p.add_argument("--out", required=True, help="curated manifest")
    p.add_argument("--report", required=True, help="drop report (JSON)")
    p.add_argument("--volume-root", help="directory volume paths are relative to (default: manifest directory)")
    p.set_defaults(handler=cmd_curate)

    p = sub.add_parser("train", help="train a model on a corpus directory")
    p.add_argument("--config", required=True, help="run config (JSON)")
    p.add_argument("--corpus", required=True, help="directory with pretrain.jsonl / finetune.jsonl")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--trace", help="loss trace CSV (default: CKPT/trace.csv)")
    p.add_argument("--plot", help="loss curve PNG")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("generate", help="greedy generation for one prompt")
    p.add_argument("--ckpt", required=True, help="checkpoint directory")
    p.add_argument("--prompt", required=True, help="prompt text file with <image-i> placeholders")
    p.add_argument("--images", nargs="+", default=[], help="volume files in placeholder order")
    p.add_argument("--max-new", type=int, help="maximum generated tokens (default: the checkpoint's generation.max_new)")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("eval", help="run the benchmark on a test manifest")
    p.add_argument("--ckpt", required=True, help="checkpoint directory")
    p.add_argument("--manifest", required=True, help="test manifest (JSON lines)")
    p.add_argument("--lexicon", required=True, help="medical term lexicon")
    p.add_argument("--out", required=True, help="metric report (JSON)")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--records", help="per-record audit dump (JSON lines)")
    p.add_argument("--table", help="write the metric table here as well")
    p.add_argument("--max-new", type=int, help="maximum generated tokens (default: the checkpoint's generation.max_new)")
    p.add_argument("--resamples", type=int, default=1000, help="bootstrap resamples")
    p.set_defaults(handler=cmd_eval)
    return parser


def _report(error: BaseException):
    message = " ".join(str(error).split())
    print(f"error: {type(error).__name__}: {message}", file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except UsageError as e:
        _report(e)
        return EXIT_USAGE
    except (RadscribeError, OSError) as e:
        _report(e)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
