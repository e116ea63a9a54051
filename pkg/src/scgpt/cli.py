"""Command-line stages tying training, generation, and evaluation together.

Thread pinning happens at import, before numpy ever loads: SCGPT_THREADS
(default 1) is copied into the BLAS thread variables, and the default of
one thread is what makes every command bit-reproducible from its manifest.
"""

import os
import sys


def _set_thread_env():
    n = os.environ.get("SCGPT_THREADS", "1")
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, n)


_set_thread_env()

import argparse
import json
import tempfile

from . import __version__
from .bpe import load_vocab, save_vocab, train_bpe
from .dataset import (
    Corpus,
    build_fewshot,
    default_k_map,
    ingest,
    render_stats,
    stats,
    write_jsonl,
)
from .dialog_act import linearize, parse_linearized
from .errors import ConfigMismatchError, ScgptError, UsageError
from .manifest import RunManifest, load_manifest, sha256_file
from .metrics import evaluate, render_report
from .model import init_params, load_checkpoint, save_checkpoint
from .runconfig import load_config
from .synthetic import (
    HELDOUT_GRAMMARS,
    PRETRAIN_GRAMMARS,
    builtin_grammars,
    generate,
    load_grammar,
)
from .training import run_stage


def _load_rc(args):
    if args.config is None:
        raise UsageError(f"{args.command} needs --config")
    return load_config(args.config)


def _vocab_for(rc):
    if rc.vocab is None:
        raise UsageError("config does not set 'vocab ='; train one with train-bpe")
    return load_vocab(rc.vocab)


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def _start_manifest(args, inputs, default_path):
    man = RunManifest.start(
        command=args.command,
        argv=args.argv,
        seed=getattr(args, "seed", None),
        config_path=getattr(args, "config", None),
    )
    man.add_inputs(*inputs)
    path = args.manifest or default_path
    man.write(path)
    return man, path


def _init_or_resume(rc, vocab, args):
    """Fresh parameters, or a checkpoint when --ckpt is given."""
    if getattr(args, "ckpt", None):
        params = load_checkpoint(args.ckpt)
        if params.config.vocab_size != vocab.size:
            raise ConfigMismatchError(
                f"checkpoint vocab_size {params.config.vocab_size} != "
                f"tokenizer size {vocab.size}"
            )
        return params
    return init_params(rc.model_config(vocab.size), seed=args.seed)


def _train_command(args, stage, data):
    rc = _load_rc(args)
    vocab = _vocab_for(rc)
    inputs = [args.config, rc.vocab, args.corpus, getattr(args, "ckpt", None)]
    man, man_path = _start_manifest(args, inputs, args.out + ".manifest.json")
    params = _init_or_resume(rc, vocab, args)
    tc = rc.train_config(stage, seed=args.seed)
    params, log = run_stage(tc, data, params, vocab)
    save_checkpoint(params, args.out)
    log_path = args.out + ".log"
    _write_lines(log_path, [json.dumps(rec, sort_keys=True) for rec in log])
    man.finish(args.out, log_path)
    man.write(man_path)
    last = log[-1] if log else {}
    print(f"saved {args.out} after {len(log)} epochs "
          f"(val_loss {last.get('val_loss', float('nan')):.4f})")
    return 0


def cmd_pretrain_plain(args):
    lines = [ln for ln in _read_lines(args.corpus) if ln.strip()]
    return _train_command(args, "plain", lines)


def cmd_pretrain_da(args):
    return _train_command(args, "da_pretrain", ingest(args.corpus))


def cmd_finetune(args):
    corpus = ingest(args.corpus)
    if args.domain is not None:
        corpus = Corpus(
            tuple(ex for ex in corpus if ex.domain == args.domain), corpus.name
        )
    return _train_command(args, "finetune", corpus)


def cmd_train_bpe(args):
    if args.corpus.endswith(".jsonl"):
        corpus = ingest(args.corpus)
        texts = []
        for ex in corpus:
            texts.append(linearize(ex.acts))
            texts.append(ex.response)
    else:
        texts = [ln for ln in _read_lines(args.corpus) if ln.strip()]
    man, man_path = _start_manifest(args, [args.corpus], args.out + ".manifest.json")
    vocab = train_bpe(texts, target_vocab_size=args.target_size)
    save_vocab(vocab, args.out)
    man.finish(args.out)
    man.write(man_path)
    print(f"saved {args.out} ({vocab.size} tokens)")
    return 0


def cmd_synth(args):
    if args.grammar:
        grammars = [load_grammar(p) for p in args.grammar]
        inputs = list(args.grammar)
    else:
        names = args.domains.split(",") if args.domains else list(PRETRAIN_GRAMMARS)
        grammars = builtin_grammars(n.strip() for n in names)
        inputs = []
    man, man_path = _start_manifest(args, inputs, args.out + ".manifest.json")
    corpus = generate(grammars, n_per_domain=args.n_per_domain, seed=args.seed)
    write_jsonl(corpus, args.out)
    man.finish(args.out)
    man.write(man_path)
    print(f"saved {args.out} ({len(corpus)} examples, "
          f"{len(corpus.domains())} domains)")
    return 0


def cmd_build_fewshot(args):
    source = ingest(args.corpus)
    os.makedirs(args.out_dir, exist_ok=True)
    man, man_path = _start_manifest(
        args, [args.corpus], os.path.join(args.out_dir, "manifest.json")
    )
    if args.k is not None:
        k_map = {d: args.k for d in source.domains()}
    else:
        k_map = default_k_map(source.domains())
    train, test = build_fewshot(source, k_map, seed=args.seed)
    train_path = os.path.join(args.out_dir, "train.jsonl")
    test_path = os.path.join(args.out_dir, "test.jsonl")
    write_jsonl(train, train_path)
    write_jsonl(test, test_path)
    man.finish(train_path, test_path)
    man.write(man_path)
    print(render_stats(stats(train, test), title=os.path.basename(args.corpus)))
    return 0


def cmd_stats(args):
    man, man_path = _start_manifest(
        args, [args.train, args.test], "scgpt-stats.manifest.json"
    )
    train, test = ingest(args.train), ingest(args.test)
    print(render_stats(stats(train, test)))
    man.finish()
    man.write(man_path)
    return 0


def _interactive_generate(params, vocab, dc):
    """Read one linearized dialog act per line; echo one realization."""
    from .decoding import generate_reranked

    for raw in sys.stdin:
        line = raw.strip()
        if not line:
            continue
        try:
            acts = parse_linearized(line)
            cand = generate_reranked(params, vocab, acts, dc)
        except ScgptError as e:
            print(f"error: {e}", file=sys.stderr, flush=True)
            continue
        print(cand.text, flush=True)
    return 0


def cmd_generate(args):
    from .decoding import generate_corpus, generate_reranked

    rc = _load_rc(args)
    vocab = _vocab_for(rc)
    if args.ckpt is None:
        raise UsageError("generate needs --ckpt")
    params = load_checkpoint(args.ckpt)
    if params.config.vocab_size != vocab.size:
        raise ConfigMismatchError(
            f"checkpoint vocab_size {params.config.vocab_size} != "
            f"tokenizer size {vocab.size}"
        )
    dc = rc.decode_config(
        seed=args.seed,
        n_candidates=args.n_candidates,
        max_new_tokens=args.max_new_tokens,
    )
    inputs = [args.config, rc.vocab, args.ckpt]
    if args.corpus:
        inputs.append(args.corpus)
    default_man = (args.out or "scgpt-generate") + ".manifest.json"
    man, man_path = _start_manifest(args, inputs, default_man)

    if args.da is not None:
        out_lines = [generate_reranked(params, vocab, parse_linearized(args.da), dc).text]
    elif args.corpus is not None:
        corpus = ingest(args.corpus)
        if args.domain is not None:
            corpus = Corpus(
                tuple(ex for ex in corpus if ex.domain == args.domain), corpus.name
            )
        winners = generate_corpus(params, vocab, [ex.acts for ex in corpus], dc)
        out_lines = [c.text for c in winners]
    else:
        code = _interactive_generate(params, vocab, dc)
        man.finish()
        man.write(man_path)
        return code

    if args.out:
        _write_lines(args.out, out_lines)
        man.finish(args.out)
        print(f"saved {args.out} ({len(out_lines)} lines)")
    else:
        for line in out_lines:
            print(line)
        man.finish()
    man.write(man_path)
    return 0


def cmd_evaluate(args):
    man, man_path = _start_manifest(
        args, [args.gens, args.test, args.train], "scgpt-evaluate.manifest.json"
    )
    candidates = _read_lines(args.gens)
    test, train = ingest(args.test), ingest(args.train)
    report = evaluate(train, test, candidates, domain=args.domain or "")
    print(render_report(report))
    man.finish()
    man.write(man_path)
    return 0


_OUT_FLAGS = ("--out", "--out-dir", "--manifest")


def _redirect_argv(argv, out_dir):
    """Point every output flag of a recorded argv into out_dir."""
    new = list(argv)
    seen_manifest = False
    for i, tok in enumerate(new[:-1]):
        if tok in _OUT_FLAGS:
            new[i + 1] = os.path.join(out_dir, os.path.basename(new[i + 1]))
            seen_manifest = seen_manifest or tok == "--manifest"
    if not seen_manifest:
        new += ["--manifest", os.path.join(out_dir, "replay.manifest.json")]
    return new


def cmd_replay(args):
    man = load_manifest(args.manifest_path)
    for path, digest in sorted(man.inputs.items()):
        if sha256_file(path) != digest:
            raise UsageError(f"input {path} changed since the recorded run")
    out_dir = args.out_dir or tempfile.mkdtemp(prefix="scgpt-replay-")
    os.makedirs(out_dir, exist_ok=True)
    sub_argv = _redirect_argv(man.argv, out_dir)
    print(f"replaying `{man.command}` into {out_dir}")
    code = main(sub_argv)
    if code != 0:
        return code
    bad = 0
    for path, digest in sorted(man.outputs.items()):
        replayed = os.path.join(out_dir, os.path.basename(path))
        got = sha256_file(replayed)
        mark = "ok" if got == digest else "MISMATCH"
        bad += mark != "ok"
        print(f"{mark}  {os.path.basename(path)}  {got[:12]}")
    return 1 if bad else 0


def _add_common(sub, *flags):
    if "config" in flags:
        sub.add_argument("--config", help="run config file (key = value lines)")
    if "seed" in flags:
        sub.add_argument("--seed", type=int, default=0)
    if "ckpt" in flags:
        sub.add_argument("--ckpt", help="checkpoint to start from")
    sub.add_argument("--manifest", help="where to write the run manifest")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="scgpt",
        description="dialog-act conditioned response generation, end to end",
    )
    p.add_argument("--version", action="version", version=f"scgpt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train-bpe", help="learn a byte-pair vocabulary")
    s.add_argument("--corpus", required=True, help=".jsonl corpus or plain text")
    s.add_argument("--target-size", type=int, default=512)
    s.add_argument("--out", required=True)
    _add_common(s)
    s.set_defaults(func=cmd_train_bpe)

    s = sub.add_parser("synth", help="generate a synthetic dialog-act corpus")
    s.add_argument("--domains", help="comma-separated builtin grammar names "
                   f"(builtins: {', '.join(PRETRAIN_GRAMMARS + HELDOUT_GRAMMARS)})")
    s.add_argument("--grammar", action="append", help="grammar file (repeatable)")
    s.add_argument("--n-per-domain", type=int, default=200)
    s.add_argument("--out", required=True)
    _add_common(s, "seed")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("build-fewshot", help="carve few-shot train/test splits")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--k", type=int, help="override examples kept per domain")
    _add_common(s, "seed")
    s.set_defaults(func=cmd_build_fewshot)

    s = sub.add_parser("stats", help="table of corpus statistics")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    _add_common(s)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("pretrain-plain", help="language-model pretraining on text")
    s.add_argument("--corpus", required=True, help="plain text, one line per example")
    s.add_argument("--out", required=True)
    _add_common(s, "config", "seed")
    s.set_defaults(func=cmd_pretrain_plain)

    s = sub.add_parser("pretrain-da", help="dialog-act conditioned pretraining")
    s.add_argument("--corpus", required=True, help=".jsonl dialog-act corpus")
    s.add_argument("--out", required=True)
    _add_common(s, "config", "seed", "ckpt")
    s.set_defaults(func=cmd_pretrain_da)

    s = sub.add_parser("finetune", help="few-shot fine-tuning on one domain")
    s.add_argument("--corpus", required=True, help=".jsonl dialog-act corpus")
    s.add_argument("--domain", help="keep only this domain's examples")
    s.add_argument("--out", required=True)
    _add_common(s, "config", "seed", "ckpt")
    s.set_defaults(func=cmd_finetune)

    s = sub.add_parser("generate", help="realize dialog acts as responses")
    s.add_argument("--da", help="one linearized dialog act")
    s.add_argument("--corpus", help=".jsonl corpus of dialog acts")
    s.add_argument("--domain", help="keep only this domain's examples")
    s.add_argument("--out", help="write one response per line here")
    s.add_argument("--n-candidates", type=int)
    s.add_argument("--max-new-tokens", type=int)
    _add_common(s, "config", "seed", "ckpt")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("evaluate", help="score generations against references")
    s.add_argument("--gens", required=True, help="one generated response per line")
    s.add_argument("--test", required=True)
    s.add_argument("--train", required=True, help="training corpus for the seen/unseen split")
    s.add_argument("--domain", help="label for the report header")
    _add_common(s)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("replay", help="re-run a manifest and verify output hashes")
    s.add_argument("manifest_path")
    s.add_argument("--out-dir", help="where replayed artifacts go (default: temp dir)")
    s.set_defaults(func=cmd_replay)

    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except ScgptError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
