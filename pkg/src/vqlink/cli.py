"""Command line entry point: ``vqlink {sweep,train,fit-codebook,eval,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import codec as cd
from .harness import ConfigError, MODES, PipelineConfig, System, parse_float_list, rows_to_csv, sweep, transmit
from .channel import rng_stream
from .metrics import bleu
from .vq import kmeans_fit, segment

log = logging.getLogger("vqlink")


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_ini(args.config) if args.config else PipelineConfig()
    if getattr(args, "mode", None):
        cfg.mode = args.mode
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "ebn0", None):
        try:
            cfg.ebn0_db = parse_float_list(args.ebn0)
        except ValueError as exc:
            raise ConfigError("ebn0", str(exc)) from exc
    if getattr(args, "trials", None) is not None:
        cfg.trials = args.trials
    return cfg.validate()


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    rows, _ = sweep(cfg, workers=args.workers)
    _write(rows_to_csv(rows), args.out)
    return 0


def _corpus(path):
    return cd.read_corpus(path) if path else cd.toy_corpus(200, seed=0)


def cmd_train(args) -> int:
    sentences = _corpus(args.corpus)
    params = codebook = None
    if args.init:
        ckpt = cd.load_checkpoint(args.init)
        vocab, params, codebook = ckpt.vocab, ckpt.params, ckpt.codebook
    else:
        vocab = cd.ToyVocab.from_corpus(sentences, max_size=args.vocab_size)
    config = cd.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        beta=args.beta,
        noise_tuning=args.noise_tuning,
        channel=args.channel,
        ebn0_db=args.train_ebn0,
        noise_mode=args.noise_mode,
        d_z=args.d_z,
        K=args.K,
        seed=args.seed,
    )
    result = cd.train(sentences, vocab, config, params=params, codebook=codebook)
    meta = {"d_z": config.d_z, "K": config.K, "beta": config.beta, "final_loss": repr(result.history[-1])}
    cd.save_checkpoint(args.out, vocab, result.params, result.codebook, meta)
    if args.codebook_out:
        result.codebook.save(args.codebook_out)
    print(f"trained {config.epochs} epochs, final loss {result.history[-1]:.6f}")
    return 0


def cmd_fit_codebook(args) -> int:
    ckpt = cd.load_checkpoint(args.checkpoint)
    ids = np.concatenate([cd.tokenize(s, ckpt.vocab) for s in _corpus(args.corpus)])
    r = cd.encode(ids, ckpt.params)
    samples = np.unique(segment(r, args.d_z).reshape(-1, args.d_z), axis=0)
    if samples.shape[0] < args.K:
        raise ConfigError("K", f"only {samples.shape[0]} distinct latent segments for K={args.K}")
    result = kmeans_fit(samples, args.K, max_iters=args.iters, seed=args.seed)
    result.codebook.save(args.out)
    print(f"fitted K={args.K} d_z={args.d_z} in {result.iterations} iterations, distortion {result.distortion[-1]:.6g}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    system = System.from_config(cfg)
    sentences = system.corpus[: args.sentences]
    lines = []
    for p, ebn0 in enumerate(cfg.ebn0_db):
        acc, b4, b4_clean = [], [], []
        for i, s in enumerate(sentences):
            ids = cd.tokenize(s, system.vocab)
            rec, _ = transmit(ids, system, ebn0, rng_stream(cfg.master_seed, p, i, "channel"), rng_stream(cfg.master_seed, p, i, "noise"))
            clean = system.noiseless_prediction(ids)
            ref = [system.vocab.tokens[k] for k in ids]
            b4_clean.append(bleu(ref, [system.vocab.tokens[k] for k in clean]).score)
            acc.append(rec.token_accuracy)
            b4.append(rec.bleu_4)
        lines.append(
            f"mode={cfg.mode} channel={cfg.phy.channel} ebn0_db={ebn0:g} sentences={len(sentences)} "
            f"token_accuracy={np.mean(acc):.6f} bleu_4={np.mean(b4):.6f} noiseless_bleu_4={np.mean(b4_clean):.6f}"
        )
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    failures = run_selftest(verbose=True)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqlink", description="Codebook-based semantic transport over a simulated 5G-like PHY.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def pipeline_flags(p):
        p.add_argument("--config", help="INI file with [pipeline] and [phy] sections")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output path (stdout when omitted)")
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--ebn0", help="comma-separated EbN0 list in dB")
        p.add_argument("--trials", type=int)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep to CSV")
    pipeline_flags(p)
    p.add_argument("--workers", type=int, default=None, help="worker processes (capped by VQLINK_THREADS)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train", help="train the toy codec")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--corpus")
    p.add_argument("--init", help="start from this checkpoint (e.g. for noise-tuning)")
    p.add_argument("--codebook-out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--beta", type=float, default=0.25)
    p.add_argument("--d-z", type=int, default=2)
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--vocab-size", type=int, default=64)
    p.add_argument("--noise-tuning", action="store_true")
    p.add_argument("--noise-mode", choices=("phy", "surrogate"), default="phy")
    p.add_argument("--channel", default="TDL-A")
    p.add_argument("--train-ebn0", type=float, default=3.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit-codebook", help="k-means codebook over corpus latents")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus")
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--d-z", type=int, default=2)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_codebook)

    p = sub.add_parser("eval", help="single-run metrics report")
    pipeline_flags(p)
    p.add_argument("--sentences", type=int, default=50)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftest", help="analytic SER and round-trip checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"vqlink: error: missing or invalid field '{exc.field}': {exc}", file=sys.stderr)
        return 2
    except cd.TrainingDiverged as exc:
        print(f"vqlink: training diverged: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"vqlink: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
