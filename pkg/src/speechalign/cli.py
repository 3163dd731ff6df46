"""Command-line entry point exposing the pipeline as file-to-file subcommands.

Exit codes: 0 success, 1 usage error, 2 data/format error. Logs go to
stderr; data outputs go to stdout or to explicitly named paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dataset, dsp, encoders, fusion, retrieval, trainer
from .encoders import FormatError
from .losses import LossConfig

CONFIG_DEFAULTS: dict[str, tuple[type, object]] = {
    # dsp
    "n_fft": (int, dsp.DEFAULT_N_FFT),
    "hop": (int, dsp.DEFAULT_HOP),
    "n_mels": (int, dsp.DEFAULT_N_MELS),
    "grid_t": (int, dsp.DEFAULT_GRID_T),
    "grid_f": (int, dsp.DEFAULT_GRID_F),
    # fusion (d_speech/d_spec/d_out come from the input files)
    "strategy": (str, "concat"),
    "d_hidden": (int, 0),  # 0 = auto (2 * d_out)
    "n_encoder_blocks": (int, 2),
    "dropout_p": (float, 0.1),
    # loss
    "loss": (str, "contrastive"),
    "huber_delta": (float, 1.0),
    # training
    "learning_rate": (float, 5e-6),
    "batch_size": (int, 32),
    "max_epochs": (int, 50),
    "patience": (int, 5),
    "seed": (int, 0),
    "split_seed": (int, 0),
    # evaluation
    "eval_seed": (int, 0),
    "candidates_k": (int, retrieval.DEFAULT_CANDIDATES_K),
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1, not argparse's default 2
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def load_config_file(path: str) -> dict:
    """Flat key=value config; unknown keys are rejected."""
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in CONFIG_DEFAULTS:
                raise FormatError(f"{path}:{lineno}: unknown config key {key!r}")
            typ = CONFIG_DEFAULTS[key][0]
            try:
                values[key] = typ(raw)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from exc
    return values


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, overlaid by --config file, overlaid by CLI flags."""
    cfg = {key: default for key, (_, default) in CONFIG_DEFAULTS.items()}
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for key in CONFIG_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _dump_json(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_vectors(path: str, modality: str = "speech") -> dict[str, np.ndarray]:
    records = encoders.read_cemb(path, modality=modality)
    if records and isinstance(records[0], encoders.FrameEmbeddings):
        raise FormatError(f"{path}: expected sentence vectors (kind 0), got frame sequences")
    return encoders.as_vector_table(records)


def _require_ids(table: dict[str, np.ndarray], ids: list[str], what: str) -> None:
    missing = [i for i in ids if i not in table]
    if missing:
        raise ValueError(f"{what} is missing ids {missing[:5]} ({len(missing)} total)")


def cmd_synth(args: argparse.Namespace) -> int:
    records = dataset.generate_synthetic(
        args.out, n=args.n, seed=args.seed,
        vocab_size=args.vocab_size, words_per_sentence=args.words_per_sentence,
    )
    print(f"wrote {len(records)} records under {args.out}", file=sys.stderr)
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    records = dataset.load_manifest(args.manifest)
    _dump_json(dataset.corpus_stats(records), args.out)
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    records = dataset.load_manifest(args.manifest)
    assignment = dataset.split(records, cfg["split_seed"])
    counts = {name: len(assignment.ids_for(name)) for name in dataset.SPLIT_NAMES}
    _dump_json(
        {"seed": assignment.seed, "counts": counts, "assignment": assignment.assignment},
        args.out,
    )
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    records = dataset.load_manifest(args.manifest)
    ids = [rec.id for rec in records]
    wrote_any = False
    if args.out_spec:
        audio_root = args.audio_root or os.path.dirname(os.path.abspath(args.manifest))
        dsp_cfg = dsp.DspConfig(
            n_fft=cfg["n_fft"], hop=cfg["hop"], n_mels=cfg["n_mels"],
            grid_t=cfg["grid_t"], grid_f=cfg["grid_f"],
        )
        out = [
            encoders.SentenceEmbedding(
                id=rec.id,
                vector=dsp.spectrogram_features(
                    dsp.load_wav(os.path.join(audio_root, rec.audio)), dsp_cfg
                ),
                modality="speech",
            )
            for rec in records
        ]
        encoders.write_cemb(args.out_spec, out, kind=encoders.KIND_SENTENCE)
        wrote_any = True
    if args.out_ssl:
        if args.frames and args.synth_ssl_dim:
            raise ValueError("give either --frames or --synth-ssl-dim, not both")
        if args.frames:
            frame_records = encoders.read_cemb(args.frames)
            if frame_records and not isinstance(frame_records[0], encoders.FrameEmbeddings):
                raise FormatError(f"{args.frames}: expected frame sequences (kind 1)")
            by_id = {rec.id: rec for rec in frame_records}
            _require_ids(by_id, ids, args.frames)
            pooled = [encoders.mean_pool(by_id[i]) for i in ids]
        elif args.synth_ssl_dim:
            pooled = []
            for rec in records:
                fe = encoders.synthetic_frames(rec.text, cfg["seed"], args.synth_ssl_dim)
                pooled.append(
                    encoders.SentenceEmbedding(id=rec.id, vector=fe.frames.mean(axis=0))
                )
        else:
            raise ValueError("--out-ssl needs --frames or --synth-ssl-dim")
        encoders.write_cemb(args.out_ssl, pooled, kind=encoders.KIND_SENTENCE)
        wrote_any = True
    if args.out_text:
        if not args.synth_text_dim:
            raise ValueError("--out-text needs --synth-text-dim")
        vecs = [
            encoders.SentenceEmbedding(
                id=rec.id,
                vector=encoders.synthetic_text_embedding(
                    rec.text, cfg["seed"], args.synth_text_dim
                ).vector,
                modality="text",
            )
            for rec in records
        ]
        encoders.write_cemb(args.out_text, vecs, kind=encoders.KIND_SENTENCE)
        wrote_any = True
    if not wrote_any:
        raise ValueError("nothing to do: give --out-spec, --out-ssl, or --out-text")
    return 0


def _fusion_config(cfg: dict, d_speech: int, d_spec: int, d_out: int) -> fusion.FusionConfig:
    d_hidden = cfg["d_hidden"] or 2 * d_out
    return fusion.FusionConfig(
        strategy=cfg["strategy"],
        d_speech=d_speech,
        d_spec=d_spec,
        d_hidden=d_hidden,
        d_out=d_out,
        n_encoder_blocks=cfg["n_encoder_blocks"],
        dropout_p=cfg["dropout_p"],
    )


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    records = dataset.load_manifest(args.manifest)
    ids = [rec.id for rec in records]
    ssl = _load_vectors(args.ssl)
    spec = _load_vectors(args.spec)
    text = _load_vectors(args.text, modality="text")
    for table, name in ((ssl, args.ssl), (spec, args.spec), (text, args.text)):
        _require_ids(table, ids, name)
    dims = {name: next(iter(t.values())).shape[0] for name, t in
            (("ssl", ssl), ("spec", spec), ("text", text))}
    fusion_cfg = _fusion_config(cfg, dims["ssl"], dims["spec"], dims["text"])
    train_cfg = trainer.TrainConfig(
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        max_epochs=cfg["max_epochs"],
        early_stop_patience=cfg["patience"],
        seed=cfg["seed"],
        loss=LossConfig(kind=cfg["loss"], huber_delta=cfg["huber_delta"]),
    )
    splits = dataset.split(records, cfg["split_seed"])
    result = trainer.fit(
        records, splits, trainer.FeatureSet(ssl=ssl, spec=spec, text=text),
        fusion_cfg, train_cfg,
    )
    meta = {
        "loss": train_cfg.loss.kind,
        "huber_delta": train_cfg.loss.huber_delta,
        "learning_rate": train_cfg.learning_rate,
        "batch_size": train_cfg.batch_size,
        "max_epochs": train_cfg.max_epochs,
        "early_stop_patience": train_cfg.early_stop_patience,
        "seed": train_cfg.seed,
        "split_seed": cfg["split_seed"],
        "best_epoch": result.best_epoch,
        "best_dev_mrr": result.best_dev_mrr,
        "epochs_run": result.epochs_run,
    }
    fusion.save_checkpoint(args.out_checkpoint, fusion_cfg, result.params, meta)
    if args.out_log:
        with open(args.out_log, "w", encoding="utf-8") as fh:
            for entry in result.log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    print(
        f"trained {result.epochs_run} epochs; best dev MRR {result.best_dev_mrr:.4f} "
        f"at epoch {result.best_epoch}",
        file=sys.stderr,
    )
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    cfg_fusion, params, _ = fusion.load_checkpoint(args.checkpoint)
    ssl_records = encoders.read_cemb(args.ssl)
    if ssl_records and isinstance(ssl_records[0], encoders.FrameEmbeddings):
        raise FormatError(f"{args.ssl}: expected sentence vectors (kind 0)")
    ids = [rec.id for rec in ssl_records]
    ssl = encoders.as_vector_table(ssl_records)
    spec = _load_vectors(args.spec)
    _require_ids(spec, ids, args.spec)
    fused = fusion.fuse_eval(
        params, cfg_fusion,
        np.stack([ssl[i] for i in ids]),
        np.stack([spec[i] for i in ids]),
    )
    out = [
        encoders.SentenceEmbedding(id=i, vector=fused[row], modality="speech")
        for row, i in enumerate(ids)
    ]
    encoders.write_cemb(args.out, out, kind=encoders.KIND_SENTENCE)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cfg_fusion, _, meta = fusion.load_checkpoint(args.checkpoint)
    records = dataset.load_manifest(args.manifest)
    split_seed = args.split_seed if args.split_seed is not None else meta.get("split_seed", cfg["split_seed"])
    splits = dataset.split(records, split_seed)
    manifest_ids = {rec.id for rec in records}
    query_ids = sorted(i for i in splits.ids_for(args.split) if i in manifest_ids)
    if not query_ids:
        raise ValueError(f"split {args.split!r} is empty")
    speech = _load_vectors(args.speech_emb)
    text = _load_vectors(args.text_emb, modality="text")
    _require_ids(speech, query_ids, args.speech_emb)
    _require_ids(text, query_ids, args.text_emb)
    index = retrieval.EmbeddingIndex.build(query_ids, np.stack([speech[i] for i in query_ids]))
    mode = "five" if args.candidates == "five" else "full"
    report = retrieval.evaluate(
        index,
        {i: text[i] for i in query_ids},
        query_ids,
        candidate_mode=mode,
        k=cfg["candidates_k"],
        seed=cfg["eval_seed"],
    )
    loss_name = args.loss or meta.get("loss", "unknown")
    payload = dict(report.as_dict())
    payload.update(
        {
            "split": args.split,
            "split_seed": split_seed,
            "eval_seed": cfg["eval_seed"],
            "k": cfg["candidates_k"],
            "loss": loss_name,
            "checkpoint_config": {
                "strategy": cfg_fusion.strategy,
                "d_speech": cfg_fusion.d_speech,
                "d_spec": cfg_fusion.d_spec,
                "d_hidden": cfg_fusion.d_hidden,
                "d_out": cfg_fusion.d_out,
                "n_encoder_blocks": cfg_fusion.n_encoder_blocks,
                "dropout_p": cfg_fusion.dropout_p,
            },
        }
    )
    if args.format == "tsv":
        cols = ["hits_at_1", "mrr", "mean_r", "macro_f1", "n_queries", "candidate_mode", "loss"]
        text_out = "\t".join(cols) + "\n" + "\t".join(str(payload[c]) for c in cols) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text_out)
        else:
            sys.stdout.write(text_out)
    else:
        _dump_json(payload, args.out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="speechalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add_config_flags(p: _Parser, keys: list[str]) -> None:
        p.add_argument("--config", help="flat key=value config file")
        for key in keys:
            typ = CONFIG_DEFAULTS[key][0]
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None)

    p = sub.add_parser("synth", help="generate a synthetic paired corpus", parents=[])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=32)
    p.add_argument("--words-per-sentence", type=int, default=4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="corpus statistics for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="deterministic train/dev/test assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    add_config_flags(p, ["split_seed"])
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("extract", help="WAVs / frames / synthetic encoders -> feature CEMBs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--out-spec")
    p.add_argument("--frames")
    p.add_argument("--out-ssl")
    p.add_argument("--synth-ssl-dim", type=int)
    p.add_argument("--synth-text-dim", type=int)
    p.add_argument("--out-text")
    add_config_flags(p, ["n_fft", "hop", "n_mels", "grid_t", "grid_f", "seed"])
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the fusion encoder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ssl", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--out-log")
    add_config_flags(
        p,
        ["strategy", "d_hidden", "n_encoder_blocks", "dropout_p", "loss", "huber_delta",
         "learning_rate", "batch_size", "max_epochs", "patience", "seed", "split_seed"],
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="apply a checkpoint to features -> speech CEMB")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ssl", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="retrieval metrics for a checkpoint's embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--speech-emb", required=True)
    p.add_argument("--text-emb", required=True)
    p.add_argument("--candidates", choices=["five", "full"], default="full")
    p.add_argument("--split", choices=list(dataset.SPLIT_NAMES), default="test")
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--loss")
    p.add_argument("--format", choices=["json", "tsv"], default="json")
    p.add_argument("--out")
    add_config_flags(p, ["eval_seed", "candidates_k"])
    p.set_defaults(func=cmd_eval)
    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if not getattr(args, "command", None):
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (FormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
