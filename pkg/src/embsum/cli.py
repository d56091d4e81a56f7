"""Command-line entry point: train / select / eval / rescore / gradcheck /
gen-synthetic workflows over the corpus and checkpoint file formats.

Exit codes: 0 success, 1 input or runtime error, 2 verification failure.
Every command validates its inputs before writing anything, and writes a
config echo (<output>.config.json) alongside its outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import metrics, model, rescore, selection, training

log = logging.getLogger("embsum")


def _echo_config(out_path, args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    Path(str(out_path) + ".config.json").write_text(
        json.dumps(resolved, indent=1, sort_keys=True, default=str), encoding="utf-8")


def _ordered_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    cfg = corpus_mod.SyntheticConfig(
        n_docs=args.n_docs, sentences_per_doc=args.sentences, dim=args.dim,
        planted_count=args.planted, noise_scale=args.noise, seed=args.seed)
    corpus, planted = corpus_mod.gen_synthetic(cfg)
    corpus_mod.write_synthetic(corpus, planted, args.out)
    _echo_config(args.out, args)
    log.info("wrote synthetic corpus: %d docs, d=%d", args.n_docs, args.dim)
    return 0


def cmd_train(args) -> int:
    corpus = corpus_mod.load_corpus(args.corpus, expect_targets=True)
    cfg = training.TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, grad_clip_norm=args.grad_clip,
        seed=args.seed, optimizer=args.optimizer,
        skip_first_step_loss=not args.include_first_step_loss,
        loss_sign=args.loss_sign)
    params = model.init_params(corpus.embedding_dim, args.hidden, args.seed,
                               ct_activation=args.ct_activation)
    ckpt = Path(args.out_checkpoint)
    log_path = Path(args.log) if args.log else Path(str(ckpt) + ".log.jsonl")
    meta = {"seed": args.seed, "train_config": vars(cfg).copy()}

    records = []

    def on_epoch(epoch, cur_params, record):
        records.append(record)
        if args.checkpoint_every and (epoch + 1) % args.checkpoint_every == 0:
            model.save_checkpoint(cur_params, f"{ckpt}.epoch{epoch + 1}", meta)
        log.info("epoch %d mean_loss=%.6f mean_final_angle=%.6f",
                 record["epoch"], record["mean_loss"], record["mean_final_angle"])

    trained, _ = training.train(params, corpus, cfg, on_epoch=on_epoch)
    model.save_checkpoint(trained, ckpt, meta)
    log_path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    _echo_config(ckpt, args)
    return 0


def cmd_select(args) -> int:
    corpus = corpus_mod.load_corpus(args.corpus)
    if args.k is None:
        args.k = 1 if args.baseline else 3
    if args.baseline:
        params = None
    else:
        if not args.checkpoint:
            raise ValueError("--checkpoint is required unless --baseline is given")
        params, _ = model.load_checkpoint(args.checkpoint)
        if params.d != corpus.embedding_dim:
            raise ValueError(f"checkpoint d={params.d} does not match "
                             f"corpus d={corpus.embedding_dim}")

    def run(doc):
        if args.baseline:
            return selection.select_baseline(doc, k=args.k)
        return selection.select_top_k(params, doc, k=args.k)

    results = _ordered_map(run, corpus.documents, args.threads)
    lines = []
    for doc, res in zip(corpus.documents, results):
        lines.append(json.dumps({
            "doc_id": res.doc_id,
            "indices": [i for i, _ in res.ranked],
            "angles": [a for _, a in res.ranked],
            "sentences": [doc.sentences[i].text for i, _ in res.ranked],
        }, ensure_ascii=False))
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _echo_config(args.out, args)
    return 0


def _load_predictions(path) -> list[dict]:
    preds = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON: {exc}") from None
            if "doc_id" not in rec or not ("text" in rec or "sentences" in rec):
                raise ValueError(f"{path}:{lineno}: need doc_id plus text or sentences")
            preds.append(rec)
    return preds


def cmd_eval(args) -> int:
    corpus = corpus_mod.load_corpus(args.corpus, expect_targets=True)
    by_id = {doc.doc_id: doc for doc in corpus.documents}
    preds = _load_predictions(args.pred)
    pred_embs = {}
    if args.pred_emb:
        pred_embs = {k: np.asarray(v, dtype=np.float64)
                     for k, v in json.loads(Path(args.pred_emb).read_text()).items()}

    # Validate fully before scoring/writing.
    for rec in preds:
        if rec["doc_id"] not in by_id:
            raise ValueError(f"prediction references unknown doc_id {rec['doc_id']!r}")

    def score(rec):
        doc = by_id[rec["doc_id"]]
        if "sentences" in rec and rec.get("indices"):
            text = rec["sentences"][0]
            emb = doc.sentences[rec["indices"][0]].embedding
        else:
            text = rec.get("text") or (rec["sentences"][0] if rec.get("sentences") else "")
            emb = pred_embs.get(rec["doc_id"])
        if emb is None:
            log.warning("doc %s: no prediction embedding, cosine skipped", rec["doc_id"])
        return metrics.score_document(rec["doc_id"], text, doc.target.text,
                                      emb, doc.target.embedding)

    scores = _ordered_map(score, preds, args.threads)
    report = metrics.EvalReport(per_doc=scores,
                                cosine_skipped=sum(1 for s in scores if s.cosine is None))
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["doc_id", "rouge_l_f1", "bleu", "cosine"])
            for s in scores:
                writer.writerow([s.doc_id, s.rouge_l_f1, s.bleu,
                                 "" if s.cosine is None else s.cosine])
    _echo_config(args.out, args)
    return 0


def cmd_rescore(args) -> int:
    cfg = rescore.RescoreConfig(absent_factor=args.absent_factor,
                                present_factor=args.present_factor)
    records = rescore.read_hypotheses(args.hyps)
    out = [(doc_id, rescore.rescore_hypotheses(hyps, cfg)) for doc_id, hyps in records]
    rescore.write_hypotheses(args.out, out)
    _echo_config(args.out, args)
    return 0


def cmd_gradcheck(args) -> int:
    if args.dim * args.hidden * args.len > 10 ** 6:
        raise ValueError("gradcheck guard: --dim * --hidden * --len must be <= 1e6")
    worst = 0.0
    worst_param = ""
    vacuous = True
    for seed in range(args.seed, args.seed + args.seeds):
        report = training.gradient_check(args.dim, args.hidden, args.len, seed=seed)
        corrupt = os.environ.get("EMBSUM_GRADCHECK_CORRUPT")
        if corrupt:  # test hook: pretend the named parameter's gradient is off
            report["max_rel_err"] = max(report["max_rel_err"], 1.0)
            report["worst_param"] = corrupt
        vacuous = vacuous and report["all_zero"]
        if report["max_rel_err"] > worst:
            worst = float(report["max_rel_err"])
            worst_param = report["worst_param"]
    label = " (vacuous: all gradients zero)" if vacuous else ""
    print(f"gradcheck max_rel_err={worst:.3e} worst={worst_param or 'n/a'}{label}")
    if worst >= 1e-4:
        print(f"FAIL: gradient mismatch in {worst_param}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="embsum",
        description="Extractive summarization in sentence-embedding space. "
                    "File formats are documented in the README.")
    p.add_argument("--log-level", default="info",
                   choices=["debug", "info", "warning", "error"])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="generate a planted-sentence synthetic corpus")
    g.add_argument("--n-docs", type=int, default=200)
    g.add_argument("--sentences", type=int, default=20)
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--planted", type=int, default=3)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="base path; writes .jsonl/.vec/.index.json/.planted.json")
    g.set_defaults(func=cmd_gen_synthetic)

    t = sub.add_parser("train", help="train the extractive model")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out-checkpoint", required=True)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--hidden", type=int, default=256)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--grad-clip", type=float, default=5.0)
    t.add_argument("--optimizer", default="adaptive_moments", choices=training.OPTIMIZERS)
    t.add_argument("--ct-activation", default="sigmoid", choices=model.CT_ACTIVATIONS)
    t.add_argument("--loss-sign", default="prose", choices=training.LOSS_SIGNS)
    t.add_argument("--include-first-step-loss", action="store_true")
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.add_argument("--log", default=None, help="training log JSONL path")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("select", help="extract top-k sentences per document")
    s.add_argument("--corpus", required=True)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--k", type=int, default=None,
                   help="sentences per document (default 3, or 1 with --baseline)")
    s.add_argument("--baseline", action="store_true",
                   help="use the omega-sum selector (no checkpoint needed; k defaults to 1)")
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_select)

    e = sub.add_parser("eval", help="score predictions against corpus targets")
    e.add_argument("--pred", required=True, help="selection JSONL or {doc_id, text} JSONL")
    e.add_argument("--corpus", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--pred-emb", default=None,
                   help="JSON {doc_id: [floats]} embeddings for free-text predictions")
    e.add_argument("--csv", default=None)
    e.add_argument("--threads", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rescore", help="rescore beam hypotheses with entity factors")
    r.add_argument("--hyps", required=True)
    r.add_argument("--absent-factor", type=float, default=50.0)
    r.add_argument("--present-factor", type=float, default=0.4)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_rescore)

    c = sub.add_parser("gradcheck", help="verify analytic gradients by finite differences")
    c.add_argument("--dim", type=int, default=8)
    c.add_argument("--hidden", type=int, default=4)
    c.add_argument("--len", type=int, default=5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to check")
    c.set_defaults(func=cmd_gradcheck)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, training.TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
