"""``aeface`` command line: one subcommand per pipeline stage, composed through files.

Exit codes: 0 ok, 2 usage/config, 3 I/O, 4 data, 5 model, 6 protocol,
7 verification failure.
"""

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from . import config as config_mod
from . import dataio, figures, gradcheck, persist, pretrain, transfer, verify, viz
from .errors import (ConfigError, DataError, ModelError, NumericError, ProtocolError,
                     ShapeError)

log = logging.getLogger("aeface")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_MODEL, EXIT_PROTOCOL, EXIT_VERIFY = 0, 2, 3, 4, 5, 6, 7


class VerificationFailed(Exception):
    pass


# -- helpers ----------------------------------------------------------------

def _out_dir(args):
    out = args.out or "."
    if not os.path.isdir(out):
        raise FileNotFoundError(f"output directory {out!r} does not exist")
    return out


def _need(value, flag):
    if not value:
        raise ConfigError(f"missing {flag} (or the matching entry under config 'paths')")
    return value


def _image_side(input_dim):
    side = math.isqrt(input_dim)
    if side * side != input_dim:
        raise ConfigError(f"input_dim {input_dim} is not a square image size")
    return side


def _write_history(path, history, lrs):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "loss", "lr"])
        for i, (loss, lr) in enumerate(zip(history, lrs)):
            w.writerow([i, f"{loss:.17g}", f"{lr:.17g}"])


def write_embeddings(path, ids, emb):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for i, row in zip(ids, emb):
            w.writerow([i] + [f"{v:.17g}" for v in row])


def read_embeddings(path):
    ids, rows = [], []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected id plus at least one value")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric embedding value") from None
            ids.append(row[0])
    if not rows:
        raise DataError(f"{path}: no embeddings")
    if len({len(r) for r in rows}) != 1:
        raise DataError(f"{path}: rows have differing widths")
    return ids, np.array(rows)


def _feasible_pair_counts(samples, protocol):
    """Requested pair counts, capped at what the sample set allows and rounded down to a multiple of k."""
    counts = np.bincount([s.label for s in samples])
    n = len(samples)
    avail_same = int(sum(c * (c - 1) // 2 for c in counts))
    avail_diff = n * (n - 1) // 2 - avail_same
    k = protocol.k
    got = []
    for want, avail, kind in ((protocol.n_same, avail_same, "matched"), (protocol.n_diff, avail_diff, "mismatched")):
        m = min(want, avail)
        m -= m % k
        if m != want:
            log.warning("only %d %s pairs available; writing %d", avail, kind, m)
        got.append(m)
    return tuple(got)


def _echo_config(cfg, out):
    config_mod.dump_config(cfg, os.path.join(out, "config.resolved.json"))


# -- commands ---------------------------------------------------------------

def cmd_synth(cfg, args):
    out = _out_dir(args)
    samples, _ = dataio.synth_dataset(cfg.synth)
    img_dir = os.path.join(out, "images")
    os.makedirs(img_dir, exist_ok=True)
    rows = []
    for s in samples:
        rel = os.path.join("images", f"{s.id}.pgm")
        dataio.save_pgm(os.path.join(out, rel), s.pixels.reshape(dataio.IMAGE_SIDE, dataio.IMAGE_SIDE))
        rows.append(dataio.ManifestRow(s.id, rel, s.label))
    dataio.write_manifest(os.path.join(out, "manifest.csv"), rows)

    n_test = int(round(cfg.synth.per_class * cfg.protocol.test_fraction))
    test_ids = {s.id for s in samples if int(s.id.rsplit("_", 1)[1]) >= cfg.synth.per_class - n_test}
    train_rows = [r for r in rows if r.id not in test_ids]
    test_rows = [r for r in rows if r.id in test_ids] or rows
    dataio.write_manifest(os.path.join(out, "train_manifest.csv"), train_rows)
    dataio.write_manifest(os.path.join(out, "test_manifest.csv"), test_rows)
    test_samples = [s for s in samples if s.id in {r.id for r in test_rows}]
    n_same, n_diff = _feasible_pair_counts(test_samples, cfg.protocol)
    pairs = dataio.make_pairs(test_samples, n_same, n_diff, cfg.seed)
    dataio.write_pairs_csv(os.path.join(out, "pairs.csv"), pairs)
    _echo_config(cfg, out)
    print(f"wrote {len(rows)} images ({len(train_rows)} train / {len(test_rows)} test) "
          f"and {len(pairs)} pairs to {out}")


def _train_logged(run):
    lrs = []

    def on_epoch(epoch, loss, lr):
        lrs.append(lr)
        print(f"epoch {epoch:4d}  loss {loss:.6g}  lr {lr:.3g}")

    return run(on_epoch), lrs


def cmd_pretrain(cfg, args):
    out = _out_dir(args)
    manifest = _need(args.manifest or cfg.paths.train_manifest or cfg.paths.manifest, "--manifest")
    ae_cfg = cfg.autoencoder
    side = _image_side(ae_cfg.input_dim)
    _, data, _ = dataio.load_images(manifest, side)
    net = pretrain.build_autoencoder(ae_cfg, np.random.default_rng(cfg.seed))
    (net, history), lrs = _train_logged(
        lambda cb: pretrain.pretrain(net, data, ae_cfg.train, cb))
    persist.save(net, os.path.join(out, "model.aefv"))
    _write_history(os.path.join(out, "loss_history.csv"), history, lrs)
    if cfg.figures:
        figures.loss_curves({"reconstruction MSE": history}, os.path.join(out, "loss_curve.png"),
                            ylabel="MSE", title="autoencoder pretraining")
    _echo_config(cfg, out)
    print(f"pretrained {len(history)} epochs, final MSE {history[-1]:.6g}")


def cmd_finetune(cfg, args):
    out = _out_dir(args)
    manifest = _need(args.manifest or cfg.paths.train_manifest or cfg.paths.manifest, "--manifest")
    ae_path = _need(args.ae_model or cfg.paths.ae_model, "--ae-model")
    cl_cfg = cfg.classifier
    if args.init_mode:
        cl_cfg.init_mode = transfer.InitMode(args.init_mode)
    ae = persist.load(ae_path)
    try:
        pretrain.check_autoencoder(ae)
        side = _image_side(ae.input_dim)
    except (ShapeError, ConfigError) as exc:
        raise ModelError(f"{ae_path}: {exc}") from None
    _, data, labels = dataio.load_images(manifest, side)
    if labels is None:
        raise DataError(f"{manifest}: fine-tuning needs a label for every sample")
    try:
        net = transfer.build_classifier(ae, cl_cfg, np.random.default_rng(cfg.seed))
    except ConfigError as exc:
        raise ModelError(str(exc)) from None
    (net, history), lrs = _train_logged(
        lambda cb: transfer.finetune(net, data, labels, cl_cfg.train, cb))
    persist.save(net, os.path.join(out, "classifier.aefv"))
    _write_history(os.path.join(out, "loss_history.csv"), history, lrs)
    if cfg.figures:
        figures.loss_curves({transfer.InitMode(cl_cfg.init_mode).value: history},
                            os.path.join(out, "loss_curve.png"), ylabel="cross-entropy", title="fine-tuning")
    _echo_config(cfg, out)
    acc = transfer.accuracy(net, data, labels)
    print(f"fine-tuned {len(history)} epochs, final loss {history[-1]:.6g}, training accuracy {acc:.4f}")


def cmd_embed(cfg, args):
    out = _out_dir(args)
    model_path = _need(args.classifier or cfg.paths.classifier, "--classifier")
    manifest = _need(args.manifest or cfg.paths.test_manifest or cfg.paths.manifest, "--manifest")
    net = persist.load(model_path)
    try:
        transfer.check_classifier(net)
        side = _image_side(net.input_dim)
    except (ShapeError, ConfigError) as exc:
        raise ModelError(f"{model_path}: {exc}") from None
    ids, data, _ = dataio.load_images(manifest, side)
    emb = transfer.extract_embeddings(net, data)
    write_embeddings(os.path.join(out, "embeddings.csv"), ids, emb)
    print(f"wrote {len(ids)} embeddings of width {emb.shape[1]}")


def cmd_evaluate(cfg, args):
    out = _out_dir(args)
    emb_path = _need(args.embeddings or cfg.paths.embeddings, "--embeddings")
    pairs_path = _need(args.pairs or cfg.paths.pairs, "--pairs")
    k = args.k or cfg.protocol.k
    ids, emb = read_embeddings(emb_path)
    table = dict(zip(ids, emb))
    if pairs_path.endswith(".txt"):
        pairs = dataio.read_lfw_pairs(pairs_path)
    else:
        pairs = dataio.read_pairs_csv(pairs_path)
    if pairs.fold_of is None:
        pairs = dataio.assign_folds(pairs, k, cfg.seed)
    else:
        k = int(pairs.fold_of.max()) + 1
    scores = verify.score_pairs(table, pairs)
    meta = {"seed": cfg.seed, "embeddings": os.path.basename(emb_path), "pairs": os.path.basename(pairs_path)}
    report = verify.kfold_accuracy(scores, pairs.same_flags, pairs.fold_of, k, meta)
    with open(os.path.join(out, "report.json"), "w") as f:
        f.write(report.to_json())
    if cfg.figures:
        figures.score_histogram(scores, pairs.same_flags, os.path.join(out, "scores.png"),
                                [r.threshold for r in report.folds])
    print(f"accuracy {report.mean_accuracy:.4f} +- {report.std_accuracy:.4f} over {k} folds")


def cmd_tsne(cfg, args):
    out = _out_dir(args)
    labels = None
    if args.source == "raw":
        manifest = _need(args.manifest or cfg.paths.test_manifest or cfg.paths.manifest, "--manifest")
        _, points, labels = dataio.load_images(manifest, dataio.IMAGE_SIDE)
    else:
        ids, points = read_embeddings(_need(args.embeddings or cfg.paths.embeddings, "--embeddings"))
        manifest = args.manifest or cfg.paths.test_manifest or cfg.paths.manifest
        if manifest:
            by_id = {r.id: r.label for r in dataio.read_manifest(manifest)}
            if all(by_id.get(i) is not None for i in ids):
                labels = np.array([by_id[i] for i in ids])
    if labels is None:
        labels = np.zeros(len(points), dtype=np.intp)
    if len(points) < 3:
        raise ProtocolError(f"t-SNE needs at least 3 points, got {len(points)}")
    coords, kl = viz.tsne(points, cfg.tsne)
    viz.export_scatter(coords, labels, out)
    if cfg.figures:
        figures.scatter(coords, labels, os.path.join(out, "scatter.png"), title=f"t-SNE ({args.source})")
    msg = f"t-SNE on {len(points)} {args.source} points: KL {kl[0]:.4f} -> {kl[-1]:.4f}" if kl else ""
    if len(np.unique(labels)) > 1:
        msg += f", silhouette {viz.silhouette_score(coords, labels):.4f}"
    print(msg)


def cmd_gradcheck(cfg, args, backward_fn=None):
    seed = cfg.seed
    worst = 0.0
    for arch, err in gradcheck.run(seed, backward_fn=backward_fn):
        ok = err < gradcheck.TOLERANCE
        print(f"{arch.name:40s} max rel err {err:.3e}  {'ok' if ok else 'FAIL'}")
        worst = max(worst, err)
    if worst >= gradcheck.TOLERANCE:
        raise VerificationFailed(f"gradient check failed: max relative error {worst:.3e}")
    print(f"all architectures within {gradcheck.TOLERANCE:g}")


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "embed": cmd_embed,
    "evaluate": cmd_evaluate,
    "tsne": cmd_tsne,
    "gradcheck": cmd_gradcheck,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="aeface", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="existing output directory (default: .)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    add("synth", "write a synthetic PGM face set, manifests and pairs")
    p = add("pretrain", "train the autoencoder on unlabeled images")
    p.add_argument("--manifest")
    p = add("finetune", "build and fine-tune the classifier from a pretrained autoencoder")
    p.add_argument("--manifest")
    p.add_argument("--ae-model")
    p.add_argument("--init-mode", choices=[m.value for m in transfer.InitMode])
    p = add("embed", "extract embeddings for every manifest image")
    p.add_argument("--classifier")
    p.add_argument("--manifest")
    p = add("evaluate", "k-fold cosine verification accuracy")
    p.add_argument("--embeddings")
    p.add_argument("--pairs", help="pair CSV (id_a,id_b,same) or LFW-style pairs.txt")
    p.add_argument("--k", type=int)
    p = add("tsne", "2-D t-SNE of embeddings or raw pixels")
    p.add_argument("--source", choices=["raw", "embeddings"], default="embeddings")
    p.add_argument("--embeddings")
    p.add_argument("--manifest")
    add("gradcheck", "finite-difference gradient check")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_mod.load_config(args.config, args.seed)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        code, exc_ = EXIT_USAGE, exc
    except ModelError as exc:
        code, exc_ = EXIT_MODEL, exc
    except ShapeError as exc:
        code, exc_ = EXIT_MODEL, exc
    except ProtocolError as exc:
        code, exc_ = EXIT_PROTOCOL, exc
    except (DataError, NumericError) as exc:
        code, exc_ = EXIT_DATA, exc
    except VerificationFailed as exc:
        code, exc_ = EXIT_VERIFY, exc
    except OSError as exc:
        code, exc_ = EXIT_IO, exc
    else:
        return EXIT_OK
    print(f"aeface {args.command}: error: {exc_}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
