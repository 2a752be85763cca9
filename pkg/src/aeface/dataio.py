"""Image ingestion, pair lists, fold assignment and the synthetic face set."""

import csv
import os
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import ConfigError, DataError, FormatError, ProtocolError

IMAGE_SIDE = 112
IMAGE_DIM = IMAGE_SIDE * IMAGE_SIDE


@dataclass
class ImageSample:
    id: str
    pixels: np.ndarray  # flattened row-major, values in [0, 1]
    label: Optional[int] = None


class Pair(NamedTuple):
    id_a: str
    id_b: str
    same: bool


@dataclass
class PairList:
    entries: List[Pair]
    fold_of: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.entries)

    @property
    def same_flags(self):
        return np.array([p.same for p in self.entries], dtype=bool)


# -- PGM --------------------------------------------------------------------

def _pgm_token(buf, pos):
    """Return (token, end) skipping whitespace and '#' comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of PGM header", start)
    return buf[start:pos], pos


def decode_pgm(buf):
    """Decode binary (P5, maxval 255) PGM bytes into an (h, w) float array in [0, 1]."""
    if buf[:2] != b"P5":
        raise FormatError(f"unsupported PGM magic {buf[:2]!r}; only binary P5 is accepted", 0)
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        tok, end = _pgm_token(buf, pos)
        if not tok.isdigit():
            raise FormatError(f"bad PGM {name} {tok!r}", pos)
        values.append(int(tok))
        pos = end
    w, h, maxval = values
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval}; expected 255", pos)
    if w < 1 or h < 1:
        raise FormatError(f"bad PGM dimensions {w}x{h}", pos)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM maxval", pos)
    pos += 1
    need = w * h
    if len(buf) - pos < need:
        raise FormatError(f"truncated PGM payload: need {need} bytes, have {len(buf) - pos}", len(buf))
    raw = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos)
    return raw.reshape(h, w) / 255.0


def encode_pgm(pixels):
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise DataError("PGM pixels must be 2-D")
    h, w = pixels.shape
    q = np.rint(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def save_pgm(path, pixels):
    with open(path, "wb") as f:
        f.write(encode_pgm(pixels))


def load_pgm(path, side=IMAGE_SIDE):
    """Read a P5 PGM as an ImageSample; other sizes are resized to ``side`` x ``side``."""
    with open(path, "rb") as f:
        img = decode_pgm(f.read())
    if img.shape != (side, side):
        img = resize_bilinear(img, side, side)
    stem = os.path.splitext(os.path.basename(path))[0]
    return ImageSample(stem, img.reshape(-1))


# -- pixel ops --------------------------------------------------------------

def to_grayscale(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def _axis_weights(n_in, n_out):
    # half-pixel centres, clamped at the borders
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(pixels, out_h=IMAGE_SIDE, out_w=IMAGE_SIDE):
    img = np.asarray(pixels, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 2 or img.shape[1] < 2:
        raise DataError(f"bilinear resize needs an image of at least 2x2, got shape {img.shape}")
    if out_h < 1 or out_w < 1:
        raise DataError(f"bad output size {out_h}x{out_w}")
    if img.shape == (out_h, out_w):
        return img.copy()
    r0, r1, fr = _axis_weights(img.shape[0], out_h)
    c0, c1, fc = _axis_weights(img.shape[1], out_w)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


# -- synthetic faces --------------------------------------------------------

@dataclass
class SynthSpec:
    num_classes: int = 8
    per_class: int = 20
    noise_sigma: float = 0.08
    seed: int = 1

    def __post_init__(self):
        if self.num_classes < 2 or self.per_class < 2:
            raise ConfigError("synthetic set needs >= 2 classes and >= 2 samples per class")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")


def _prototype(rng, side):
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    img = np.zeros((side, side))
    for _ in range(3):
        cy, cx = rng.uniform(0.15, 0.85, size=2) * side
        width = rng.uniform(0.06, 0.16) * side
        amp = rng.uniform(0.5, 1.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def synth_dataset(spec):
    """Per class: one blob prototype, then ``per_class`` noisy copies clamped to [0, 1]."""
    rng = np.random.default_rng(spec.seed)
    protos = [_prototype(rng, IMAGE_SIDE).reshape(-1) for _ in range(spec.num_classes)]
    samples = []
    for c, proto in enumerate(protos):
        for j in range(spec.per_class):
            noise = rng.normal(0.0, spec.noise_sigma, size=proto.shape) if spec.noise_sigma > 0 else 0.0
            pixels = np.clip(proto + noise, 0.0, 1.0)
            samples.append(ImageSample(f"c{c:03d}_{j:04d}", pixels, c))
    return samples, np.stack(protos)


# -- pairs and folds --------------------------------------------------------

_ENUMERATE_LIMIT = 2_000_000


def make_pairs(samples, n_same, n_diff, seed):
    """Sample matched and mismatched pairs uniformly without replacement."""
    labels = np.array([s.label for s in samples])
    ids = [s.id for s in samples]
    if any(s.label is None for s in samples):
        raise DataError("make_pairs needs labelled samples")
    rng = np.random.default_rng(seed)
    n = len(samples)

    same = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        a, b = np.triu_indices(len(idx), k=1)
        same.append(np.stack([idx[a], idx[b]], axis=1))
    same = np.concatenate(same) if same else np.empty((0, 2), dtype=np.intp)
    if n_same > len(same):
        raise DataError(f"requested {n_same} matched pairs but only {len(same)} exist")
    same = same[np.sort(rng.choice(len(same), size=n_same, replace=False))]

    counts = np.unique(labels, return_counts=True)[1]
    total_diff = n * (n - 1) // 2 - sum(int(c) * (int(c) - 1) // 2 for c in counts)
    if n_diff > total_diff:
        raise DataError(f"requested {n_diff} mismatched pairs but only {total_diff} exist")
    if total_diff <= _ENUMERATE_LIMIT:
        a, b = np.triu_indices(n, k=1)
        keep = labels[a] != labels[b]
        diff = np.stack([a[keep], b[keep]], axis=1)
        diff = diff[np.sort(rng.choice(len(diff), size=n_diff, replace=False))]
    else:
        chosen = set()
        while len(chosen) < n_diff:
            i, j = rng.integers(0, n, size=2)
            if labels[i] != labels[j]:
                chosen.add((min(i, j), max(i, j)))
        diff = np.array(sorted(chosen), dtype=np.intp).reshape(-1, 2)

    entries = [Pair(ids[i], ids[j], True) for i, j in same]
    entries += [Pair(ids[i], ids[j], False) for i, j in diff]
    return PairList(entries)


def assign_folds(pairs, k=10, seed=0):
    """Stratified split: each fold gets n_same/k matched and n_diff/k mismatched pairs."""
    if k < 1:
        raise ProtocolError("k must be >= 1")
    flags = pairs.same_flags
    n_same = int(flags.sum())
    n_diff = len(flags) - n_same
    if len(flags) % k or n_same % k or n_diff % k:
        raise ProtocolError(
            f"{len(flags)} pairs ({n_same} matched, {n_diff} mismatched) cannot be split evenly into {k} folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(flags), dtype=np.intp)
    for group in (np.flatnonzero(flags), np.flatnonzero(~flags)):
        perm = rng.permutation(group)
        fold_of[perm] = np.arange(len(perm)) // (len(perm) // k) if len(perm) else 0
    return PairList(list(pairs.entries), fold_of)


# -- CSV files --------------------------------------------------------------

PAIR_HEADER = ["id_a", "id_b", "same"]
MANIFEST_HEADER = ["id", "path", "label"]


def write_pairs_csv(path, pairs):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(PAIR_HEADER)
        for p in pairs.entries:
            w.writerow([p.id_a, p.id_b, int(p.same)])


def read_pairs_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != PAIR_HEADER:
        raise DataError(f"{path}: expected header {','.join(PAIR_HEADER)}")
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3 or row[2] not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: malformed pair row {row!r}")
        entries.append(Pair(row[0], row[1], row[2] == "1"))
    return PairList(entries)


def read_lfw_pairs(path):
    """Parse an LFW-style ``pairs.txt``; ids become ``Name_0001`` image stems.

    The optional first line ``<folds> <n>`` sets folds of n matched then n
    mismatched lines each, and fills ``fold_of`` from file order.
    """
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    folds = per = None
    first = lines[0].split() if lines else []
    if len(first) == 2 and all(t.isdigit() for t in first):
        folds, per = map(int, first)
        lines = lines[1:]
    entries = []
    for lineno, line in enumerate(lines, start=2 if folds else 1):
        parts = line.split("\t") if "\t" in line else line.split()
        try:
            if len(parts) == 3:
                name, n1, n2 = parts
                entries.append(Pair(f"{name}_{int(n1):04d}", f"{name}_{int(n2):04d}", True))
            elif len(parts) == 4:
                a, n1, b, n2 = parts
                entries.append(Pair(f"{a}_{int(n1):04d}", f"{b}_{int(n2):04d}", False))
            else:
                raise ValueError
        except ValueError:
            raise DataError(f"{path}:{lineno}: cannot parse pair line {line!r}") from None
    fold_of = None
    if folds:
        if len(entries) != folds * 2 * per:
            raise ProtocolError(f"{path}: header promises {folds}x{2 * per} pairs, found {len(entries)}")
        fold_of = np.arange(len(entries)) // (2 * per)
    return PairList(entries, fold_of)


@dataclass
class ManifestRow:
    id: str
    path: str
    label: Optional[int]


def write_manifest(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in rows:
            w.writerow([r.id, r.path, "" if r.label is None else r.label])


def read_manifest(path):
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8 text ({exc})") from None
    if not rows or rows[0] != MANIFEST_HEADER:
        raise DataError(f"{path}: expected header {','.join(MANIFEST_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        label = None
        if row[2] != "":
            try:
                label = int(row[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad label {row[2]!r}") from None
        out.append(ManifestRow(row[0], row[1], label))
    if not out:
        raise DataError(f"{path}: manifest lists no samples")
    return out


def load_images(manifest_path, side=IMAGE_SIDE):
    """Load every manifest entry (paths relative to the manifest) as ``side``x``side`` vectors.

    Returns ``(ids, pixel matrix, labels)``; labels is None when any is missing.
    """
    rows = read_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    data = np.empty((len(rows), side * side))
    for i, r in enumerate(rows):
        p = r.path if os.path.isabs(r.path) else os.path.join(base, r.path)
        try:
            with open(p, "rb") as f:
                img = decode_pgm(f.read())
        except FileNotFoundError:
            raise DataError(f"image for sample {r.id!r} not found: {p}") from None
        except FormatError as exc:
            raise FormatError(f"sample {r.id!r} ({p}): {exc}") from None
        if img.shape != (side, side):
            img = resize_bilinear(img, side, side)
        data[i] = img.reshape(-1)
    labels = None
    if all(r.label is not None for r in rows):
        labels = np.array([r.label for r in rows], dtype=np.intp)
    return [r.id for r in rows], data, labels
