"""Synthetic distant-supervision corpus generator and dataset file format.

Each non-NA relation owns a disjoint block of trigger tokens. A clean
sentence for relation r mentions both entities and carries r's trigger
between them amid random filler; a noisy sentence mentions the entities but
no trigger. Ground-truth labels y are drawn per bag, sentences are built to
honor the requested cleanness regime, and the observed labels z are either a
copy of y (clean-label regimes) or a corrupted version (noisy-label regimes).

Datasets are stored as JSON lines: a header record followed by one record
per bag. Files ending in ``.gz`` are transparently gzip-compressed.
"""

import gzip
import json
from dataclasses import dataclass, field

import numpy as np

from .channel import NoiseChannel, flip_noise
from .data import Bag, DataError, Dataset, Sentence
from .labels import RelationCatalog
from .seeding import make_rng

FORMAT_NAME = "nem-dataset"
FORMAT_VERSION = 1

HEAD_TOKEN = 0
TAIL_TOKEN = 1
FIRST_TRIGGER_TOKEN = 2

REGIMES = ("CSCL", "NSCL", "CSNL", "NSNL")


class CorpusSpecError(ValueError):
    """Invalid generator specification."""


class DatasetFormatError(ValueError):
    """Malformed or incompatible dataset file."""


def default_catalog(n_real: int = 10) -> RelationCatalog:
    names = ("NA",) + tuple(f"R{i + 1}" for i in range(n_real))
    return RelationCatalog(names, na_index=0)


@dataclass
class CorpusSpec:
    catalog: RelationCatalog = field(default_factory=default_catalog)
    vocab_size: int = 500
    n_bags: int = 2000
    sentences_per_bag: tuple[int, int] = (1, 5)
    clean_sentence_fraction: float = 0.7
    labels_per_bag: dict[int, float] = field(default_factory=lambda: {1: 0.7, 2: 0.3})
    trigger_length: tuple[int, int] = (1, 2)
    regime: str = "NSNL"
    corruption: dict | None = None  # None | {"flip": p_f} | {"channel": {...}}
    na_fraction: float = 0.25
    max_len: int = 30
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.regime not in REGIMES:
            raise CorpusSpecError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        max_trig = self.trigger_length[1]
        floor = len(self.catalog) * max_trig + 2
        if self.vocab_size <= floor:
            raise CorpusSpecError(
                f"vocab_size={self.vocab_size} too small: need > |R|*max_trigger+2 = {floor}"
            )
        if not 0 < self.clean_sentence_fraction <= 1:
            raise CorpusSpecError("clean_sentence_fraction must lie in (0, 1]")
        if self.regime in ("CSCL", "CSNL") and self.clean_sentence_fraction != 1.0:
            # clean-sentence regimes force every sentence clean
            self.clean_sentence_fraction = 1.0
        if self.regime in ("CSCL", "NSCL") and self.corruption is not None:
            raise CorpusSpecError(f"regime {self.regime} forbids label corruption")
        if self.n_bags < 1:
            raise CorpusSpecError("n_bags must be positive")
        lo, hi = self.sentences_per_bag
        if not 1 <= lo <= hi:
            raise CorpusSpecError("sentences_per_bag range must satisfy 1 <= lo <= hi")
        lo_t, hi_t = self.trigger_length
        if not 1 <= lo_t <= hi_t:
            raise CorpusSpecError("trigger_length range must satisfy 1 <= lo <= hi")
        if not set(self.labels_per_bag) <= {1, 2}:
            raise CorpusSpecError("labels_per_bag distribution is over {1, 2}")
        if abs(sum(self.labels_per_bag.values()) - 1.0) > 1e-9:
            raise CorpusSpecError("labels_per_bag probabilities must sum to 1")
        if not 0 <= self.na_fraction < 1:
            raise CorpusSpecError("na_fraction must lie in [0, 1)")
        longest = 13 + max(self.trigger_length[1], 3)  # worst-case generated sentence
        if self.max_len < longest:
            raise CorpusSpecError(
                f"max_len={self.max_len} cannot fit generated sentences (need >= {longest})"
            )

    def to_json(self) -> dict:
        return {
            "catalog": self.catalog.to_json(),
            "vocab_size": self.vocab_size,
            "n_bags": self.n_bags,
            "sentences_per_bag": list(self.sentences_per_bag),
            "clean_sentence_fraction": self.clean_sentence_fraction,
            "labels_per_bag": {str(k): v for k, v in self.labels_per_bag.items()},
            "trigger_length": list(self.trigger_length),
            "regime": self.regime,
            "corruption": self.corruption,
            "na_fraction": self.na_fraction,
            "max_len": self.max_len,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusSpec":
        kwargs = dict(obj)
        kwargs["catalog"] = RelationCatalog.from_json(kwargs["catalog"])
        kwargs["sentences_per_bag"] = tuple(kwargs["sentences_per_bag"])
        kwargs["trigger_length"] = tuple(kwargs["trigger_length"])
        kwargs["labels_per_bag"] = {int(k): v for k, v in kwargs["labels_per_bag"].items()}
        return cls(**kwargs)


def assign_triggers(spec: CorpusSpec) -> dict[str, list[int]]:
    """Disjoint trigger token blocks for every non-NA relation."""
    rng = make_rng(spec.seed, "triggers")
    max_trig = spec.trigger_length[1]
    triggers = {}
    for slot, idx in enumerate(spec.catalog.real_indices()):
        length = int(rng.integers(spec.trigger_length[0], spec.trigger_length[1] + 1))
        start = FIRST_TRIGGER_TOKEN + slot * max_trig
        triggers[spec.catalog.names[idx]] = list(range(start, start + length))
    return triggers


def _filler_range(spec: CorpusSpec) -> tuple[int, int]:
    max_trig = spec.trigger_length[1]
    start = FIRST_TRIGGER_TOKEN + (len(spec.catalog) - 1) * max_trig
    return start, spec.vocab_size


def _build_sentence(rng, spec: CorpusSpec, trigger: list[int] | None) -> Sentence:
    """One sentence with both entity markers; trigger between them when given."""
    f_lo, f_hi = _filler_range(spec)

    def filler(k):
        return rng.integers(f_lo, f_hi, size=k).tolist()

    middle = list(trigger) if trigger else filler(int(rng.integers(1, 4)))
    tokens = (
        filler(int(rng.integers(0, 4)))
        + [-1]  # first entity slot
        + filler(int(rng.integers(0, 3)))
        + middle
        + filler(int(rng.integers(0, 3)))
        + [-2]  # second entity slot
        + filler(int(rng.integers(0, 4)))
    )
    first = tokens.index(-1)
    second = tokens.index(-2)
    head_first = bool(rng.random() < 0.5)
    tokens[first] = HEAD_TOKEN if head_first else TAIL_TOKEN
    tokens[second] = TAIL_TOKEN if head_first else HEAD_TOKEN
    head_pos, tail_pos = (first, second) if head_first else (second, first)
    return Sentence(np.asarray(tokens, dtype=np.int64), head_pos, tail_pos)


def _corrupt_real_bits(y: np.ndarray, spec: CorpusSpec, catalog: RelationCatalog, rng) -> np.ndarray:
    """Apply the configured corruption to the non-NA bits and rederive NA."""
    z = y.astype(np.uint8).copy()
    real = catalog.real_indices()
    corruption = spec.corruption or {}
    if "flip" in corruption:
        z[real] = flip_noise(y[real], float(corruption["flip"]), rng)
    elif "channel" in corruption:
        ch = NoiseChannel.from_config(corruption["channel"], catalog.na_index, len(catalog))
        full = ch.sample(y, rng)
        z[real] = full[real]
    elif corruption:
        raise CorpusSpecError(f"unknown corruption spec: {corruption!r}")
    # NA stays coherent: set exactly when no real relation is observed
    z[catalog.na_index] = 1 if int(z[real].sum()) == 0 else 0
    return z


def generate(spec: CorpusSpec) -> Dataset:
    """Build a synthetic corpus; a pure function of the CorpusSpec."""
    spec.validate()
    catalog = spec.catalog
    triggers = assign_triggers(spec)
    real = catalog.real_indices()
    label_counts = sorted(spec.labels_per_bag)
    label_probs = [spec.labels_per_bag[k] for k in label_counts]
    force_clean = spec.regime in ("CSCL", "CSNL")
    corrupt_labels = spec.regime in ("CSNL", "NSNL")

    bags = []
    n_clean_sentences = 0
    n_noisy_sentences = 0
    for i in range(spec.n_bags):
        rng = make_rng(spec.seed, "bag", i)
        y = np.zeros(len(catalog), dtype=np.uint8)
        if rng.random() < spec.na_fraction:
            chosen: list[int] = []
            y[catalog.na_index] = 1
        else:
            k = int(rng.choice(label_counts, p=label_probs))
            chosen = sorted(rng.choice(real, size=min(k, len(real)), replace=False).tolist())
            y[chosen] = 1

        n_sent = int(rng.integers(spec.sentences_per_bag[0], spec.sentences_per_bag[1] + 1))
        n_sent = max(n_sent, len(chosen))  # every true label gets a supporting sentence
        if not chosen:
            n_clean = 0  # NA bags carry no triggers at all
        elif force_clean:
            n_clean = n_sent
        else:
            drawn = int(rng.binomial(n_sent, spec.clean_sentence_fraction))
            n_clean = max(len(chosen), drawn)

        sentence_labels: list[int | None] = []
        for j in range(n_sent):
            if j < len(chosen):
                sentence_labels.append(chosen[j])
            elif j < n_clean:
                sentence_labels.append(int(rng.choice(chosen)))
            else:
                sentence_labels.append(None)
        sentence_labels = [sentence_labels[j] for j in rng.permutation(n_sent)]

        sentences = []
        for lab in sentence_labels:
            trig = triggers[catalog.names[lab]] if lab is not None else None
            sentences.append(_build_sentence(rng, spec, trig))
            if lab is None:
                n_noisy_sentences += 1
            else:
                n_clean_sentences += 1

        z = _corrupt_real_bits(y, spec, catalog, rng) if corrupt_labels else y.copy()
        bags.append(
            Bag(
                id=f"b{i:06d}",
                head=f"e{2 * i}",
                tail=f"e{2 * i + 1}",
                sentences=tuple(sentences),
                observed=z,
                truth=y,
            )
        )

    meta = {
        "spec": spec.to_json(),
        "triggers": triggers,
        "n_clean_sentences": n_clean_sentences,
        "n_noisy_sentences": n_noisy_sentences,
    }
    return Dataset(catalog=catalog, bags=bags, meta=meta)


def apply_flip_noise(dataset: Dataset, p_f: float, seed: int) -> Dataset:
    """Re-corrupt a corpus from its ground truth with fresh flip noise."""
    if not dataset.has_truth:
        raise DataError("flip re-corruption needs ground-truth labels")
    catalog = dataset.catalog
    real = catalog.real_indices()
    bags = []
    for i, bag in enumerate(dataset.bags):
        rng = make_rng(seed, "flip", i)
        z = bag.truth.copy()
        z[real] = flip_noise(bag.truth[real], p_f, rng)
        z[catalog.na_index] = 1 if int(z[real].sum()) == 0 else 0
        bags.append(Bag(bag.id, bag.head, bag.tail, bag.sentences, z, bag.truth))
    meta = dict(dataset.meta)
    meta["recorrupted"] = {"flip": p_f, "seed": seed}
    return Dataset(catalog=catalog, bags=bags, meta=meta)


# ---------------------------------------------------------------------------
# file format


def _open(path, mode):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def save_dataset(dataset: Dataset, path) -> None:
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "catalog": dataset.catalog.to_json(),
        "catalog_hash": dataset.catalog.digest(),
        "meta": dataset.meta,
    }
    with _open(path, "w") as fh:
        fh.write(_dumps(header) + "\n")
        for bag in dataset.bags:
            rec = {
                "id": bag.id,
                "head": bag.head,
                "tail": bag.tail,
                "sentences": [
                    {
                        "tokens": s.tokens.tolist(),
                        "head_pos": s.head_pos,
                        "tail_pos": s.tail_pos,
                    }
                    for s in bag.sentences
                ],
                "z": np.flatnonzero(bag.observed).tolist(),
            }
            if bag.truth is not None:
                rec["y"] = np.flatnonzero(bag.truth).tolist()
            fh.write(_dumps(rec) + "\n")


def _indices_to_bits(indices, n_rel: int, line_no: int, bag_id: str) -> np.ndarray:
    bits = np.zeros(n_rel, dtype=np.uint8)
    for idx in indices:
        if not 0 <= int(idx) < n_rel:
            raise DatasetFormatError(
                f"line {line_no}: bag {bag_id}: relation index {idx} out of range"
            )
        bits[int(idx)] = 1
    return bits


def load_dataset(path) -> Dataset:
    """Load and validate a dataset file; errors name the offending line."""
    try:
        with _open(path, "r") as fh:
            lines = fh.read().splitlines()
    except (OSError, EOFError) as exc:
        raise DatasetFormatError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")

    def parse(line_no: int, text: str) -> dict:
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"line {line_no}: malformed record: {exc}") from exc

    header = parse(1, lines[0])
    if header.get("format") != FORMAT_NAME:
        raise DatasetFormatError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {header.get('version')!r}")
    catalog = RelationCatalog.from_json(header["catalog"])
    if header.get("catalog_hash") != catalog.digest():
        raise DatasetFormatError(f"{path}: catalog hash mismatch")
    n_rel = len(catalog)

    spec_echo = (header.get("meta") or {}).get("spec") or {}
    vocab_size = spec_echo.get("vocab_size")
    max_len = spec_echo.get("max_len")

    bags = []
    for line_no, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        rec = parse(line_no, text)
        bag_id = rec.get("id", f"<line {line_no}>")
        try:
            sentences = tuple(
                Sentence(
                    np.asarray(s["tokens"], dtype=np.int64),
                    int(s["head_pos"]),
                    int(s["tail_pos"]),
                )
                for s in rec["sentences"]
            )
            truth = rec.get("y")
            bag = Bag(
                id=str(rec["id"]),
                head=str(rec["head"]),
                tail=str(rec["tail"]),
                sentences=sentences,
                observed=_indices_to_bits(rec["z"], n_rel, line_no, bag_id),
                truth=None if truth is None else _indices_to_bits(truth, n_rel, line_no, bag_id),
            )
        except KeyError as exc:
            raise DatasetFormatError(f"line {line_no}: bag {bag_id}: missing field {exc}") from exc
        except DataError as exc:
            raise DatasetFormatError(f"line {line_no}: bag {bag_id}: {exc}") from exc
        bags.append(bag)

    dataset = Dataset(catalog=catalog, bags=bags, meta=header.get("meta") or {})
    try:
        dataset.validate(vocab_size=vocab_size, max_len=max_len)
    except DataError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc
    return dataset


def corpus_stats(dataset: Dataset) -> dict:
    """Label bookkeeping: per-relation counts plus correct/wrong/missing totals."""
    catalog = dataset.catalog
    n_rel = len(catalog)
    z = dataset.observed_matrix()
    y = dataset.truth_matrix()
    stats: dict = {
        "n_bags": len(dataset),
        "n_sentences": int(sum(len(b.sentences) for b in dataset.bags)),
        "observed_label_counts": {
            catalog.names[r]: int(z[:, r].sum()) for r in range(n_rel)
        },
    }
    if y is not None:
        both = (z == 1) & (y == 1)
        wrong = (z == 1) & (y == 0)
        missing = (z == 0) & (y == 1)
        real = catalog.real_indices()
        stats["truth_label_counts"] = {
            catalog.names[r]: int(y[:, r].sum()) for r in range(n_rel)
        }
        stats["correct"] = int(both.sum())
        stats["wrong"] = int(wrong.sum())
        stats["missing"] = int(missing.sum())
        stats["correct_real"] = int(both[:, real].sum())
        stats["wrong_real"] = int(wrong[:, real].sum())
        stats["missing_real"] = int(missing[:, real].sum())
    triggers = dataset.meta.get("triggers")
    if triggers:
        trigger_tokens = {t for toks in triggers.values() for t in toks}
        without = sum(
            1
            for b in dataset.bags
            for s in b.sentences
            if not trigger_tokens.intersection(s.tokens.tolist())
        )
        stats["sentences_without_trigger"] = int(without)
    return stats
