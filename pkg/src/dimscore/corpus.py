"""Essay corpora: rubric definitions, CSV ingestion, splits, vocabulary,
and batch construction.

A corpus is a list of essay records scored against a shared rubric. The
on-disk form is UTF-8 CSV with header
`essay_id,full_text,prompt,prompt_id,<dim1>,...,<dimD>`; prompt and
prompt_id may be empty. Corpora are treated as immutable after load.
"""

import csv
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, SchemaError, UsageError

_FIXED_COLUMNS = ("essay_id", "full_text", "prompt", "prompt_id")

_WORD_RE = re.compile(r"[a-z0-9']+|[.!?]")


def word_tokens(text):
    """Lowercased word and sentence-terminator tokens, punctuation dropped."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class RubricSpec:
    """A scoring rubric: named dimensions sharing one ordered band scale."""

    name: str
    dimensions: tuple
    bands: tuple

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        object.__setattr__(self, "bands", tuple(float(b) for b in self.bands))
        if not self.dimensions:
            raise ConfigError("rubric needs at least one dimension")
        if len(set(self.dimensions)) != len(self.dimensions):
            raise ConfigError("rubric dimensions must be unique")
        if len(self.bands) < 2:
            raise ConfigError("rubric needs at least two bands")
        if any(b2 <= b1 for b1, b2 in zip(self.bands, self.bands[1:])):
            raise ConfigError("rubric bands must be strictly increasing")

    @property
    def n_bands(self):
        return len(self.bands)

    def coerce_band(self, value):
        """Snap `value` to a legal band if within 1e-9, else None."""
        for b in self.bands:
            if abs(value - b) <= 1e-9:
                return b
        return None

    def band_index(self, value):
        """Index of the legal band equal to `value` (within 1e-9)."""
        for i, b in enumerate(self.bands):
            if abs(value - b) <= 1e-9:
                return i
        raise DataError(f"{value} is not a legal band of rubric {self.name}")


def ellipse_style():
    """Six analytic dimensions on half-point bands 1.0 to 5.0."""
    return RubricSpec(
        name="ellipse-style",
        dimensions=("cohesion", "syntax", "vocabulary", "phraseology",
                    "grammar", "conventions"),
        bands=tuple(1.0 + 0.5 * i for i in range(9)),
    )


def ielts_style():
    """Four analytic dimensions plus overall on half-point bands 4.0 to 9.0."""
    return RubricSpec(
        name="ielts-style",
        dimensions=("task_achievement", "coherence_cohesion", "vocabulary",
                    "grammar", "overall"),
        bands=tuple(4.0 + 0.5 * i for i in range(11)),
    )


RUBRIC_PRESETS = {"ellipse-style": ellipse_style, "ielts-style": ielts_style}


def parse_rubric_config(path):
    """Read a line-oriented `key = value` rubric file.

    Recognized keys: `name`, `dimensions = a,b,c`, `bands = lo:hi:step`.
    Blank lines and lines starting with `#` are skipped.
    """
    name = "custom"
    dimensions = None
    bands = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "name":
                name = value
            elif key == "dimensions":
                dimensions = tuple(d.strip() for d in value.split(",") if d.strip())
            elif key == "bands":
                parts = value.split(":")
                if len(parts) != 3:
                    raise ConfigError(f"{path}:{lineno}: bands must be lo:hi:step")
                try:
                    lo, hi, step = (float(p) for p in parts)
                except ValueError:
                    raise ConfigError(f"{path}:{lineno}: bands must be numeric") from None
                if step <= 0 or hi < lo:
                    raise ConfigError(f"{path}:{lineno}: bad band range {value}")
                count = int(round((hi - lo) / step)) + 1
                bands = tuple(round(lo + i * step, 9) for i in range(count))
            else:
                raise ConfigError(f"{path}:{lineno}: unknown rubric key {key!r}")
    if dimensions is None or bands is None:
        raise ConfigError(f"{path}: rubric file needs dimensions and bands")
    return RubricSpec(name=name, dimensions=dimensions, bands=bands)


def resolve_rubric(spec):
    """Accept a preset name, a rubric config path, or a RubricSpec."""
    if isinstance(spec, RubricSpec):
        return spec
    if spec in RUBRIC_PRESETS:
        return RUBRIC_PRESETS[spec]()
    return parse_rubric_config(spec)


@dataclass
class EssayRecord:
    id: str
    full_text: str
    scores: dict
    prompt: str = None
    prompt_id: str = None


@dataclass
class Corpus:
    rubric: RubricSpec
    records: list = field(default_factory=list)

    def __post_init__(self):
        if not self.records:
            raise DataError("corpus is empty")
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise DataError(f"duplicate essay id {rec.id!r}")
            seen.add(rec.id)
            for dim in self.rubric.dimensions:
                if dim not in rec.scores:
                    raise DataError(f"essay {rec.id!r} missing score for {dim!r}")

    def __len__(self):
        return len(self.records)

    def ids(self):
        return [rec.id for rec in self.records]


def load_corpus(path, rubric):
    """Load and validate a scored-essay CSV against `rubric`.

    Scores are snapped to the nearest legal band when within 1e-9;
    anything farther is rejected with the offending row number. Extra
    columns are ignored.
    """
    rubric = resolve_rubric(rubric)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header required") from None
        col = {name: i for i, name in enumerate(header)}
        for name in _FIXED_COLUMNS + rubric.dimensions:
            if name not in col:
                raise SchemaError(f"{path}: missing column {name!r}")
        for rowno, row in enumerate(reader, 2):
            if len(row) < len(header):
                raise DataError(f"{path}:{rowno}: expected {len(header)} fields, got {len(row)}")
            essay_id = row[col["essay_id"]]
            if not essay_id:
                raise DataError(f"{path}:{rowno}: empty essay_id")
            scores = {}
            for dim in rubric.dimensions:
                raw = row[col[dim]]
                try:
                    value = float(raw)
                except ValueError:
                    raise DataError(f"{path}:{rowno}: score {raw!r} for {dim!r} is not a number") from None
                band = rubric.coerce_band(value)
                if band is None:
                    raise DataError(f"{path}:{rowno}: score {raw} for {dim!r} is not a legal band")
                scores[dim] = band
            records.append(EssayRecord(
                id=essay_id,
                full_text=row[col["full_text"]],
                prompt=row[col["prompt"]] or None,
                prompt_id=row[col["prompt_id"]] or None,
                scores=scores,
            ))
    return Corpus(rubric=rubric, records=records)


def save_corpus(corpus, path):
    """Write a corpus as CSV; load_corpus(save_corpus(c)) round-trips."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(_FIXED_COLUMNS) + list(corpus.rubric.dimensions))
        for rec in corpus.records:
            writer.writerow(
                [rec.id, rec.full_text, rec.prompt or "", rec.prompt_id or ""]
                + [repr(rec.scores[d]) for d in corpus.rubric.dimensions]
            )


def split(corpus, test_fraction, seed, by_prompt=False):
    """Deterministic train/test partition.

    With by_prompt, records sharing a prompt_id land on the same side
    (the test side may then overshoot the target count slightly).
    """
    if not 0.0 < test_fraction < 1.0:
        raise UsageError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(corpus)
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise UsageError(f"test_fraction {test_fraction} leaves an empty side for {n} records")
    rng = np.random.default_rng(seed)
    if by_prompt:
        groups = {}
        for i, rec in enumerate(corpus.records):
            key = rec.prompt_id if rec.prompt_id is not None else f"\x00solo:{rec.id}"
            groups.setdefault(key, []).append(i)
        keys = sorted(groups)
        order = rng.permutation(len(keys))
        test_idx = []
        for k in order:
            if len(test_idx) >= n_test:
                break
            test_idx.extend(groups[keys[k]])
        test_set = set(test_idx)
        if len(test_set) == n:
            raise UsageError("by_prompt split left the training side empty")
    else:
        perm = rng.permutation(n)
        test_set = set(int(i) for i in perm[:n_test])
    train_recs = [r for i, r in enumerate(corpus.records) if i not in test_set]
    test_recs = [r for i, r in enumerate(corpus.records) if i in test_set]
    return (Corpus(rubric=corpus.rubric, records=train_recs),
            Corpus(rubric=corpus.rubric, records=test_recs))


class Vocab:
    """Token-to-id table with reserved ids 0=PAD, 1=CLS, 2=UNK."""

    PAD = 0
    CLS = 1
    UNK = 2
    _RESERVED = ("<pad>", "<cls>", "<unk>")

    def __init__(self, tokens):
        self.tokens = list(tokens)
        for t in self.tokens:
            if t in self._RESERVED:
                raise UsageError(f"token {t!r} collides with a reserved marker")
        self._ids = {t: i + len(self._RESERVED) for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self._RESERVED) + len(self.tokens)

    def lookup(self, token):
        return self._ids.get(token, self.UNK)

    def token_list(self):
        """Full id-ordered token list including reserved markers."""
        return list(self._RESERVED) + list(self.tokens)


def build_vocab(train, max_size):
    """Frequency-ranked vocabulary from a training corpus.

    Ties break lexicographically; tokens beyond max_size map to UNK.
    Prompt text counts too, since prompts are encoded with the same
    embedding table.
    """
    if max_size < len(Vocab._RESERVED):
        raise UsageError(f"max_size {max_size} cannot hold the reserved ids")
    counts = {}
    for rec in train.records:
        for tok in word_tokens(rec.full_text):
            counts[tok] = counts.get(tok, 0) + 1
        if rec.prompt:
            for tok in word_tokens(rec.prompt):
                counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocab(ranked[: max_size - len(Vocab._RESERVED)])


@dataclass(frozen=True)
class Batch:
    """Record positions for one step; pairs index into `indices`."""

    indices: tuple
    pairs: tuple = ()


def make_batches(corpus, batch_size, seed, pair_by_prompt=False):
    """Deterministic batch plan covering every record exactly once.

    With pair_by_prompt, same-prompt_id records are paired up and packed
    two to a slot so each batch carries as many positive pairs as the
    remaining pool allows; leftovers fill the tail unpaired.
    """
    if batch_size < 1:
        raise UsageError(f"batch_size must be positive, got {batch_size}")
    if pair_by_prompt and batch_size < 2:
        raise UsageError("pair_by_prompt needs batch_size >= 2")
    rng = np.random.default_rng(seed)
    n = len(corpus)
    if not pair_by_prompt:
        order = [int(i) for i in rng.permutation(n)]
        return [Batch(indices=tuple(order[i:i + batch_size]))
                for i in range(0, n, batch_size)]

    groups = {}
    for i, rec in enumerate(corpus.records):
        if rec.prompt_id is not None:
            groups.setdefault(rec.prompt_id, []).append(i)
    pairs = []
    singles = []
    for key in sorted(groups):
        members = groups[key]
        members = [members[j] for j in rng.permutation(len(members))]
        while len(members) >= 2:
            pairs.append((members.pop(), members.pop()))
        singles.extend(members)
    singles.extend(i for i, rec in enumerate(corpus.records) if rec.prompt_id is None)
    if not pairs:
        warnings.warn("pair_by_prompt found no shared prompt_ids; "
                      "contrastive terms will be zero", RuntimeWarning)
    pairs = [pairs[j] for j in rng.permutation(len(pairs))]
    singles = [singles[j] for j in rng.permutation(len(singles))]

    batches = []
    indices = []
    batch_pairs = []
    for a, b in pairs:
        indices.extend((a, b))
        batch_pairs.append((len(indices) - 2, len(indices) - 1))
        if len(indices) + 1 >= batch_size:
            while singles and len(indices) < batch_size:
                indices.append(singles.pop())
            batches.append(Batch(indices=tuple(indices), pairs=tuple(batch_pairs)))
            indices, batch_pairs = [], []
    while singles:
        indices.append(singles.pop())
        if len(indices) == batch_size:
            batches.append(Batch(indices=tuple(indices), pairs=tuple(batch_pairs)))
            indices, batch_pairs = [], []
    if indices:
        batches.append(Batch(indices=tuple(indices), pairs=tuple(batch_pairs)))
    return batches
