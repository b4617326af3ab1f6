"""Seeded synthetic essay generator with recoverable gold scores.

Every generated essay is exactly 80 word tokens arranged into complete
sentences. Each rubric dimension is driven by one controllable surface
statistic, and the gold band is a documented threshold bucket of that
statistic, so a reader (or test oracle) can recompute every score from
the text alone:

  family 0  connective density      count(connective pool) / 80, higher is better
  family 1  mean sentence length    80 / number of sentences, higher is better
  family 2  body type-token ratio   distinct body words / body words, higher is better
  family 3  collocation density     fixed two-word phrases / 80, higher is better
  family 4  malformed-word density  count(misspelling pool) / 80, lower is better
  family 5  informal-word density   count(informal pool) / 80, lower is better

Dimension j of the rubric is tied to family j (cycling if the rubric is
wider than the family set; cycled dimensions share the realized band).
Five evenly spaced levels of each statistic map to five evenly spaced
bands of the rubric scale. Body words come from five disjoint pools, one
per type-token level, so lexical identity carries the same signal as the
ratio itself.

With prompt_dependent=True, dimension 0 is instead scored by topic tier:
each prompt topic k carries a fixed quality tier (k mod 5), essays embed
six tokens from their own topic's word family (plus two distractors from
another topic), and the gold band is the tier of the dominant family.
"""

import itertools

import numpy as np

from .corpus import Corpus, EssayRecord, RubricSpec, word_tokens
from .errors import UsageError

ESSAY_WORDS = 80
N_LEVELS = 5

CONNECTIVES = ("however", "moreover", "furthermore", "therefore", "consequently",
               "nevertheless", "additionally", "meanwhile", "similarly", "accordingly")

COLLOCATIONS = (("vivid", "imagery"), ("compelling", "argument"),
                ("nuanced", "perspective"), ("coherent", "structure"),
                ("rhetorical", "flourish"), ("critical", "lens"),
                ("thematic", "resonance"), ("persuasive", "appeal"))

MALFORMED = ("teh", "recieve", "definately", "seperate", "occured",
             "untill", "wich", "alot", "becuase", "thier")

INFORMAL = ("gonna", "wanna", "kinda", "sorta", "yeah",
            "stuff", "whatever", "dunno", "gotta", "basically")

# levels of each statistic, indexed by level 0..4
CONNECTIVE_COUNTS = (0, 2, 4, 6, 8)
SENTENCE_COUNTS = (16, 10, 8, 5, 4)          # mean lengths 5, 8, 10, 16, 20
TTR_CENTERS = (0.10, 0.21, 0.33, 0.50, 0.80)
COLLOCATION_COUNTS = (0, 1, 2, 3, 4)
MALFORMED_COUNTS = (8, 6, 4, 2, 0)           # inverse: fewer errors, higher band
INFORMAL_COUNTS = (8, 6, 4, 2, 0)

# bucket thresholds over the realized statistic; strict comparisons, and
# every realizable value lands strictly inside a bucket
CONNECTIVE_EDGES = (0.0125, 0.0375, 0.0625, 0.0875)
SENTENCE_LEN_EDGES = (6.5, 9.0, 13.0, 18.0)
TTR_EDGES = (0.155, 0.27, 0.415, 0.65)
COLLOCATION_EDGES = (0.00625, 0.01875, 0.03125, 0.04375)
MALFORMED_EDGES = (0.0125, 0.0375, 0.0625, 0.0875)
INFORMAL_EDGES = (0.0125, 0.0375, 0.0625, 0.0875)

FAMILY_NAMES = ("connective_density", "mean_sentence_length", "type_token_ratio",
                "collocation_density", "malformed_density", "informal_density")

TOPIC_TOKENS_OWN = 6
TOPIC_TOKENS_DISTRACTOR = 2
_DEFAULT_SENTENCES = 8


def _pseudo_words():
    syllables = [c + v for c in "bdklmnprst" for v in "aeiou"]
    for a, b, c in itertools.product(syllables, syllables, syllables):
        yield a + b + c


_words = _pseudo_words()
BODY_TIERS = tuple(tuple(next(_words) for _ in range(80)) for _ in range(N_LEVELS))
TOPIC_FAMILIES = tuple(tuple(next(_words) for _ in range(4)) for _ in range(10))
del _words

_BODY_LOOKUP = {w: tier for tier, pool in enumerate(BODY_TIERS) for w in pool}
_TOPIC_LOOKUP = {w: k for k, pool in enumerate(TOPIC_FAMILIES) for w in pool}
_COLLOC_FIRST = {a: b for a, b in COLLOCATIONS}
_SPECIALS = (set(CONNECTIVES) | set(MALFORMED) | set(INFORMAL)
             | {w for pair in COLLOCATIONS for w in pair})


def topic_tier(k):
    """Quality tier of prompt topic k in prompt-dependent corpora."""
    return k % N_LEVELS


def _prompt_text(k):
    anchor = TOPIC_FAMILIES[k][0]
    return f"write a short essay about {anchor} for a general reader."


def _level_bands(rubric):
    """Five evenly spaced band values over the rubric scale."""
    k = rubric.n_bands
    idx = [int(round(i * (k - 1) / (N_LEVELS - 1))) for i in range(N_LEVELS)]
    return [rubric.bands[i] for i in idx]


def _bucket_up(stat, edges):
    return sum(stat > e for e in edges)


def _bucket_down(stat, edges):
    return sum(stat < e for e in reversed(edges))


def _families_for(rubric, prompt_dependent):
    names = []
    for j in range(len(rubric.dimensions)):
        if prompt_dependent:
            names.append("topic_tier" if j == 0 else FAMILY_NAMES[(j - 1) % len(FAMILY_NAMES)])
        else:
            names.append(FAMILY_NAMES[j % len(FAMILY_NAMES)])
    return names


def surface_scores(text, rubric, prompt_dependent=False):
    """Recompute every dimension's band from the essay text alone.

    This is the documented statistic-to-band mapping; on generated
    corpora it reproduces the stored gold scores exactly.
    """
    toks = word_tokens(text)
    words = [t for t in toks if t not in (".", "!", "?")]
    n_sent = sum(t in (".", "!", "?") for t in toks)
    total = len(words)
    body = [w for w in words if w in _BODY_LOOKUP]
    colloc = sum(1 for a, b in zip(words, words[1:]) if _COLLOC_FIRST.get(a) == b)
    topic_counts = {}
    for w in words:
        if w in _TOPIC_LOOKUP:
            k = _TOPIC_LOOKUP[w]
            topic_counts[k] = topic_counts.get(k, 0) + 1

    levels = {}
    levels["connective_density"] = _bucket_up(
        sum(w in CONNECTIVES for w in words) / total, CONNECTIVE_EDGES)
    levels["mean_sentence_length"] = _bucket_up(
        total / max(n_sent, 1), SENTENCE_LEN_EDGES)
    levels["type_token_ratio"] = _bucket_up(
        len(set(body)) / max(len(body), 1), TTR_EDGES)
    levels["collocation_density"] = _bucket_up(colloc / total, COLLOCATION_EDGES)
    levels["malformed_density"] = _bucket_down(
        sum(w in MALFORMED for w in words) / total, MALFORMED_EDGES)
    levels["informal_density"] = _bucket_down(
        sum(w in INFORMAL for w in words) / total, INFORMAL_EDGES)
    if topic_counts:
        dominant = max(topic_counts, key=lambda k: (topic_counts[k], -k))
        levels["topic_tier"] = topic_tier(dominant)

    bands = _level_bands(rubric)
    families = _families_for(rubric, prompt_dependent)
    return {dim: bands[levels[fam]] for dim, fam in zip(rubric.dimensions, families)}


def _assemble(rng, levels, topic=None, distractor=None):
    """Build one essay's text from per-family levels; returns text."""
    c_conn = CONNECTIVE_COUNTS[levels.get("connective_density", 0)]
    n_sent = SENTENCE_COUNTS[levels["mean_sentence_length"]] \
        if "mean_sentence_length" in levels else _DEFAULT_SENTENCES
    n_colloc = COLLOCATION_COUNTS[levels.get("collocation_density", 0)]
    c_mal = MALFORMED_COUNTS[levels["malformed_density"]] \
        if "malformed_density" in levels else 0
    c_inf = INFORMAL_COUNTS[levels["informal_density"]] \
        if "informal_density" in levels else 0

    singles = []
    singles += [CONNECTIVES[int(i)] for i in rng.integers(len(CONNECTIVES), size=c_conn)]
    singles += [MALFORMED[int(i)] for i in rng.integers(len(MALFORMED), size=c_mal)]
    singles += [INFORMAL[int(i)] for i in rng.integers(len(INFORMAL), size=c_inf)]
    if topic is not None:
        own = TOPIC_FAMILIES[topic]
        singles += [own[int(i)] for i in rng.integers(len(own), size=TOPIC_TOKENS_OWN)]
        other = TOPIC_FAMILIES[distractor]
        singles += [other[int(i)] for i in rng.integers(len(other), size=TOPIC_TOKENS_DISTRACTOR)]

    n_body = ESSAY_WORDS - len(singles) - 2 * n_colloc
    tier = levels.get("type_token_ratio", 2)
    pool = BODY_TIERS[tier]
    center = TTR_CENTERS[tier] if "type_token_ratio" in levels else 0.4
    n_types = min(max(int(round(center * n_body)), 1), n_body, len(pool))
    picks = rng.choice(len(pool), size=n_types, replace=False)
    types = [pool[int(i)] for i in picks]
    body = list(types)
    body += [types[int(i)] for i in rng.integers(n_types, size=n_body - n_types)]
    singles += body

    sent_len = ESSAY_WORDS // n_sent
    slots = [[None] * sent_len for _ in range(n_sent)]
    for _ in range(n_colloc):
        pair = COLLOCATIONS[int(rng.integers(len(COLLOCATIONS)))]
        while True:
            s = int(rng.integers(n_sent))
            free = [p for p in range(sent_len - 1)
                    if slots[s][p] is None and slots[s][p + 1] is None]
            if free:
                p = free[int(rng.integers(len(free)))]
                slots[s][p], slots[s][p + 1] = pair
                break
    order = rng.permutation(len(singles))
    queue = [singles[int(i)] for i in order]
    for s in range(n_sent):
        for p in range(sent_len):
            if slots[s][p] is None:
                slots[s][p] = queue.pop()
    assert not queue
    return " ".join(" ".join(sent) + "." for sent in slots)


def synth_corpus(n, rubric, seed, prompt_dependent=False, n_topics=8):
    """Generate n scored essays whose gold bands follow the documented
    surface statistics exactly; identical seeds give identical corpora."""
    if n < 10:
        raise UsageError(f"synth_corpus needs n >= 10, got {n}")
    if isinstance(rubric, str):
        from .corpus import resolve_rubric
        rubric = resolve_rubric(rubric)
    if not 1 <= n_topics <= len(TOPIC_FAMILIES):
        raise UsageError(f"n_topics must be in 1..{len(TOPIC_FAMILIES)}")
    if prompt_dependent and n_topics < 2:
        raise UsageError("prompt_dependent corpora need n_topics >= 2")
    rng = np.random.default_rng(seed)
    families = _families_for(rubric, prompt_dependent)
    stat_families = [f for f in dict.fromkeys(families) if f != "topic_tier"]
    records = []
    for i in range(n):
        levels = {fam: int(rng.integers(N_LEVELS)) for fam in stat_families}
        topic = int(rng.integers(n_topics))
        distractor = None
        if prompt_dependent:
            distractor = int((topic + 1 + rng.integers(n_topics - 1)) % n_topics)
        text = _assemble(rng, levels,
                         topic=topic if prompt_dependent else None,
                         distractor=distractor)
        scores = surface_scores(text, rubric, prompt_dependent)
        records.append(EssayRecord(
            id=f"e{i:05d}",
            full_text=text,
            prompt=_prompt_text(topic),
            prompt_id=f"topic-{topic:02d}",
            scores=scores,
        ))
    return Corpus(rubric=rubric, records=records)
