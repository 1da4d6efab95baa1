"""Vocabulary, one-hot sentence codec and compositional train/test splits."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SILENCE = 0
VERBS = ("watch", "be_near", "touch_the_top", "push_forward", "push_left", "push_right")
COLORS = ("red", "green", "blue", "cyan", "magenta", "yellow")
SHAPES = ("pillar", "pole", "dumbbell", "cone", "hourglass")

TOKENS = ("silence",) + VERBS + COLORS + SHAPES
VOCAB_SIZE = len(TOKENS)  # 18
VERB_OFFSET = 1
COLOR_OFFSET = 1 + len(VERBS)
SHAPE_OFFSET = 1 + len(VERBS) + len(COLORS)
TOKEN_INDEX = {name: i for i, name in enumerate(TOKENS)}


class InvalidSentence(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Sentence:
    verb: int
    adjective: int
    noun: int

    def __post_init__(self):
        if not VERB_OFFSET <= self.verb < COLOR_OFFSET:
            raise InvalidSentence(f"verb index {self.verb} out of range 1..6")
        if not COLOR_OFFSET <= self.adjective < SHAPE_OFFSET:
            raise InvalidSentence(f"adjective index {self.adjective} out of range 7..12")
        if not SHAPE_OFFSET <= self.noun < VOCAB_SIZE:
            raise InvalidSentence(f"noun index {self.noun} out of range 13..17")

    @classmethod
    def from_words(cls, verb: str, color: str, shape: str) -> "Sentence":
        try:
            return cls(TOKEN_INDEX[verb], TOKEN_INDEX[color], TOKEN_INDEX[shape])
        except KeyError as exc:
            raise InvalidSentence(f"unknown word {exc.args[0]!r}") from None

    @classmethod
    def parse(cls, text: str) -> "Sentence":
        """Parse ``"watch red pillar"`` or ``"watch|red|pillar"``.

        Multi-word verbs may be written with spaces or underscores.
        """
        if "|" in text:
            parts = [p.strip() for p in text.split("|")]
        else:
            words = text.strip().lower().split()
            if len(words) < 3:
                raise InvalidSentence(f"cannot parse sentence {text!r}")
            parts = ["_".join(words[:-2]), words[-2], words[-1]]
        if len(parts) != 3:
            raise InvalidSentence(f"cannot parse sentence {text!r}")
        return cls.from_words(*[p.lower().replace(" ", "_") for p in parts])

    @property
    def action(self) -> str:
        return TOKENS[self.verb]

    @property
    def color(self) -> str:
        return TOKENS[self.adjective]

    @property
    def shape(self) -> str:
        return TOKENS[self.noun]

    @property
    def indexes(self) -> tuple[int, int, int]:
        return (self.verb, self.adjective, self.noun)

    def __str__(self) -> str:
        return f"{self.action}|{self.color}|{self.shape}"


@dataclass(frozen=True)
class ScaleConfig:
    """Active vocabulary: the first ``n_*`` words of each canonical list."""

    name: str
    n_verbs: int
    n_colors: int
    n_shapes: int

    def __post_init__(self):
        if not (1 <= self.n_verbs <= len(VERBS) and 1 <= self.n_colors <= len(COLORS)
                and 1 <= self.n_shapes <= len(SHAPES)):
            raise ValueError(f"invalid scale {self}")

    @property
    def verbs(self) -> tuple[int, ...]:
        return tuple(range(VERB_OFFSET, VERB_OFFSET + self.n_verbs))

    @property
    def colors(self) -> tuple[int, ...]:
        return tuple(range(COLOR_OFFSET, COLOR_OFFSET + self.n_colors))

    @property
    def shapes(self) -> tuple[int, ...]:
        return tuple(range(SHAPE_OFFSET, SHAPE_OFFSET + self.n_shapes))

    def all_sentences(self) -> list[Sentence]:
        return [Sentence(v, c, s) for v, c, s in itertools.product(self.verbs, self.colors, self.shapes)]

    def contains(self, sentence: Sentence) -> bool:
        return (sentence.verb in self.verbs and sentence.adjective in self.colors
                and sentence.noun in self.shapes)

    def validate(self, sentence: Sentence) -> None:
        if not self.contains(sentence):
            raise InvalidSentence(f"sentence {sentence} not in vocabulary of scale {self.name!r}")


SCALES = {
    "full": ScaleConfig("full", 6, 6, 5),
    "middle": ScaleConfig("middle", 5, 5, 4),
    "small": ScaleConfig("small", 4, 4, 3),
    # restricted task used by the smoke experiment: {watch, be near} x 2 colors x 2 shapes
    "smoke": ScaleConfig("smoke", 2, 2, 2),
}


def get_scale(name: str | ScaleConfig) -> ScaleConfig:
    if isinstance(name, ScaleConfig):
        return name
    try:
        return SCALES[name]
    except KeyError:
        raise ValueError(f"unknown scale {name!r}; choose from {sorted(SCALES)}") from None


def encode_sentence(sentence: Sentence) -> np.ndarray:
    rows = np.zeros((3, VOCAB_SIZE), dtype=np.float32)
    rows[np.arange(3), list(sentence.indexes)] = 1.0
    return rows


def silence() -> np.ndarray:
    row = np.zeros((1, VOCAB_SIZE), dtype=np.float32)
    row[0, SILENCE] = 1.0
    return row


def decode(rows: np.ndarray) -> Sentence | None:
    """Inverse of :func:`encode_sentence`; ``None`` for a silence utterance."""
    idx = np.asarray(rows).argmax(axis=-1)
    if idx[0] == SILENCE:
        return None
    return Sentence(*(int(i) for i in idx[:3]))


def feedback_sentence(event) -> np.ndarray:
    """Tutor feedback for an event (anything with ``action``, ``color``, ``shape``)."""
    if event is None:
        return silence()
    return encode_sentence(Sentence.from_words(event.action, event.color, event.shape))


def pad_voice(rows: np.ndarray, length: int = 3) -> tuple[np.ndarray, int]:
    """Pad a voice utterance with silence rows to a fixed length; returns (rows, n_real)."""
    n = rows.shape[0]
    out = np.zeros((length, VOCAB_SIZE), dtype=np.float32)
    out[:, SILENCE] = 1.0
    out[:n] = rows
    return out, n


@dataclass(frozen=True)
class Split:
    scale: ScaleConfig
    seed: int
    train: tuple[Sentence, ...]
    test: tuple[Sentence, ...]


def _covers(train, scale: ScaleConfig) -> bool:
    return ({s.verb for s in train} == set(scale.verbs)
            and {s.adjective for s in train} == set(scale.colors)
            and {s.noun for s in train} == set(scale.shapes))


def generate_split(scale: str | ScaleConfig, seed: int, max_tries: int = 10_000) -> Split:
    """One third of all compositions for training, the rest held out.

    Resamples until every active word appears in at least one training sentence.
    """
    scale = get_scale(scale)
    sentences = scale.all_sentences()
    n_train = round(len(sentences) / 3)
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        pick = rng.permutation(len(sentences))[:n_train]
        train = sorted(sentences[i] for i in pick)
        if _covers(train, scale):
            chosen = set(train)
            test = [s for s in sentences if s not in chosen]
            return Split(scale, seed, tuple(train), tuple(test))
    raise RuntimeError(f"no covering split found for scale {scale.name!r}")


def save_split(split: Split, path: str | Path) -> None:
    lines = [f"# scale={split.scale.name} verbs={split.scale.n_verbs} colors={split.scale.n_colors} "
             f"shapes={split.scale.n_shapes} seed={split.seed}", "[train]"]
    lines += [str(s) for s in split.train]
    lines.append("[test]")
    lines += [str(s) for s in split.test]
    Path(path).write_text("\n".join(lines) + "\n")


def load_split(path: str | Path) -> Split:
    header, *body = Path(path).read_text().splitlines()
    fields = dict(kv.split("=") for kv in header.lstrip("# ").split())
    scale = ScaleConfig(fields["scale"], int(fields["verbs"]), int(fields["colors"]), int(fields["shapes"]))
    sections: dict[str, list[Sentence]] = {"train": [], "test": []}
    current = None
    for line in body:
        line = line.strip()
        if not line:
            continue
        if line.startswith("["):
            current = line.strip("[]")
            continue
        sections[current].append(Sentence.parse(line))
    return Split(scale, int(fields["seed"]), tuple(sections["train"]), tuple(sections["test"]))
