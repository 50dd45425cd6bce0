"""
Token vocabulary.

Ids 0 and 1 are reserved for end-of-sequence and padding. The file format is
one token per line, line index = id.
"""
from core_apps.common.exceptions import FormatError, ValidationFailure

EOS = "<eos>"
PAD = "<pad>"
EOS_ID = 0
PAD_ID = 1

COLORS = ("red", "green", "blue", "yellow", "white", "black")
SIZES = ("small", "large")
DIRECTIONS = (
    "northwest",
    "northeast",
    "southwest",
    "southeast",
    "north",
    "south",
    "east",
    "west",
)
NUMBER_WORDS = ("two", "three", "four", "five", "six", "seven", "eight")
TEMPLATE_WORDS = (
    "the", "box", "is", "next", "to", "far", "from", "across", "room",
    "most", "in", "part", "of", "middle", "stands", "lies", "and", "taller",
    "shorter", "than", "it", "as", "tall", "close", "wall", "corner", "there",
    "are", "boxes", "one", "them",
)


class Vocabulary:
    """
    Bijection between tokens and ids.

    Example:
        >>> vocab = Vocabulary.default()
        >>> vocab.decode(vocab.encode("the red small box"))
        'the red small box'
    """

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:2] != [EOS, PAD]:
            raise ValidationFailure(f"Vocabulary must start with {EOS!r} and {PAD!r}.")
        if len(set(tokens)) != len(tokens):
            raise ValidationFailure("Vocabulary tokens must be unique.")
        self.tokens = tokens
        self.index = {token: idx for idx, token in enumerate(tokens)}

    @classmethod
    def default(cls):
        """Every word the caption templates can produce."""
        return cls([EOS, PAD, *TEMPLATE_WORDS, *COLORS, *SIZES, *DIRECTIONS, *NUMBER_WORDS])

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def encode(self, text, add_eos=True):
        try:
            ids = [self.index[word] for word in text.split()]
        except KeyError as exc:
            raise ValidationFailure(f"Token {exc.args[0]!r} is not in the vocabulary.") from exc
        return ids + [EOS_ID] if add_eos else ids

    def decode(self, ids):
        words = []
        for idx in ids:
            idx = int(idx)
            if idx == EOS_ID:
                break
            if idx == PAD_ID:
                continue
            if not 0 <= idx < len(self.tokens):
                raise ValidationFailure(f"Token id {idx} is outside the vocabulary of {len(self.tokens)}.")
            words.append(self.tokens[idx])
        return " ".join(words)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                tokens = [line.rstrip("\n") for line in fh if line.strip()]
        except OSError as exc:
            raise FormatError(f"Cannot read vocabulary {path}: {exc}") from exc
        try:
            return cls(tokens)
        except ValidationFailure as exc:
            raise FormatError(f"Corrupt vocabulary {path}: {exc}") from exc
