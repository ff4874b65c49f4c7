"""
Toy tokenizer and the text-side input layout.

The textual encoder sees M learnable prompt slots followed by the manual
prompt (a handcrafted template with the class name substituted):

    [P]_1 ... [P]_M  a photo of a dog .
"""

import re
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple, Union

from ..errors import TemplateError

CLASS_SLOT = "[cls]"
UNKNOWN = "<unk>"

_TOKEN = re.compile(r"\[cls\]|[a-z0-9_]+|[^\sa-z0-9_]")


def tokenize(text: str) -> List[str]:
    """Lowercase words and single punctuation marks; "[CLS]" stays one token."""
    return _TOKEN.findall(text.lower())


class Vocabulary:
    """
    Deterministic word -> id table.

    Id 0 is reserved for unknown words; the remaining words are sorted so the
    same texts always produce the same ids.
    """

    def __init__(self, words: Iterable[str]):
        unique = sorted(set(words) - {UNKNOWN, CLASS_SLOT})
        self._words = [UNKNOWN] + unique
        self._ids = {w: i for i, w in enumerate(self._words)}

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Vocabulary":
        words = []
        for text in texts:
            words.extend(tokenize(text))
        return cls(words)

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    @property
    def words(self) -> Tuple[str, ...]:
        return tuple(self._words)

    def id_of(self, word: str) -> int:
        return self._ids.get(word, 0)

    def encode(self, text: Union[str, Sequence[str]]) -> List[int]:
        tokens = tokenize(text) if isinstance(text, str) else list(text)
        return [self.id_of(t) for t in tokens]


@dataclass(frozen=True)
class TextInputLayout:
    """
    Token layout of one text input.

    Attributes:
        learnable_slots: Positions 0..M-1 holding prompt vectors
        manual_prompt_tokens: Token ids of the template with the class substituted
        manual_words: The corresponding words
        class_token_position: Sequence index of the first class-name token
        class_token_count: Number of class-name tokens
    """

    learnable_slots: Tuple[int, ...]
    manual_prompt_tokens: Tuple[int, ...]
    manual_words: Tuple[str, ...]
    class_token_position: int
    class_token_count: int

    @property
    def num_prompts(self) -> int:
        return len(self.learnable_slots)

    @property
    def positions(self) -> Tuple[int, ...]:
        """Sequence positions of the manual-prompt tokens (M..M+L-1)."""
        m = self.num_prompts
        return tuple(range(m, m + len(self.manual_prompt_tokens)))

    @property
    def tokens(self) -> Tuple[str, ...]:
        return tuple(f"[P]_{i + 1}" for i in self.learnable_slots) + self.manual_words

    @property
    def length(self) -> int:
        return self.num_prompts + len(self.manual_prompt_tokens)


def assemble_text_input(class_name: str, template: str, bank, vocab: Vocabulary) -> TextInputLayout:
    """
    Lay out learnable slots and the manual prompt for one class.

    Args:
        class_name: Class name, e.g. "dog" or "golden retriever"
        template: Handcrafted template with exactly one "[CLS]" slot
        bank: Textual PromptBank (or None for M = 0)
        vocab: Vocabulary for the manual tokens

    Returns:
        TextInputLayout

    Raises:
        TemplateError: If the template has zero or several class slots
    """
    template_tokens = tokenize(template)
    slots = [i for i, t in enumerate(template_tokens) if t == CLASS_SLOT]
    if len(slots) != 1:
        raise TemplateError(f"template must contain exactly one [CLS] slot, found {len(slots)}: {template!r}")
    class_tokens = tokenize(class_name)
    if not class_tokens:
        raise TemplateError(f"class name has no tokens: {class_name!r}")

    slot = slots[0]
    words = template_tokens[:slot] + class_tokens + template_tokens[slot + 1:]
    m = 0 if bank is None else bank.length
    return TextInputLayout(
        learnable_slots=tuple(range(m)),
        manual_prompt_tokens=tuple(vocab.encode(words)),
        manual_words=tuple(words),
        class_token_position=m + slot,
        class_token_count=len(class_tokens),
    )
