"""Tests for prompt banks, insertion, text layout and bank files."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from dprompt.errors import BankFormatError, ConfigError, PromptStateError, TemplateError
from dprompt.numerics import RngStream, Tensor2D
from dprompt.prompting import (
    FlowPolicy, InitScheme, PromptBank, Vocabulary, assemble_text_input, build_bank,
    count_parameters, dumps_bank, format_thousands, insert_prompts, load_bank, loads_bank,
    save_bank, tokenize,
)


def zero_bank(modality, depth, length, dim, flow="discard"):
    return PromptBank(modality, depth, length, dim, [np.zeros((length, dim))] * depth, flow)


class TestAccounting:
    def test_bank_counts(self, rng):
        assert build_bank("visual", 9, 8, 768, InitScheme(), rng, 12).parameter_count == 55296
        assert build_bank("textual", 9, 4, 512, InitScheme(), rng, 12).parameter_count == 18432

    @pytest.mark.parametrize("visual,textual,total,rounded", [
        ((9, 8, 768), (9, 4, 512), 73728, "72K"),
        ((4, 8, 768), (4, 4, 512), 32768, "32K"),
        ((9, 4, 768), (9, 2, 512), 36864, "36K"),
    ])
    def test_presets(self, visual, textual, total, rounded):
        count = count_parameters([zero_bank("visual", *visual), zero_bank("textual", *textual), None])
        assert count == total
        assert format_thousands(count) == rounded

    def test_fractional_thousands(self):
        assert format_thousands(1536) == "1.5K"


class TestBuildBank:
    @pytest.mark.parametrize("depth,length", [(0, 4), (2, 0)])
    def test_rejects_empty(self, rng, depth, length):
        with pytest.raises(ConfigError):
            build_bank("visual", depth, length, 8, InitScheme(), rng, 4)

    def test_depth_beyond_encoder(self, rng):
        with pytest.raises(ConfigError):
            build_bank("visual", 5, 2, 8, InitScheme(), rng, 4)

    def test_fixed_seed_reproduces(self):
        a = build_bank("visual", 3, 2, 8, InitScheme(), RngStream(4), 4)
        b = build_bank("visual", 3, 2, 8, InitScheme(), RngStream(4), 4)
        for pa, pb in zip(a.prompts, b.prompts):
            assert_array_equal(pa, pb)

    def test_textual_phrase_init(self, rng):
        phrase = np.arange(32.0).reshape(4, 8)
        short = build_bank("textual", 2, 2, 8, InitScheme(), rng, 4, phrase_embedder=lambda _: phrase)
        assert_array_equal(short.prompts[0], phrase[:2])
        long = build_bank("textual", 2, 6, 8, InitScheme(), rng, 4, phrase_embedder=lambda _: phrase)
        assert_array_equal(long.prompts[0][:4], phrase)
        assert np.abs(long.prompts[0][4:]).max() < 0.2
        assert not np.array_equal(long.prompts[1][:4], phrase)

    def test_textual_std(self):
        bank = build_bank("textual", 1, 64, 64, InitScheme(textual_first_layer_phrase=None), RngStream(2), 1)
        assert abs(bank.prompts[0].std() - 0.02) < 0.002

    def test_assign_validates_shape(self, rng):
        bank = build_bank("visual", 1, 2, 8, InitScheme(), rng, 1)
        with pytest.raises(ValueError):
            bank.assign([np.zeros((3, 8))])


class TestInsertPrompts:
    def setup_method(self):
        self.x = Tensor2D(np.ones((3, 4)))
        self.carried = Tensor2D(np.full((2, 4), 7.0))

    def test_fresh_prompts_within_depth(self):
        bank = zero_bank("visual", 2, 2, 4)
        x, p = insert_prompts(2, self.x, self.carried, bank)
        assert x is self.x
        assert_array_equal(p.value, np.zeros((2, 4)))

    def test_discard_beyond_depth(self):
        _, p = insert_prompts(3, self.x, self.carried, zero_bank("visual", 2, 2, 4))
        assert p is None

    def test_propagate_beyond_depth(self):
        bank = zero_bank("visual", 2, 2, 4, flow="propagate")
        _, p = insert_prompts(3, self.x, self.carried, bank)
        assert p is self.carried
        with pytest.raises(PromptStateError):
            insert_prompts(3, self.x, None, bank)

    def test_invalid_layer_and_no_bank(self):
        with pytest.raises(ConfigError):
            insert_prompts(0, self.x, None, zero_bank("visual", 1, 1, 4))
        assert insert_prompts(1, self.x, None, None) == (self.x, None)

    def test_bound_bank(self, rng):
        bank = build_bank("visual", 1, 2, 4, InitScheme(), rng, 1)
        _, p = insert_prompts(1, self.x, None, bank.bind())
        assert_array_equal(p.value, bank.prompts[0])


class TestTextLayout:
    def setup_method(self):
        self.vocab = Vocabulary.from_texts(["a photo of a [CLS].", "dog"])

    def test_layout(self):
        layout = assemble_text_input("dog", "a photo of a [CLS]", zero_bank("textual", 1, 4, 8), self.vocab)
        assert layout.tokens == ("[P]_1", "[P]_2", "[P]_3", "[P]_4", "a", "photo", "of", "a", "dog")
        assert layout.learnable_slots == (0, 1, 2, 3)
        assert layout.positions == (4, 5, 6, 7, 8)
        assert layout.class_token_position == 8
        assert layout.manual_prompt_tokens == tuple(self.vocab.encode("a photo of a dog"))

    def test_without_bank(self):
        layout = assemble_text_input("dog", "a photo of a [CLS].", None, self.vocab)
        assert layout.learnable_slots == ()
        assert layout.class_token_position == 4
        assert layout.manual_words[-1] == "."

    @pytest.mark.parametrize("template", ["a photo", "[CLS] and [CLS]"])
    def test_slot_count(self, template):
        with pytest.raises(TemplateError):
            assemble_text_input("dog", template, None, self.vocab)

    def test_tokenizer_and_vocabulary(self):
        assert tokenize("A photo of a [CLS], a type of pet.") == [
            "a", "photo", "of", "a", "[cls]", ",", "a", "type", "of", "pet", "."]
        assert self.vocab.id_of("zebra") == 0
        assert Vocabulary.from_texts(["b a", "c"]).words == Vocabulary.from_texts(["c a b"]).words


class TestSerialization:
    def test_round_trip_is_bit_exact(self, rng, tmp_path):
        bank = build_bank("textual", 3, 2, 5, InitScheme(), rng, 4, flow_policy="propagate")
        loaded = load_bank(save_bank(bank, tmp_path / "banks" / "textual.dpb"))
        assert (loaded.modality, loaded.flow_policy) == (bank.modality, FlowPolicy.PROPAGATE)
        for a, b in zip(bank.prompts, loaded.prompts):
            assert_array_equal(a, b)

    def test_corruption_is_detected(self, rng):
        blob = bytearray(dumps_bank(build_bank("visual", 1, 2, 3, InitScheme(), rng, 1)))
        flipped = bytearray(blob)
        flipped[-1] ^= 0xFF
        with pytest.raises(BankFormatError):
            loads_bank(bytes(flipped))
        with pytest.raises(BankFormatError):
            loads_bank(b"XXXX" + bytes(blob[4:]))
        with pytest.raises(BankFormatError):
            loads_bank(bytes(blob[:-8]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(BankFormatError):
            load_bank(tmp_path / "nope.dpb")
