from collections import Counter

import pytest

from xtaltext.textproc import (
    CLS_ID, MASK_ID, N_RESERVED, PAD_ID, UNK_ID, MaskedSample, TokenSequence,
    Vocab, build_vocab, detokenize, load_vocab, mask_tokens, save_vocab,
    split_text, tokenize,
)


class TestVocab:
    def test_reserved_ids(self):
        v = build_vocab(["a a b"], min_freq=1)
        assert (PAD_ID, CLS_ID, MASK_ID, UNK_ID) == (0, 1, 2, 3)
        assert v.size == 6
        assert v.id_of("a") == 4 and v.id_of("b") == 5

    def test_min_freq_filter(self):
        v = build_vocab(["a a b"], min_freq=2)
        assert "a" in v and "b" not in v
        assert v.size == 5

    def test_frequency_ordering_against_recount(self):
        # Oracle: independent recount of the same corpus.
        docs = [f"tok{i % 7} common filler{i}" for i in range(100)]
        v = build_vocab(docs, min_freq=1, max_size=512)
        assert v.size <= 512 + N_RESERVED
        counts = Counter()
        for d in docs:
            counts.update(split_text(d))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        assert list(v.tokens) == [tok for tok, _ in ranked[:512]]

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            build_vocab([])

    def test_round_trip(self, tmp_path):
        v = build_vocab(["nacl is cubic . li7la3zr2o12"], min_freq=1)
        path = tmp_path / "vocab.txt"
        save_vocab(v, path)
        again = load_vocab(path)
        assert again.tokens == v.tokens


class TestTokenize:
    @pytest.fixture
    def vocab(self):
        return build_vocab(["NaCl is cubic . battery x1y2"], min_freq=1)

    def test_basic_sentence(self, vocab):
        seq = tokenize("NaCl is cubic.", vocab)
        assert seq.ids[0] == CLS_ID
        assert detokenize(seq.ids, vocab) == ["[CLS]", "nacl", "is", "cubic", "."]

    def test_empty_text(self, vocab):
        assert tokenize("", vocab).ids == (CLS_ID,)

    def test_truncation(self, vocab):
        text = " ".join(["cubic"] * 300)
        assert len(tokenize(text, vocab, max_len=128)) == 128

    def test_unknown_maps_to_unk(self, vocab):
        seq = tokenize("quartz", vocab)
        assert seq.ids == (CLS_ID, UNK_ID)

    def test_formula_tokens_intact(self, vocab):
        assert split_text("Li7La3Zr2O12 melts") == ["li7la3zr2o12", "melts"]

    def test_deterministic_and_idempotent_modulo_case(self, vocab):
        seq = tokenize("NaCl IS Cubic.", vocab)
        text = " ".join(detokenize(seq.ids[1:], vocab))
        assert tokenize(text, vocab).ids == seq.ids

    def test_cls_required(self):
        with pytest.raises(ValueError):
            TokenSequence((4, 5))


class TestMaskTokens:
    @pytest.fixture
    def seq(self):
        v = build_vocab(["one two three four five six"], min_freq=1)
        return tokenize("one two three four five six", v)

    def test_keep_all(self, seq):
        m = mask_tokens(seq, p_keep=1.0, seed=0)
        assert m.input_ids == seq.ids
        assert m.mask_positions == ()

    def test_mask_all(self, seq):
        m = mask_tokens(seq, p_keep=0.0, seed=0)
        assert m.mask_positions == tuple(range(1, len(seq)))
        assert all(t == MASK_ID for t in m.input_ids[1:])
        assert m.target_ids == seq.ids[1:]

    def test_cls_never_masked(self, seq):
        for s in range(50):
            m = mask_tokens(seq, p_keep=0.0, seed=s)
            assert m.input_ids[0] == CLS_ID

    def test_unmasked_positions_equal_original(self, seq):
        m = mask_tokens(seq, p_keep=0.5, seed=3)
        for pos in range(1, len(seq)):
            if pos not in m.mask_positions:
                assert m.input_ids[pos] == seq.ids[pos]

    def test_bernoulli_rate(self):
        # Oracle: Monte-Carlo check of the masking rate over 10k positions.
        v = build_vocab(["w"], min_freq=1)
        seq = TokenSequence((CLS_ID,) + (v.id_of("w"),) * 10_000)
        m = mask_tokens(seq, p_keep=0.85, seed=123)
        assert len(m.mask_positions) / 10_000 == pytest.approx(0.15, abs=0.01)

    def test_seed_reproducibility(self, seq):
        a = mask_tokens(seq, p_keep=0.5, seed=9)
        b = mask_tokens(seq, p_keep=0.5, seed=9)
        c = mask_tokens(seq, p_keep=0.5, seed=10)
        assert a == b
        assert a != c

    def test_invalid_p_keep(self, seq):
        with pytest.raises(ValueError):
            mask_tokens(seq, p_keep=1.5, seed=0)

    def test_masked_sample_validation(self):
        with pytest.raises(ValueError):
            MaskedSample((CLS_ID, 5), (5,), (0,))
