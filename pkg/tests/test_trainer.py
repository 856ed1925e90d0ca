import math

import numpy as np
import pytest
import torch

from xtaltext.augment import AugmentConfig
from xtaltext.datasynth import SynthConfig, gen_dataset
from xtaltext.encoders import GraphEncoderConfig, build_model
from xtaltext.objective import (
    LossWeights, inter_modal_loss, intra_modal_loss, mlm_loss, total_loss,
)
from xtaltext.structures import FeaturizerConfig
from xtaltext.textproc import build_vocab
from xtaltext.trainer import (
    Checkpoint, CheckpointError, ModelConfig, TrainConfig, derive_seed,
    evaluate_mlm_loss, forward_losses, load_checkpoint, make_batch,
    make_optimizer, mlm_warmup, prepare_pairs, save_checkpoint, split_dataset,
    train, train_step,
)

torch.set_num_threads(1)

TINY_MODEL_CFG = ModelConfig(
    graph=GraphEncoderConfig(node_dim=8, n_layers=1),
    text_layers=1, text_heads=2, text_hidden=8, max_len=64,
    featurizer=FeaturizerConfig(cutoff=5.0, max_neighbors=6, k_rbf=6),
    d_joint=8,
)


@pytest.fixture(scope="module")
def tiny_data():
    records = gen_dataset(SynthConfig(n_pairs=16, seed=3))
    vocab = build_vocab([r.text for r in records], min_freq=1)
    pairs = prepare_pairs(records, vocab, TINY_MODEL_CFG)
    return records, vocab, pairs


def tiny_model(vocab, seed=0):
    return build_model(
        TINY_MODEL_CFG.graph, TINY_MODEL_CFG.text_config(vocab.size),
        edge_dim=TINY_MODEL_CFG.featurizer.k_rbf, d_joint=TINY_MODEL_CFG.d_joint, seed=seed)


def zero_discriminators(model):
    with torch.no_grad():
        for disc in (model.disc_inter, model.disc_graph, model.disc_text):
            for p in disc.parameters():
                p.zero_()


class TestSplitDataset:
    def test_100_pairs(self):
        train_s, val_s, test_s = split_dataset(list(range(100)), (0.8, 0.1, 0.1), seed=0)
        assert (len(train_s), len(val_s), len(test_s)) == (80, 10, 10)

    def test_remainder_to_train(self):
        train_s, val_s, test_s = split_dataset(list(range(11)), (0.8, 0.1, 0.1), seed=0)
        assert (len(train_s), len(val_s), len(test_s)) == (9, 1, 1)

    def test_deterministic(self):
        a = split_dataset(list(range(50)), seed=4)
        b = split_dataset(list(range(50)), seed=4)
        assert a == b
        c = split_dataset(list(range(50)), seed=5)
        assert a != c

    def test_disjoint_and_exhaustive(self):
        parts = split_dataset(list(range(97)), seed=1)
        merged = [x for part in parts for x in part]
        assert sorted(merged) == list(range(97))
        assert len(set(merged)) == 97

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            split_dataset([], seed=0)

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            split_dataset([1, 2], (0.5, 0.5, 0.5), seed=0)


class TestDeriveSeed:
    def test_no_collisions_in_a_million_draws(self):
        seen = set()
        for step in range(1000):
            for idx in range(125):
                for role in range(8):
                    seen.add(derive_seed(7, "train", step, idx, role))
        assert len(seen) == 1000 * 125 * 8

    def test_stable(self):
        assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
        assert derive_seed(1, "a", 2) != derive_seed(2, "a", 2)


class TestMakeBatch:
    def test_identity_augmentation(self, tiny_data):
        _, _, pairs = tiny_data
        cfg = TrainConfig(batch_size=4, steps=1, seed=0,
                          augment=AugmentConfig(op_weights=(0, 0, 0, 1)), p_keep=1.0)
        batch = make_batch(pairs[:4], cfg, step=1)
        np.testing.assert_array_equal(batch.graphs.elements, batch.graphs_aug1.elements)
        np.testing.assert_array_equal(batch.graphs_aug1.edge_src, batch.graphs_aug2.edge_src)
        assert batch.text_ids == batch.text_aug1 == batch.text_aug2
        assert batch.mlm_positions == []

    def test_bit_identical_given_seeds(self, tiny_data):
        _, _, pairs = tiny_data
        cfg = TrainConfig(batch_size=4, steps=1, seed=9)
        a = make_batch(pairs[:4], cfg, step=3)
        b = make_batch(pairs[:4], cfg, step=3)
        np.testing.assert_array_equal(a.graphs_aug1.edge_features, b.graphs_aug1.edge_features)
        assert a.text_aug1 == b.text_aug1 and a.mlm_positions == b.mlm_positions

    def test_views_differ(self, tiny_data):
        _, _, pairs = tiny_data
        cfg = TrainConfig(batch_size=8, steps=1, seed=2, p_keep=0.5)
        batch = make_batch(pairs[:8], cfg, step=1)
        assert batch.text_aug1 != batch.text_aug2

    def test_independent_mlm_mask_flag(self, tiny_data):
        _, _, pairs = tiny_data
        cfg = TrainConfig(batch_size=4, steps=1, seed=2, p_keep=0.5, mlm_on_augmented=False)
        batch = make_batch(pairs[:4], cfg, step=1)
        assert batch.mlm_view_ids is not None
        assert batch.mlm_view_ids != batch.text_aug1


class TestForwardLosses:
    def test_zero_discriminators_no_masks(self, tiny_data):
        _, vocab, pairs = tiny_data
        model = tiny_model(vocab)
        zero_discriminators(model)
        cfg = TrainConfig(batch_size=4, steps=1, seed=0, p_keep=1.0)
        total, breakdown = forward_losses(model, make_batch(pairs[:4], cfg, step=1), cfg)
        assert breakdown.inter_modal == pytest.approx(2 * math.log(2), abs=1e-9)
        assert breakdown.intra_graph == pytest.approx(2 * math.log(2), abs=1e-9)
        assert breakdown.intra_text == pytest.approx(2 * math.log(2), abs=1e-9)
        assert breakdown.mlm == 0.0
        assert total.item() == pytest.approx(6 * math.log(2), abs=1e-9)

    def test_matches_component_ops(self, tiny_data):
        # Compositional oracle: the orchestrated breakdown equals the sum of
        # independently invoked component operations.
        _, vocab, pairs = tiny_data
        model = tiny_model(vocab, seed=5)
        cfg = TrainConfig(batch_size=4, steps=1, seed=1, p_keep=0.7)
        batch = make_batch(pairs[:4], cfg, step=2)
        total, breakdown = forward_losses(model, batch, cfg)

        with torch.no_grad():
            zg = model.project_graph(model.encode_graphs(batch.graphs))
            zg1 = model.project_graph(model.encode_graphs(batch.graphs_aug1))
            zg2 = model.project_graph(model.encode_graphs(batch.graphs_aug2))
            _, p0, _ = model.encode_tokens(batch.text_ids)
            h1, p1, _ = model.encode_tokens(batch.text_aug1)
            _, p2, _ = model.encode_tokens(batch.text_aug2)
            inter = inter_modal_loss(model.disc_inter, zg, model.project_text(p0))
            ig = intra_modal_loss(model.disc_graph, zg1, zg2)
            it = intra_modal_loss(model.disc_text, model.project_text(p1), model.project_text(p2))
            mlm = mlm_loss(model.mlm_logits(h1, batch.mlm_positions),
                           batch.mlm_targets) / max(1, len(batch.mlm_positions))
            expected = (inter + ig + it + mlm).item()
        assert total.item() == pytest.approx(expected, abs=1e-12)

    def test_weights_respected(self, tiny_data):
        _, vocab, pairs = tiny_data
        model = tiny_model(vocab)
        cfg = TrainConfig(batch_size=4, steps=1, seed=0,
                          loss_weights=LossWeights(1.0, 0.0, 0.0, 0.0))
        total, breakdown = forward_losses(model, make_batch(pairs[:4], cfg, step=1), cfg)
        assert breakdown.total == breakdown.inter_modal
        assert breakdown.intra_graph == 0.0


class TestTrainStep:
    def test_zero_learning_rate_keeps_params(self, tiny_data):
        _, vocab, pairs = tiny_data
        model = tiny_model(vocab)
        cfg = TrainConfig(batch_size=4, steps=1, seed=0, learning_rate=0.0)
        optimizer = make_optimizer(model, cfg)
        before = {n: p.detach().clone() for n, p in model.named_parameters()}
        breakdown = train_step(model, optimizer, make_batch(pairs[:4], cfg, step=1), cfg)
        assert math.isfinite(breakdown.total)
        for n, p in model.named_parameters():
            torch.testing.assert_close(p, before[n], rtol=0, atol=0)

    def test_overfit_fixed_batch(self, tiny_data):
        # Smoke oracle: 200 steps on one fixed batch must cut the loss >= 20%.
        _, vocab, pairs = tiny_data
        model = tiny_model(vocab, seed=2)
        cfg = TrainConfig(batch_size=4, steps=1, seed=0, learning_rate=1e-3)
        optimizer = make_optimizer(model, cfg)
        batch = make_batch(pairs[:4], cfg, step=1)
        first = train_step(model, optimizer, batch, cfg).total
        last = first
        for _ in range(199):
            last = train_step(model, optimizer, batch, cfg).total
        assert last <= 0.8 * first

    def test_baseline1_freezes_graph_branch(self, tiny_data):
        _, vocab, pairs = tiny_data
        model = tiny_model(vocab, seed=3)
        cfg = TrainConfig(batch_size=4, steps=1, seed=0, baseline1_mode=True)
        optimizer = make_optimizer(model, cfg)
        before = {n: p.detach().clone() for n, p in model.named_parameters()}
        for step in range(1, 4):
            train_step(model, optimizer, make_batch(pairs[:4], cfg, step=step), cfg)
        moved, frozen = [], []
        for n, p in model.named_parameters():
            (frozen if n.startswith(("graph_encoder.", "graph_projector.")) else moved).append(
                bool(torch.equal(p, before[n])))
        assert all(frozen)
        assert not all(moved)


class TestTrain:
    def test_zero_steps_returns_init(self, tiny_data):
        _, vocab, pairs = tiny_data
        model = tiny_model(vocab, seed=1)
        before = {n: p.detach().clone() for n, p in model.named_parameters()}
        cfg = TrainConfig(batch_size=4, steps=0, seed=0)
        result = train(pairs[:8], pairs[8:12], model, cfg)
        assert result.metrics == []
        for n, p in result.model.named_parameters():
            torch.testing.assert_close(p, before[n], rtol=0, atol=0)

    def test_same_seed_identical_metrics(self, tiny_data):
        _, vocab, pairs = tiny_data
        cfg = TrainConfig(batch_size=4, steps=6, seed=11, val_every=3, val_batches=1)
        r1 = train(pairs[:8], pairs[8:12], tiny_model(vocab, seed=4), cfg)
        r2 = train(pairs[:8], pairs[8:12], tiny_model(vocab, seed=4), cfg)
        assert r1.metrics == r2.metrics
        assert any("val_total" in row for row in r1.metrics)

    def test_too_small_training_split(self, tiny_data):
        _, vocab, pairs = tiny_data
        with pytest.raises(ValueError, match="smaller than batch_size"):
            train(pairs[:2], [], tiny_model(vocab), TrainConfig(batch_size=4, steps=1, seed=0))


class TestMlmWarmup:
    def test_warmup_reduces_held_out_mlm(self, tiny_data):
        _, vocab, pairs = tiny_data
        model = tiny_model(vocab, seed=6)
        cfg = TrainConfig(batch_size=4, steps=0, seed=0, mlm_warmup_steps=150,
                          learning_rate=3e-3)
        before = evaluate_mlm_loss(model, pairs[12:], cfg)
        mlm_warmup(model, pairs[:12], cfg)
        after = evaluate_mlm_loss(model, pairs[12:], cfg)
        assert after < before


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tiny_data, tmp_path):
        _, vocab, pairs = tiny_data
        model = tiny_model(vocab, seed=8)
        cfg = TrainConfig(batch_size=4, steps=2, seed=1)
        train(pairs[:8], [], model, cfg)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, TINY_MODEL_CFG, cfg, vocab.size, step=2)
        loaded = load_checkpoint(path)
        assert loaded.step == 2 and loaded.vocab_size == vocab.size
        for (n1, p1), (n2, p2) in zip(model.named_parameters(),
                                      loaded.model.named_parameters()):
            assert n1 == n2
            torch.testing.assert_close(p1, p2, rtol=0, atol=0)
        h_before = model.encode_graph(pairs[0].graph)
        h_after = loaded.model.encode_graph(pairs[0].graph)
        torch.testing.assert_close(h_before, h_after, rtol=0, atol=0)

    def test_truncated_file(self, tiny_data, tmp_path):
        _, vocab, _ = tiny_data
        model = tiny_model(vocab)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, TINY_MODEL_CFG, TrainConfig(seed=0), vocab.size, step=0)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) - 200])
        with pytest.raises(CheckpointError, match="corrupt-payload"):
            load_checkpoint(path)

    def test_corrupted_payload(self, tiny_data, tmp_path):
        _, vocab, _ = tiny_data
        model = tiny_model(vocab)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, TINY_MODEL_CFG, TrainConfig(seed=0), vocab.size, step=0)
        blob = bytearray(path.read_bytes())
        blob[-100] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="corrupt-payload"):
            load_checkpoint(path)

    def test_version_mismatch(self, tiny_data, tmp_path):
        _, vocab, _ = tiny_data
        model = tiny_model(vocab)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, TINY_MODEL_CFG, TrainConfig(seed=0), vocab.size, step=0)
        blob = bytearray(path.read_bytes())
        blob[7] = 99  # version field sits right after the 7-byte magic
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="version-mismatch"):
            load_checkpoint(path)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="batch_size"):
            TrainConfig(batch_size=1)
        with pytest.raises(ValueError, match="ratios"):
            TrainConfig(split_ratios=(0.5, 0.5, 0.5))
