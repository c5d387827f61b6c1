import numpy as np
import pytest

from minutecast import harness
from minutecast.features import FULL_MASK, FeatureBatch, assemble_features, stack_labels
from minutecast.nn import AdamState, FocalLossConfig, focal_loss
from minutecast.training import (
    CheckpointError,
    TrainConfig,
    build_model,
    compute_label_weights,
    epoch_batches,
    load_checkpoint,
    save_checkpoint,
    train_model,
)


class TestLabelWeights:
    def test_formula(self):
        labels = np.zeros((10, 1))
        labels[:3, 0] = 1.0
        assert abs(compute_label_weights(labels)[0] - 0.7) < 1e-12

    def test_never_present_clamped(self):
        assert compute_label_weights(np.zeros((5, 1)))[0] == 0.99

    def test_always_present_clamped(self):
        assert compute_label_weights(np.ones((5, 1)))[0] == 0.01

    def test_range_property(self):
        rng = np.random.default_rng(0)
        alpha = compute_label_weights(rng.integers(0, 2, (50, 9)).astype(float))
        assert (alpha >= 0.01).all() and (alpha <= 0.99).all()


class TestEpochBatches:
    def test_permutation_covers_everything(self):
        rng = np.random.default_rng(1)
        batches = epoch_batches(130, 64, rng)
        flat = np.concatenate(batches)
        assert sorted(flat.tolist()) == list(range(130))  # 130 = 64 + 64 + 2

    def test_singleton_tail_dropped(self):
        rng = np.random.default_rng(2)
        batches = epoch_batches(129, 64, rng)
        assert [len(b) for b in batches] == [64, 64]
        assert all(len(b) >= 2 for b in batches)


class TestTrainModel:
    def test_deterministic_history(self, small_corpus):
        data = small_corpus["data"]
        cfg = TrainConfig(seed=4, max_epochs=3, patience=5, hidden=(16, 8))
        _, h1 = train_model(data.train[:200], data.validation, data.manifest, cfg)
        _, h2 = train_model(data.train[:200], data.validation, data.manifest, cfg)
        assert h1.train_loss == h2.train_loss
        assert h1.val_loss == h2.val_loss
        assert h1.val_weighted_f1 == h2.val_weighted_f1

    def test_zero_epochs(self, small_corpus):
        data = small_corpus["data"]
        cfg = TrainConfig(max_epochs=0)
        model, history = train_model(data.train[:50], data.validation, data.manifest, cfg)
        assert history.train_loss == []
        assert model.mode == "eval"

    def test_early_stop_restores_best(self, small_corpus):
        data = small_corpus["data"]
        cfg = TrainConfig(seed=1, max_epochs=40, patience=3, hidden=(16, 8))
        model, history = train_model(data.train[:300], data.validation, data.manifest, cfg)
        x_val = assemble_features(data.validation, cfg.mask)
        y_val = stack_labels(data.validation)
        alpha = compute_label_weights(stack_labels(data.train[:300]))
        probs = model.forward(x_val)
        loss, _ = focal_loss(probs, y_val, FocalLossConfig(alpha=alpha, gamma=cfg.gamma))
        assert abs(loss - min(history.val_loss)) < 1e-9
        assert history.best_epoch == int(np.argmin(history.val_loss))

    def test_loss_decreases_over_first_ten_steps(self, tiny_cases):
        manifest, cases, _ = tiny_cases
        from minutecast.features import fit_normalizer, sample_corpus

        stats = fit_normalizer(cases, manifest)
        samples = sample_corpus(cases, manifest, stats, 5, 0)
        cfg = TrainConfig(seed=0)
        model = build_model(manifest, cfg).train_mode()
        batch_all = assemble_features(samples, cfg.mask)
        y = stack_labels(samples)
        sel = np.arange(min(64, len(samples)))
        batch = FeatureBatch(batch_all.pre[sel], batch_all.ids[sel], batch_all.post[sel])
        loss_cfg = FocalLossConfig(alpha=compute_label_weights(y), gamma=cfg.gamma)
        optim = AdamState(learning_rate=cfg.learning_rate)
        losses = []
        for _ in range(11):
            probs = model.forward(batch)
            loss, d_logits = focal_loss(probs, y[sel], loss_cfg)
            losses.append(loss)
            optim.update(model.params, model.backward(d_logits))
        diffs = np.diff(losses[:11])
        assert (diffs < 0).all(), f"loss not strictly decreasing: {losses}"

    def test_training_log_written(self, small_corpus, tmp_path):
        data = small_corpus["data"]
        cfg = TrainConfig(seed=2, max_epochs=2, patience=5, hidden=(8, 4))
        log = tmp_path / "train.log"
        train_model(data.train[:100], data.validation, data.manifest, cfg, log_path=log)
        import json

        lines = [json.loads(line) for line in log.read_text().splitlines()]
        assert len(lines) == 2
        assert {"epoch", "train_loss", "val_loss", "val_weighted_f1", "seconds"} <= set(lines[0])

    def test_empty_sets_rejected(self, small_corpus):
        data = small_corpus["data"]
        with pytest.raises(ValueError):
            train_model([], data.validation, data.manifest, TrainConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=1)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(patience=0)


class TestCheckpoint:
    @pytest.fixture()
    def trained(self, small_corpus):
        data = small_corpus["data"]
        cfg = TrainConfig(seed=5, max_epochs=2, patience=5, hidden=(16, 8))
        model, _ = train_model(data.train[:200], data.validation, data.manifest, cfg)
        alpha = compute_label_weights(stack_labels(data.train[:200]))
        return data, cfg, model, alpha

    def test_round_trip_bit_exact(self, trained, tmp_path):
        data, cfg, model, alpha = trained
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, cfg, data.stats,
                        data.manifest.catalog.content_hash(), data.seed, alpha)
        bundle = load_checkpoint(path)
        rng = np.random.default_rng(6)
        manifest = data.manifest
        for _ in range(100):
            batch = FeatureBatch(
                pre=rng.uniform(0, 1, (1, manifest.static_width + manifest.dynamic_width)),
                ids=rng.integers(0, manifest.catalog.n + 1, (1, 5)),
                post=rng.uniform(0, 1, (1, manifest.catalog.n + 1)),
            )
            a = model.forward(batch)
            b = bundle.model.forward(batch)
            assert (a == b).all()
        assert bundle.k == cfg.k and bundle.preproc_seed == data.seed
        assert (bundle.alpha == alpha).all()

    def test_save_is_deterministic(self, trained, tmp_path):
        data, cfg, model, alpha = trained
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        for p in (p1, p2):
            save_checkpoint(p, model, cfg, data.stats,
                            data.manifest.catalog.content_hash(), data.seed, alpha)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_file(self, trained, tmp_path):
        data, cfg, model, alpha = trained
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, cfg, data.stats,
                        data.manifest.catalog.content_hash(), data.seed, alpha)
        path.write_bytes(path.read_bytes()[:200])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_catalog_hash_mismatch(self, trained, tmp_path):
        data, cfg, model, alpha = trained
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, cfg, data.stats,
                        data.manifest.catalog.content_hash(), data.seed, alpha)
        with pytest.raises(CheckpointError, match="catalog"):
            load_checkpoint(path, expected_catalog_hash="0" * 64)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
