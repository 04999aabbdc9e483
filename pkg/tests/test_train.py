import numpy as np
import pytest

from affseq.checkpoint import load_checkpoint
from affseq.dataset import load_manifest
from affseq.errors import ConfigError, CoverageError, DomainError, NumericFaultError
from affseq.model import ModelConfig
from affseq.train import (
    HISTORY_HEADER,
    TrainConfig,
    evaluate_checkpoint,
    predict,
    restore_model,
    train,
)

from conftest import make_corpus


def _small_model(**kw):
    # canonical input widths (the loader enforces them); narrow layers for speed
    return ModelConfig(width_scale=32, **kw)


def _corpus(tmp_path, rng, videos=None):
    videos = videos or [("tr0", "train", 30), ("tr1", "train", 25), ("va0", "val", 20)]
    manifest = make_corpus(tmp_path / "corpus", videos, rng)
    return load_manifest(manifest)


def _history_cols(line):
    cells = line.split(",")
    return int(cells[0]), [float(c) for c in cells[1:]]


# --- config -----------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=-1)
    with pytest.raises(ConfigError):
        TrainConfig(ccc_mode="pooled")
    with pytest.raises(ConfigError):
        TrainConfig(threads=0)


# --- train ------------------------------------------------------------------

def test_epochs_zero_saves_initial_state(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    config = TrainConfig(epochs=0, model=_small_model())
    ckpt, history = train(rows, config, tmp_path / "run")
    assert history == []
    assert ckpt.epoch == 0
    assert ckpt.best_val_score is None
    assert (tmp_path / "run" / "best.ckpt").exists()
    text = (tmp_path / "run" / "history.csv").read_text()
    assert text == HISTORY_HEADER + "\n"


def test_history_layout(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    config = TrainConfig(epochs=3, batch_size=4, seed=5, model=_small_model())
    ckpt, history = train(rows, config, tmp_path / "run")
    assert len(history) == 3
    lines = (tmp_path / "run" / "history.csv").read_text().splitlines()
    assert lines[0] == HISTORY_HEADER
    assert lines[1:] == history
    for want_epoch, line in enumerate(history, start=1):
        epoch, values = _history_cols(line)
        assert epoch == want_epoch
        assert len(values) == 5
        assert all(np.isfinite(values))
        assert values[0] >= 0.0  # train loss


def test_same_seed_is_deterministic(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    config = TrainConfig(epochs=2, batch_size=4, seed=11, model=_small_model())
    train(rows, config, tmp_path / "a")
    train(rows, config, tmp_path / "b")
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()
    assert (tmp_path / "a" / "best.ckpt").read_bytes() == (tmp_path / "b" / "best.ckpt").read_bytes()


def test_loader_threads_do_not_change_results(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    base = TrainConfig(epochs=2, batch_size=4, seed=11, model=_small_model())
    threaded = TrainConfig(epochs=2, batch_size=4, seed=11, threads=3, model=_small_model())
    train(rows, base, tmp_path / "a")
    train(rows, threaded, tmp_path / "b")
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()


def test_different_seeds_diverge(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    _, hist_a = train(rows, TrainConfig(epochs=1, seed=1, model=_small_model()), tmp_path / "a")
    _, hist_b = train(rows, TrainConfig(epochs=1, seed=2, model=_small_model()), tmp_path / "b")
    assert hist_a != hist_b


def test_best_checkpoint_tracks_highest_mean_ccc(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    config = TrainConfig(epochs=4, batch_size=4, seed=3, model=_small_model())
    ckpt, history = train(rows, config, tmp_path / "run")
    means = []
    for line in history:
        _, values = _history_cols(line)
        means.append(0.5 * (values[1] + values[2]))
    best_epoch = int(np.argmax(means)) + 1  # ties keep the earliest epoch
    assert ckpt.epoch == best_epoch
    assert ckpt.best_val_score == pytest.approx(max(means), abs=1e-12)


def test_missing_split_raises(tmp_path, rng):
    only_train = _corpus(tmp_path / "t", rng, videos=[("a", "train", 20)])
    with pytest.raises(ConfigError, match="val"):
        train(only_train, TrainConfig(epochs=1, model=_small_model()), tmp_path / "r1")
    only_val = _corpus(tmp_path / "v", rng, videos=[("a", "val", 20)])
    with pytest.raises(ConfigError, match="train"):
        train(only_val, TrainConfig(epochs=1, model=_small_model()), tmp_path / "r2")


def test_train_requires_labels(tmp_path, rng):
    manifest = make_corpus(
        tmp_path / "c", [("a", "train", 20), ("b", "val", 20)], rng
    )
    lines = manifest.read_text().splitlines()
    cells = lines[1].split(",")  # drop the train row's label path
    cells[5] = ""
    lines[1] = ",".join(cells)
    manifest.write_text("\n".join(lines) + "\n")
    rows = load_manifest(manifest)
    with pytest.raises(CoverageError, match="labels"):
        train(rows, TrainConfig(epochs=1, model=_small_model()), tmp_path / "run")


def test_frame_count_mismatch_raises(tmp_path, rng):
    manifest = make_corpus(
        tmp_path / "c", [("a", "train", 20), ("b", "val", 20)], rng
    )
    lines = manifest.read_text().splitlines()
    lines[1] = lines[1].rsplit(",", 1)[0] + ",21"
    manifest.write_text("\n".join(lines) + "\n")
    rows = load_manifest(manifest)
    with pytest.raises(DomainError, match="manifest declares 21"):
        train(rows, TrainConfig(epochs=1, model=_small_model()), tmp_path / "run")


def test_all_invalid_labels_raise(tmp_path, rng):
    manifest = make_corpus(
        tmp_path / "c", [("a", "train", 20), ("b", "val", 20)], rng
    )
    label_path = tmp_path / "c" / "a.labels.csv"
    body = "frame,valence,arousal\n" + "".join(f"{i},-5,-5\n" for i in range(20))
    label_path.write_text(body)
    rows = load_manifest(manifest)
    with pytest.raises(ConfigError, match="valid label"):
        train(rows, TrainConfig(epochs=1, model=_small_model()), tmp_path / "run")


def test_numeric_fault_reports_epoch_and_batch(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    config = TrainConfig(
        epochs=2, batch_size=2, seed=0, learning_rate=1e200, clip_norm=0.0, model=_small_model()
    )
    with np.errstate(over="ignore"), pytest.raises(NumericFaultError, match=r"epoch \d+ batch \d+"):
        train(rows, config, tmp_path / "run")


# --- restore / evaluate / predict ------------------------------------------------

def test_restore_round_trip_predicts_identically(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    config = TrainConfig(epochs=1, seed=2, model=_small_model())
    ckpt, _ = train(rows, config, tmp_path / "run")
    report_a = evaluate_checkpoint(rows, ckpt)
    reloaded = load_checkpoint(tmp_path / "run" / "best.ckpt")
    report_b = evaluate_checkpoint(rows, reloaded)
    assert report_a == report_b
    model, stats = restore_model(ckpt)
    assert model.config == config.model
    assert set(stats.mean) == set(config.model.modalities())


def test_evaluate_counts_valid_val_frames(tmp_path, rng):
    rows = _corpus(tmp_path, rng)  # val split: one 20-frame video, labels all valid
    ckpt, _ = train(rows, TrainConfig(epochs=0, model=_small_model()), tmp_path / "run")
    report = evaluate_checkpoint(rows, ckpt)
    assert report.n_frames_evaluated == 20


def test_evaluate_requires_val_rows(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    ckpt, _ = train(rows, TrainConfig(epochs=0, model=_small_model()), tmp_path / "run")
    with pytest.raises(ConfigError, match="val"):
        evaluate_checkpoint([r for r in rows if r.split == "train"], ckpt)


def test_predict_writes_one_csv_per_video(tmp_path, rng):
    videos = [("tr0", "train", 30), ("va0", "val", 25), ("va1", "val", 15), ("va2", "val", 7)]
    rows = _corpus(tmp_path, rng, videos=videos)
    ckpt, _ = train(rows, TrainConfig(epochs=1, seed=4, model=_small_model()), tmp_path / "run")
    written = predict(rows, ckpt, tmp_path / "preds")
    assert set(written) == {"tr0", "va0", "va1", "va2"}
    for vid, _, n_frames in videos:
        lines = written[vid].read_text().splitlines()
        assert lines[0] == "frame,valence,arousal"
        assert len(lines) == n_frames + 1
        for i, line in enumerate(lines[1:]):
            cells = line.split(",")
            assert int(cells[0]) == i
            for cell in cells[1:]:
                assert -1.0 <= float(cell) <= 1.0


def test_predict_is_deterministic(tmp_path, rng):
    rows = _corpus(tmp_path, rng)
    ckpt, _ = train(rows, TrainConfig(epochs=1, seed=4, model=_small_model()), tmp_path / "run")
    a = predict(rows, ckpt, tmp_path / "pa")
    b = predict(rows, ckpt, tmp_path / "pb")
    for vid in a:
        assert a[vid].read_bytes() == b[vid].read_bytes()
