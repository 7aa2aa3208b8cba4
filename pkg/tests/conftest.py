import pytest

from helpers import write_markov_corpus


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """Session-wide synthetic corpus: 50k train tokens, 5k validation."""
    root = tmp_path_factory.mktemp("synth")
    train = root / "train.txt"
    valid = root / "valid.txt"
    write_markov_corpus(train, 50_000, structure_seed=0, sample_seed=1)
    write_markov_corpus(valid, 5_000, structure_seed=0, sample_seed=2)
    return {"train": str(train), "valid": str(valid)}


@pytest.fixture
def smoke_flags(synth_corpus):
    """Flag dict for the small deterministic run used across the suite."""

    def make(out_dir, **overrides):
        flags = dict(
            mode="l2t",
            train_path=synth_corpus["train"],
            valid_path=synth_corpus["valid"],
            out_dir=str(out_dir),
            epochs=2,
            warmup_epochs=1,
            batch_size=32,
            seq_len=32,
            dim=64,
            n_blocks=2,
            max_vocab=200,
            lr_student=1e-3,
            activation_threshold=16,
            deterministic=True,
            seed=7,
        )
        flags.update(overrides)
        return flags

    return make
