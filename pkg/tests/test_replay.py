from fractions import Fraction

import pytest
import torch

from motionreplay.errors import FrozenModelError, ValidationError
from motionreplay.model import ModelConfig, SeqVae
from motionreplay.replay import (MixedTrainingSet, ReplayConfig, as_ratio,
                                 build_real_replay_set, build_replay_set, mix,
                                 replay_counts)

from conftest import make_sequence


def frozen_model(num_classes=3, seed=0) -> SeqVae:
    torch.manual_seed(seed)
    model = SeqVae(ModelConfig(num_classes=num_classes, latent_dim=4,
                               hidden_size=8, encoder_layers=1, decoder_layers=1))
    return model.snapshot()


# ---------------------------------------------------------------- ratios and counts

def test_as_ratio_exactness():
    assert as_ratio("1/5") == Fraction(1, 5)
    assert as_ratio(0.2) == Fraction(1, 5)
    assert as_ratio(0.1) == Fraction(1, 10)  # not the binary-float neighbour
    assert as_ratio(Fraction(3, 16)) == Fraction(3, 16)
    assert as_ratio("0.0625") == Fraction(1, 16)


def test_replay_counts_floor_rule():
    assert replay_counts([0, 1], 320, Fraction(1, 16)) == {0: 20, 1: 20}
    assert replay_counts([0, 1, 2], 100, Fraction(1, 5)) == {0: 20, 1: 20, 2: 20}
    # Floor would give 0; the rule guarantees at least one sample per class.
    assert replay_counts([0], 10, Fraction(1, 16)) == {0: 1}
    # Exact rational arithmetic: 0.1 * 30 is exactly 3.
    assert replay_counts([0], 30, 0.1) == {0: 3}


def test_replay_counts_validation():
    with pytest.raises(ValidationError, match="second task"):
        replay_counts([], 10, Fraction(1, 5))
    with pytest.raises(ValidationError, match="new_task_count"):
        replay_counts([0], 0, Fraction(1, 5))


def test_replay_config_validation():
    assert ReplayConfig().ratio == Fraction(1, 5)
    assert ReplayConfig(ratio="1/16").ratio == Fraction(1, 16)
    with pytest.raises(ValidationError, match="ratio"):
        ReplayConfig(ratio=0)
    with pytest.raises(ValidationError, match="ratio"):
        ReplayConfig(ratio="3/2")
    with pytest.raises(ValidationError, match="replay_length"):
        ReplayConfig(replay_length=0)
    with pytest.raises(ValidationError, match="source"):
        ReplayConfig(source="synthetic")


# ---------------------------------------------------------------- generated replay

def test_build_replay_requires_frozen_model():
    torch.manual_seed(0)
    live = SeqVae(ModelConfig(num_classes=2, latent_dim=4, hidden_size=8,
                              encoder_layers=1, decoder_layers=1))
    with pytest.raises(FrozenModelError, match="frozen"):
        build_replay_set(live, [0], {0: 1}, length=5,
                         generator=torch.Generator().manual_seed(0))


def test_build_replay_set_contents():
    model = frozen_model()
    counts = {0: 2, 1: 3}
    out = build_replay_set(model, [0, 1], counts, length=6,
                           generator=torch.Generator().manual_seed(1))
    assert [s.label for s in out] == [0, 0, 1, 1, 1]
    assert all(s.num_frames == 6 for s in out)


def test_build_replay_set_is_deterministic():
    model = frozen_model()
    def build(seed):
        return build_replay_set(model, [0, 1], {0: 2, 1: 2}, length=5,
                                generator=torch.Generator().manual_seed(seed))
    a, b, c = build(7), build(7), build(8)
    assert a == b
    assert a != c


def test_build_replay_rejects_unseen_classes():
    model = frozen_model()
    with pytest.raises(ValidationError, match="never seen"):
        build_replay_set(model, [0], {0: 1, 2: 1}, length=5,
                         generator=torch.Generator().manual_seed(0))


def test_different_snapshots_give_different_replay():
    a = build_replay_set(frozen_model(seed=1), [0], {0: 2}, length=5,
                         generator=torch.Generator().manual_seed(3))
    b = build_replay_set(frozen_model(seed=2), [0], {0: 2}, length=5,
                         generator=torch.Generator().manual_seed(3))
    assert a != b


# ---------------------------------------------------------------- real-source baseline

def test_real_replay_draws_without_replacement():
    pool = [make_sequence(5, label=0, seed=s) for s in range(4)]
    out = build_real_replay_set(pool, {0: 3}, torch.Generator().manual_seed(0))
    assert len(out) == 3
    ids = [id(s) for s in out]
    assert len(set(ids)) == 3
    assert all(any(s is p for p in pool) for s in out)


def test_real_replay_errors_when_pool_too_small():
    pool = [make_sequence(5, label=0, seed=1)]
    with pytest.raises(ValidationError, match="stored samples"):
        build_real_replay_set(pool, {0: 2}, torch.Generator().manual_seed(0))


# ---------------------------------------------------------------- mixing

def test_mix_orders_and_flags():
    real = [make_sequence(5, label=2, seed=1), make_sequence(5, label=2, seed=2)]
    replay = build_replay_set(frozen_model(), [0, 1], {0: 1, 1: 1}, length=5,
                              generator=torch.Generator().manual_seed(0))
    mixed = mix(real, replay, provenance_task=1, earlier_classes=[0, 1])
    assert len(mixed) == 4
    assert mixed.provenance_task == 1
    assert mixed.replay_length == 5
    flags = [flag for _, flag in mixed.entries()]
    assert flags == [False, False, True, True]


def test_mix_rejects_labels_outside_earlier_tasks():
    real = [make_sequence(5, label=2, seed=1)]
    stray = [make_sequence(5, label=2, seed=3)]
    with pytest.raises(ValidationError, match="earlier"):
        mix(real, stray, provenance_task=1, earlier_classes=[0, 1])


def test_mixed_set_requires_uniform_replay_length():
    with pytest.raises(ValidationError, match="lengths"):
        MixedTrainingSet(real=(), provenance_task=0,
                         replay=(make_sequence(5, 0, seed=1), make_sequence(6, 0, seed=2)))


def test_empty_replay_is_allowed():
    real = [make_sequence(5, label=0, seed=1)]
    mixed = mix(real, [], provenance_task=0)
    assert len(mixed) == 1 and mixed.replay_length is None
