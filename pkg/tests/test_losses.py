import math

import numpy as np
import pytest
import torch

from motionreplay.body import NUM_JOINTS, Skeleton
from motionreplay.data import MotionSequence
from motionreplay.errors import ValidationError
from motionreplay.losses import (aux_loss_logits, frames_to_positions,
                                 latent_loss, reconstruction_loss,
                                 reconstruction_loss_frames, total_loss,
                                 vertex_loss, vertex_loss_positions)
from motionreplay.rotations import rotmats_to_sixd

from conftest import make_sequence, rot_z


def kl_oracle(mu_q, s_q, mu_p, s_p):
    """Textbook diagonal-Gaussian KL(q || p) from standard deviations."""
    mu_q, s_q, mu_p, s_p = (np.asarray(v, dtype=np.float64) for v in (mu_q, s_q, mu_p, s_p))
    per_dim = np.log(s_p / s_q) + (s_q**2 + (mu_q - mu_p)**2) / (2 * s_p**2) - 0.5
    return per_dim.sum(axis=-1)


# ---------------------------------------------------------------- latent loss

def test_latent_loss_identical_is_exactly_zero():
    mean = torch.randn(5, 8, dtype=torch.float64)
    log_std = torch.randn(5, 8, dtype=torch.float64)
    out = latent_loss(mean, log_std, mean.clone(), log_std.clone())
    assert torch.equal(out, torch.zeros(5, dtype=torch.float64))


def test_latent_loss_unit_shift_is_half():
    # Standard normals one unit apart: KL = 0.5 exactly.
    zero = torch.zeros(1, 1, dtype=torch.float64)
    one = torch.ones(1, 1, dtype=torch.float64)
    out = latent_loss(one, zero, zero, zero)
    assert abs(float(out) - 0.5) <= 1e-9


def test_latent_loss_matches_textbook_formula():
    rng = np.random.default_rng(0)
    mu_q, mu_p = rng.normal(size=(7, 5)), rng.normal(size=(7, 5))
    l_q, l_p = rng.normal(size=(7, 5)) * 0.5, rng.normal(size=(7, 5)) * 0.5
    got = latent_loss(torch.tensor(mu_q), torch.tensor(l_q),
                      torch.tensor(mu_p), torch.tensor(l_p)).numpy()
    expect = kl_oracle(mu_q, np.exp(l_q), mu_p, np.exp(l_p))
    assert np.allclose(got, expect, atol=1e-12)


def test_latent_loss_is_nonnegative_and_zero_only_at_match():
    rng = np.random.default_rng(1)
    mu = rng.normal(size=(50, 3))
    l = rng.normal(size=(50, 3)) * 0.3
    out = latent_loss(torch.tensor(mu), torch.tensor(l),
                      torch.tensor(rng.normal(size=(50, 3))),
                      torch.tensor(rng.normal(size=(50, 3)) * 0.3))
    assert torch.all(out > 0)


def test_latent_loss_monte_carlo_sanity():
    # Single pair, spot-checked against a sampling estimate of
    # E_q[log q(x) - log p(x)].
    mu_q, s_q = np.array([0.3, -0.7, 1.1]), np.array([1.2, 0.8, 1.0])
    mu_p, s_p = np.array([0.0, 0.0, 0.5]), np.array([1.0, 1.3, 0.9])
    analytic = float(latent_loss(torch.tensor(mu_q), torch.tensor(np.log(s_q)),
                                 torch.tensor(mu_p), torch.tensor(np.log(s_p))))
    rng = np.random.default_rng(42)
    x = rng.normal(mu_q, s_q, size=(200_000, 3))
    log_q = (-0.5 * ((x - mu_q) / s_q) ** 2 - np.log(s_q)).sum(axis=1)
    log_p = (-0.5 * ((x - mu_p) / s_p) ** 2 - np.log(s_p)).sum(axis=1)
    samples = log_q - log_p
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    assert abs(samples.mean() - analytic) < 4 * se + 1e-6


def test_latent_loss_gradients():
    args = tuple(torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
                 for _ in range(4))
    assert torch.autograd.gradcheck(latent_loss, args)


# ---------------------------------------------------------------- reconstruction loss

def test_reconstruction_identical_is_zero():
    t = torch.randn(2, 4, 147, dtype=torch.float64)
    assert float(reconstruction_loss_frames(t, t.clone())) == 0.0


def test_reconstruction_single_unit_error_is_one():
    target = torch.zeros(3, 147, dtype=torch.float64)
    pred = target.clone()
    pred[1, 10] = 1.0
    assert float(reconstruction_loss_frames(pred, target)) == 1.0


def test_reconstruction_sums_frames_averages_batch():
    torch.manual_seed(0)
    pred = torch.randn(4, 3, 10, dtype=torch.float64)
    target = torch.randn(4, 3, 10, dtype=torch.float64)
    got = float(reconstruction_loss_frames(pred, target))
    per_sample = [float(((pred[i] - target[i]) ** 2).sum()) for i in range(4)]
    assert got == pytest.approx(np.mean(per_sample), abs=1e-12)
    # Unbatched input is the per-sample sum, no averaging.
    single = float(reconstruction_loss_frames(pred[2], target[2]))
    assert single == pytest.approx(per_sample[2], abs=1e-12)


def test_reconstruction_loss_on_sequences():
    seq = make_sequence(length=5, label=0, seed=1)
    assert reconstruction_loss(seq, seq) == 0.0
    moved = MotionSequence(seq.frames + 0.1, seq.label, seq.fps)
    expect = float(((moved.frames - seq.frames) ** 2).sum())
    assert reconstruction_loss(seq, moved) == pytest.approx(expect, rel=1e-12)
    short = MotionSequence(seq.frames[:3], seq.label, seq.fps)
    with pytest.raises(ValidationError, match="length"):
        reconstruction_loss(seq, short)


def test_reconstruction_shape_mismatch():
    with pytest.raises(ValidationError, match="mismatch"):
        reconstruction_loss_frames(torch.zeros(2, 3, 4), torch.zeros(2, 3, 5))


# ---------------------------------------------------------------- vertex loss

def chain_skeleton(first_offset) -> Skeleton:
    """All joints are children of the root; only joint 1 has a real bone."""
    offsets = np.zeros((NUM_JOINTS, 3))
    offsets[1] = first_offset
    return Skeleton(parents=(-1,) + (0,) * (NUM_JOINTS - 1), offsets=offsets)


def pose_vector(root_rotmat) -> np.ndarray:
    mats = np.tile(np.eye(3), (NUM_JOINTS, 1, 1))
    mats[0] = root_rotmat
    return np.concatenate([rotmats_to_sixd(mats).ravel(), np.zeros(3)])


def test_vertex_loss_identical_is_zero(skeleton):
    seq = make_sequence(length=4, label=0, seed=2)
    assert vertex_loss(seq, seq, skeleton) == 0.0


def test_vertex_loss_unit_displacement_is_one():
    # One bone of unit length at 60 degrees; rotating the root by -60 deg
    # moves its endpoint by exactly one meter (unit chord of a 60-deg arc),
    # so the squared-error vertex loss over the single differing joint is 1.
    angle = math.pi / 3
    sk = chain_skeleton([math.cos(angle), math.sin(angle), 0.0])
    target = MotionSequence(pose_vector(np.eye(3))[None], label=0)
    pred = MotionSequence(pose_vector(rot_z(-angle))[None], label=0)
    assert vertex_loss(target, pred, sk) == pytest.approx(1.0, abs=1e-9)


def test_vertex_loss_positions_single_moved_joint():
    target = torch.zeros(2, NUM_JOINTS, 3, dtype=torch.float64)
    pred = target.clone()
    pred[1, 5] = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    assert float(vertex_loss_positions(pred, target)) == 1.0


def test_vertex_loss_matches_double_loop(skeleton):
    a = make_sequence(length=4, label=0, seed=3)
    b = make_sequence(length=4, label=0, seed=4)
    pa = frames_to_positions(torch.from_numpy(a.frames), skeleton).numpy()
    pb = frames_to_positions(torch.from_numpy(b.frames), skeleton).numpy()
    total = 0.0
    for t in range(4):
        for j in range(NUM_JOINTS):
            for k in range(3):
                total += (pb[t, j, k] - pa[t, j, k]) ** 2
    assert vertex_loss(a, b, skeleton) == pytest.approx(total, rel=1e-12)


def test_vertex_loss_positions_batch_mean():
    torch.manual_seed(1)
    pred = torch.randn(3, 2, NUM_JOINTS, 3, dtype=torch.float64)
    target = torch.randn(3, 2, NUM_JOINTS, 3, dtype=torch.float64)
    got = float(vertex_loss_positions(pred, target))
    per = [float(((pred[i] - target[i]) ** 2).sum()) for i in range(3)]
    assert got == pytest.approx(np.mean(per), abs=1e-12)


# ---------------------------------------------------------------- aux loss

def test_aux_loss_uniform_logits_is_log_c():
    logits = torch.zeros(4, 7, dtype=torch.float64)
    labels = torch.tensor([0, 3, 6, 2])
    assert float(aux_loss_logits(logits, labels)) == pytest.approx(math.log(7), abs=1e-12)


def test_aux_loss_confident_correct_is_near_zero():
    logits = torch.full((2, 3), -50.0, dtype=torch.float64)
    logits[0, 1] = 50.0
    logits[1, 0] = 50.0
    assert float(aux_loss_logits(logits, torch.tensor([1, 0]))) < 1e-12


def test_aux_loss_matches_logsumexp_oracle():
    torch.manual_seed(2)
    logits = torch.randn(6, 5, dtype=torch.float64)
    labels = torch.tensor([0, 4, 2, 1, 3, 3])
    got = float(aux_loss_logits(logits, labels))
    expect = np.mean([
        float(torch.logsumexp(logits[i], dim=0)) - float(logits[i, labels[i]])
        for i in range(6)
    ])
    assert got == pytest.approx(expect, abs=1e-10)


def test_aux_loss_label_range():
    with pytest.raises(ValidationError, match="range"):
        aux_loss_logits(torch.zeros(2, 3), torch.tensor([0, 3]))


# ---------------------------------------------------------------- combination

def test_total_loss_arithmetic():
    out = total_loss(1.0, 2.0, 3.0, 4.0, lambda_latent=0.1, lambda_aux=0.5)
    assert out.total == pytest.approx(5.3, abs=1e-12)
    assert (out.vertex, out.reconstruction, out.latent, out.aux) == (1.0, 2.0, 3.0, 4.0)
    assert (out.lambda_latent, out.lambda_aux) == (0.1, 0.5)


def test_total_loss_defaults_and_exact_affine():
    v, r, l, a = 0.25, 0.5, 8.0, 16.0
    out = total_loss(v, r, l, a)
    assert out.total == v + r + out.lambda_latent * l + out.lambda_aux * a
    assert (out.lambda_latent, out.lambda_aux) == (1e-5, 1e-4)


def test_total_loss_keeps_gradients_and_detaches_on_request():
    v = torch.tensor(1.0, requires_grad=True)
    out = total_loss(v, torch.tensor(2.0), torch.tensor(3.0), torch.tensor(4.0))
    assert out.total.requires_grad
    flat = out.detached()
    assert isinstance(flat.total, float) and flat.vertex == 1.0
