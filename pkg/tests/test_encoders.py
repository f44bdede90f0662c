import numpy as np
import pytest

from gradcheck import fd_compare, random_instance
from nslab.data import Caption, Clip
from nslab.encoders import (
    AudioInputs,
    ModelParameters,
    TextInputs,
    backpropagate,
    encode_audio,
    encode_audio_batch,
    encode_text,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
)
from nslab.errors import ShapeError


def _params(table, proj, relu=False):
    return ModelParameters(np.asarray(table, float), np.asarray(proj, float), relu)


def test_identity_projection_mean_pool():
    p = _params(np.eye(2), np.eye(2))
    assert encode_audio(p, Clip(0, [[1.0, 0.0], [0.0, 1.0]])).tolist() == [0.5, 0.5]


def test_zero_projection_gives_zero():
    p = _params(np.eye(2), np.zeros((3, 2)))
    assert not encode_audio(p, Clip(0, np.ones((4, 3)))).any()


def test_pooled_equals_mean_of_frames(rng):
    p = _params(rng.normal(size=(5, 4)), rng.normal(size=(3, 4)))
    clip = Clip(0, rng.normal(size=(6, 3)))
    frames = encode_audio(p, clip, pooled=False)
    np.testing.assert_allclose(encode_audio(p, clip), frames.mean(axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(frames, clip.frames @ p.audio_proj, atol=1e-12)


def test_audio_dimension_mismatch():
    with pytest.raises(ShapeError):
        encode_audio(_params(np.eye(2), np.eye(2)), Clip(0, np.ones((1, 3))))


def test_text_pooling():
    p = _params(np.eye(4)[:, :2] + np.array([[0, 0], [0, 0], [3, 1], [2, 5]]), np.eye(2))
    assert encode_text(p, Caption(0, 0, (0, 1))).tolist() == [0.5, 0.5]
    assert encode_text(p, Caption(0, 0, (3, 3, 3))).tolist() == p.token_table[3].tolist()


def test_text_pool_random(rng):
    p = _params(rng.normal(size=(10, 4)), np.eye(4))
    cap = Caption(0, 0, (3, 1, 7, 3))
    np.testing.assert_allclose(encode_text(p, cap), p.token_table[[3, 1, 7, 3]].mean(axis=0), rtol=0, atol=1e-12)


def test_token_out_of_range():
    with pytest.raises(IndexError):
        encode_text(_params(np.eye(2), np.eye(2)), Caption(0, 0, (2,)))


def test_init_parameters():
    a = init_parameters(32, 16, 200, seed=3)
    assert a == init_parameters(32, 16, 200, seed=3)
    assert a != init_parameters(32, 16, 200, seed=4)
    assert a.token_table.shape == (200, 32) and a.audio_proj.shape == (16, 32)
    for m in (a.token_table, a.audio_proj):
        assert m.min() >= -0.05 and m.max() <= 0.05
    with pytest.raises(ShapeError):
        init_parameters(0, 1, 1, 0)


def test_linearity_in_parameters(rng):
    p = _params(rng.normal(size=(6, 3)), rng.normal(size=(2, 3)))
    clip, cap = Clip(0, rng.normal(size=(3, 2))), Caption(0, 0, (1, 5))
    np.testing.assert_allclose(encode_audio(p.scaled(2.0), clip), 2 * encode_audio(p, clip), rtol=1e-15)
    np.testing.assert_array_equal(encode_text(p.scaled(2.0), cap), 2 * encode_text(p, cap))


def test_zero_upstream_gives_zero_gradients(rng):
    p = _params(rng.normal(size=(6, 3)), rng.normal(size=(2, 3)))
    audio = AudioInputs.from_clips([Clip(0, rng.normal(size=(3, 2)))])
    text = TextInputs.from_captions([Caption(0, 0, (1, 5))])
    g = backpropagate(p, audio, text, np.zeros((1, 3)), np.zeros((1, 3)))
    assert not g.token_table.any() and not g.audio_proj.any()


def test_single_frame_single_token_chain_rule(rng):
    p = _params(rng.normal(size=(6, 3)), rng.normal(size=(2, 3)))
    frame = rng.normal(size=(1, 2))
    up_a, up_t = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    g = backpropagate(
        p, AudioInputs.from_clips([Clip(0, frame)]), TextInputs.from_captions([Caption(0, 0, (4,))]), up_a, up_t
    )
    np.testing.assert_array_equal(g.audio_proj, frame.T @ up_a)
    np.testing.assert_array_equal(g.token_table[4], up_t[0])
    assert not np.delete(g.token_table, 4, axis=0).any()


def test_repeated_tokens_accumulate(rng):
    p = _params(rng.normal(size=(6, 3)), rng.normal(size=(2, 3)))
    up = np.array([[3.0, 6.0, 9.0]])
    g = backpropagate(
        p, AudioInputs.from_clips([Clip(0, np.ones((1, 2)))]), TextInputs.from_captions([Caption(0, 0, (2, 2, 5))]),
        None, up,
    )
    np.testing.assert_allclose(g.token_table[2], 2 * up[0] / 3)
    np.testing.assert_allclose(g.token_table[5], up[0] / 3)


def test_backprop_shape_mismatch(rng):
    p = _params(rng.normal(size=(6, 3)), rng.normal(size=(2, 3)))
    audio = AudioInputs.from_clips([Clip(0, np.ones((1, 2)))])
    text = TextInputs.from_captions([Caption(0, 0, (1,))])
    with pytest.raises(ShapeError):
        backpropagate(p, audio, text, np.zeros((2, 3)), None)


@pytest.mark.parametrize("strategy", ["random", "cross_semi_hard", "full_mini_batch", "text_hard"])
@pytest.mark.parametrize("fn", ["dot", "cosine", "mean_max_align"])
def test_end_to_end_gradient(strategy, fn):
    params, audio, text, sel = random_instance(seed=1, n=4, dim=5, strategy=strategy, fn=fn)
    worst, checked = fd_compare(params, audio, text, sel, strategy, fn)
    assert checked > 0
    assert worst < 1e-4


def test_end_to_end_gradient_relu():
    params, audio, text, sel = random_instance(seed=2, n=3, dim=4, strategy="random", relu=True)
    worst, checked = fd_compare(params, audio, text, sel, "random")
    assert checked > 0 and worst < 1e-4


def test_checkpoint_round_trip(tmp_path, rng):
    p = _params(rng.normal(size=(6, 3)), rng.normal(size=(2, 3)), relu=True)
    path = tmp_path / "ck.jl"
    save_checkpoint(p, path, seed=7, config={"strategy": "random"})
    back, header = load_checkpoint(path)
    assert back == p
    assert header["seed"] == 7 and header["config"]["strategy"] == "random"
    assert not list(tmp_path.glob("*.tmp"))
