import numpy as np
import pytest

from augan import augment as A
from augan import gan
from augan import tensor as T
from augan.errors import ContractError, FormatError
from augan.gan import GanConfig

from conftest import GRAD_TOL

SMALL = GanConfig(latent_dim=4, image_shape=(3, 4, 4), g_hidden=(8,), d_hidden=(8, 6), proj_hidden=5,
                  embed_dim=3, contrastive=True)


@pytest.fixture
def state():
    return gan.init_state(SMALL, np.random.default_rng(0))


def test_parameter_shapes(state):
    p = state.params
    assert p["g.0.w"].shape == (4, 8) and p["g.1.w"].shape == (8, 48)
    assert p["d.0.w"].shape == (48, 8) and p["d.1.w"].shape == (8, 6) and p["l.0.w"].shape == (6, 1)
    assert p["p.0.w"].shape == (6, 5) and p["p.1.w"].shape == (5, 3)
    assert all(not v.any() for k, v in p.items() if k.endswith(".b"))


def test_no_head_without_contrastive():
    st = gan.init_state(GanConfig(), np.random.default_rng(0))
    assert not any(k.startswith("p.") for k in st.params)
    _, hidden = gan.discriminate(st, np.zeros((2, 3, 16, 16)))
    with pytest.raises(ContractError):
        gan.project(st, hidden)


def test_forward_shapes_and_range(state, rng):
    imgs = gan.generate(state, rng.standard_normal((5, 4))).data
    assert imgs.shape == (5, 3, 4, 4) and imgs.min() >= 0 and imgs.max() <= 1
    logits, hidden = gan.discriminate(state, imgs)
    assert logits.shape == (5,) and hidden.shape == (5, 6)
    assert gan.project(state, hidden).shape == (5, 3)


def test_bad_input_shapes(state):
    with pytest.raises(ContractError):
        gan.generate(state, np.zeros((2, 5)))
    with pytest.raises(ContractError):
        gan.discriminate(state, np.zeros((2, 3, 4, 5)))


def test_hinge_losses_on_known_logits():
    d, g = gan.hinge_losses(T.Tensor([2.0, 0.5]), T.Tensor([-2.0, 0.5]))
    assert d.item() == 1.0
    assert g.item() == 0.75
    assert gan.generator_loss(T.Tensor([-2.0, 0.5])).item() == 0.75


def test_init_is_seeded():
    a = gan.init_state(SMALL, np.random.default_rng(3))
    b = gan.init_state(SMALL, np.random.default_rng(3))
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


@pytest.mark.parametrize("kinds", [("Translation",), ("ZoomIn", "CutMix"), ("MixUp",), ("ZoomOut", "CutOut")])
def test_composite_generator_augment_discriminator_gradient(state, kinds):
    rng = np.random.default_rng(11)
    z = rng.standard_normal((4, 4))
    params = A.sample_chain([A.AugmentSpec(k, 0.3) for k in kinds], rng, (4, 3, 4, 4))

    def loss_of(name):
        def f(w):
            p = dict(state.bind())
            p[name] = w
            fake = gan.generate(p, z, SMALL)
            logits, _ = gan.discriminate(p, A.apply_chain(params, fake), SMALL)
            return gan.generator_loss(logits)
        return f

    for name in ("g.0.w", "g.1.b", "d.0.w"):
        assert T.finite_diff_check(loss_of(name), state.params[name]) < GRAD_TOL

    def via_latent(zz):
        fake = gan.generate(state, zz)
        return gan.generator_loss(gan.discriminate(state, A.apply_chain(params, fake))[0])

    assert T.finite_diff_check(via_latent, z) < GRAD_TOL


def test_projection_head_gradient(state, rng):
    x = rng.uniform(0, 1, (4, 3, 4, 4))

    def f(w):
        p = dict(state.bind())
        p["p.1.w"] = w
        _, hidden = gan.discriminate(p, x, SMALL)
        return T.sum(gan.project(p, hidden, SMALL))

    assert T.finite_diff_check(f, state.params["p.1.w"]) < GRAD_TOL


# --- checkpoints ----------------------------------------------------------------

def test_checkpoint_round_trip_is_bitwise(state, tmp_path):
    state.moments = {"g.0.w.m": np.random.default_rng(1).standard_normal((4, 8)), "t.g": np.array(7.0)}
    state.step = 42
    path = tmp_path / "a.ckpt"
    gan.save_checkpoint(state, path)
    back = gan.load_checkpoint(path, SMALL)
    assert back.step == 42
    assert back.params.keys() == state.params.keys() and back.moments.keys() == state.moments.keys()
    for k in state.params:
        assert np.array_equal(back.params[k], state.params[k])
    for k in state.moments:
        assert np.array_equal(back.moments[k], state.moments[k])
    gan.save_checkpoint(back, tmp_path / "b.ckpt")
    assert (tmp_path / "b.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_bad_files(state, tmp_path):
    path = tmp_path / "a.ckpt"
    gan.save_checkpoint(state, path)
    raw = path.read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(FormatError):
        gan.load_checkpoint(bad, SMALL)
    with pytest.raises(FormatError):
        gan.load_checkpoint(path, GanConfig())
    for cut in (30, 60, len(raw) - 8):
        bad.write_bytes(raw[:cut])
        with pytest.raises(FormatError):
            gan.load_checkpoint(bad, SMALL)
    bad.write_bytes(raw + b"\0")
    with pytest.raises(FormatError):
        gan.load_checkpoint(bad, SMALL)
