import numpy as np
import pytest

from moab import tensor as T
from moab.backbones import EMBED_DIM, GenomicMLP, ToyImageEncoder, UnimodalTail
from moab.exceptions import DimensionError
from moab.gradcheck import check_gradients
from moab.nn import count_params
from moab.tensor import Tensor

from conftest import GRAD_TOL, N_POINTS, leaf


def mlp(seed=0):
    return GenomicMLP(np.random.default_rng(seed), np.random.default_rng(seed + 1))


def encoder(seed=0):
    return ToyImageEncoder(np.random.default_rng(seed))


def numpy_mlp(model, x):
    """Plain numpy forward pass of the genomic MLP in eval mode."""
    for fc, norm in zip(model.fcs, model.norms):
        h = np.maximum(x @ fc.weight.data.T + fc.bias.data, 0.0)
        mu = h.mean(axis=1, keepdims=True)
        var = h.var(axis=1, keepdims=True)
        x = (h - mu) / np.sqrt(var + norm.eps) * norm.gamma.data + norm.beta.data
    return x


class TestGenomicMLP:
    def test_shape(self, rng):
        assert mlp().eval()(Tensor(rng.standard_normal((5, 80)))).shape == (5, EMBED_DIM)

    def test_wrong_width(self, rng):
        with pytest.raises(DimensionError):
            mlp()(Tensor(rng.standard_normal((5, 79))))

    def test_parameter_count(self):
        n = count_params(mlp())
        # 80*80+80 + 80*40+40 + 40*32+32 + two norm vectors per block
        assert n == 6480 + 3240 + 1312 + 2 * (80 + 40 + 32)
        assert 9_000 <= n <= 14_000

    def test_zero_input_follows_beta_path(self, rng):
        model = mlp().eval()
        beta = rng.standard_normal(32)
        model.norms[2].beta.data[:] = beta
        out = model(Tensor(np.zeros((3, 80)))).data
        assert np.array_equal(out, np.tile(beta, (3, 1)))

    def test_matches_numpy_forward(self, rng):
        model = mlp(4).eval()
        for norm in model.norms:
            norm.gamma.data[:] = rng.uniform(0.5, 1.5, norm.gamma.shape)
            norm.beta.data[:] = rng.standard_normal(norm.beta.shape)
        x = rng.standard_normal((6, 80))
        np.testing.assert_allclose(model(Tensor(x)).data, numpy_mlp(model, x), atol=1e-12)

    def test_dropout_only_in_training(self, rng):
        model = mlp()
        x = Tensor(rng.standard_normal((4, 80)))
        model.train()
        assert not np.array_equal(model(x).data, model(x).data)
        model.eval()
        assert np.array_equal(model(x).data, model(x).data)

    def test_gradients(self):
        rng = np.random.default_rng(11)
        model = mlp(2).eval()
        w = rng.standard_normal((3, 32))
        params = [model.fcs[0].weight, model.norms[1].gamma, model.fcs[2].bias]
        for _ in range(N_POINTS):
            x = leaf(rng.standard_normal((3, 80)))
            err = check_gradients(lambda: T.sum(T.mul(model(x), Tensor(w))), [x] + params, max_coords=15, rng=rng)
            assert err < GRAD_TOL


class TestToyImageEncoder:
    def test_shape(self, rng):
        assert encoder()(Tensor(rng.standard_normal((3, 1, 32, 32)))).shape == (3, EMBED_DIM)

    @pytest.mark.parametrize("shape", [(3, 1, 28, 28), (3, 2, 32, 32), (1, 32, 32)])
    def test_wrong_shape(self, shape):
        with pytest.raises(DimensionError):
            encoder()(Tensor(np.zeros(shape)))

    def test_is_small(self):
        n = count_params(encoder())
        assert n == (8 * 9 + 8) + (16 * 8 * 9 + 16) + (16 * 32 + 32)
        assert n < 10_000

    def test_zero_shift_is_identical(self, rng):
        img = rng.standard_normal((2, 1, 32, 32))
        model = encoder()
        assert np.array_equal(model(Tensor(img)).data, model(Tensor(np.roll(img, 0, axis=(2, 3)))).data)

    def test_gradients(self):
        rng = np.random.default_rng(12)
        model = encoder(3)
        w = rng.standard_normal((2, 32))
        params = [model.conv1.weight, model.conv2.bias, model.fc.weight]
        for _ in range(N_POINTS):
            x = leaf(rng.standard_normal((2, 1, 32, 32)))
            err = check_gradients(lambda: T.sum(T.mul(model(x), Tensor(w))), [x] + params, max_coords=15, rng=rng)
            assert err < GRAD_TOL


class TestUnimodalTail:
    def tail(self, random_weights=True):
        tail = UnimodalTail(np.random.default_rng(0), np.random.default_rng(1))
        if random_weights:
            tail.fc.weight.data[:] = np.random.default_rng(2).standard_normal((3, 32))
        return tail

    def test_logits_start_at_zero(self, rng):
        logits = self.tail(random_weights=False).eval()(Tensor(rng.standard_normal((4, 32))))
        assert np.array_equal(logits.data, np.zeros((4, 3)))

    def test_shape(self, rng):
        assert self.tail().eval()(Tensor(rng.standard_normal((4, 32)))).shape == (4, 3)

    def test_zero_weights(self, rng):
        tail = self.tail().train()
        tail.fc.weight.data[:] = 0.0
        assert np.array_equal(tail(Tensor(rng.standard_normal((4, 32)))).data, np.zeros((4, 3)))

    def test_gradients(self):
        rng = np.random.default_rng(13)
        tail = self.tail().eval()
        for _ in range(N_POINTS):
            x = leaf(rng.standard_normal((3, 32)))
            labels = rng.integers(0, 3, size=3)
            err = check_gradients(lambda: T.cross_entropy(tail(x), labels), [x, tail.fc.weight, tail.fc.bias])
            assert err < GRAD_TOL


def test_embeddings_finite_over_random_draws():
    rng = np.random.default_rng(99)
    genes_model, image_model = mlp().eval(), encoder()
    # 1000 draws at widely varying scales, batched to keep it quick
    for scale in 10.0 ** np.arange(-3, 4):
        genes = scale * rng.standard_normal((143, 80))
        images = scale * rng.standard_normal((143, 1, 32, 32))
        assert np.all(np.isfinite(genes_model(Tensor(genes)).data))
        assert np.all(np.isfinite(image_model(Tensor(images)).data))


def test_eval_outputs_bit_identical(rng):
    genes_model, image_model = mlp().eval(), encoder()
    g, x = Tensor(rng.standard_normal((4, 80))), Tensor(rng.standard_normal((4, 1, 32, 32)))
    assert np.array_equal(genes_model(g).data, genes_model(g).data)
    assert np.array_equal(image_model(x).data, image_model(x).data)
