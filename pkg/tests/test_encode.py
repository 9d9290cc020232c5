import numpy as np
import pytest

from weakmil import encode, gmm
from weakmil.encode import EncoderConfig, ifv_normalize
from weakmil.gmm import GmmModel

from oracles import fv_reference, sup_reference


@pytest.fixture
def small_model(rng):
    K, D = 3, 4
    return GmmModel(
        np.array([0.2, 0.5, 0.3]),
        rng.standard_normal((K, D)),
        np.abs(rng.standard_normal((K, D))) + 0.5,
    )


def near_model_bag(model, rng, m=12):
    comps = rng.integers(0, model.K, m)
    return model.means[comps] + 0.5 * rng.standard_normal((m, model.D))


class TestFisherVector:
    def test_k1_bag_at_mean(self):
        model = GmmModel(np.ones(1), np.full((1, 3), 2.0), np.full((1, 3), 1.5))
        fv = encode.encode_fv(model, model.means.copy(), layout="mean_var_weight")
        D = 3
        np.testing.assert_allclose(fv.values[:D], 0.0, atol=1e-12)           # mean block
        np.testing.assert_allclose(fv.values[D : 2 * D], -1 / np.sqrt(2), atol=1e-12)
        np.testing.assert_allclose(fv.values[2 * D :], 0.0, atol=1e-12)      # weight block

    def test_k1_weight_gradient_always_zero(self, rng):
        model = GmmModel(np.ones(1), np.zeros((1, 2)), np.ones((1, 2)))
        bag = rng.standard_normal((9, 2))
        fv = encode.encode_fv(model, bag, layout="mean_var_weight")
        np.testing.assert_allclose(fv.values[-1:], 0.0, atol=1e-12)

    def test_lengths(self, rng):
        K, D = 4, 8
        model = GmmModel(
            np.full(K, 0.25), rng.standard_normal((K, D)), np.ones((K, D))
        )
        bag = rng.standard_normal((5, D))
        assert encode.encode_fv(model, bag).values.shape == (2 * K * D,)
        assert encode.encode_fv(model, bag, layout="mean_var_weight").values.shape == (
            (2 * D + 1) * K,
        )

    def test_matches_dense_reference(self, small_model, rng):
        bag = near_model_bag(small_model, rng)
        for layout, flag in [("mean_var", False), ("mean_var_weight", True)]:
            got = encode.encode_fv(small_model, bag, layout=layout).values
            want = fv_reference(
                small_model.weights, small_model.means, small_model.variances, bag, flag
            )
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_instance_order_invariance(self, small_model, rng):
        bag = near_model_bag(small_model, rng)
        a = encode.encode_fv(small_model, bag).values
        b = encode.encode_fv(small_model, bag[::-1]).values
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_duplicating_instances_is_identity(self, small_model, rng):
        bag = near_model_bag(small_model, rng)
        a = encode.encode_fv(small_model, bag).values
        b = encode.encode_fv(small_model, np.vstack([bag, bag])).values
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_empty_bag_and_dim_mismatch(self, small_model):
        with pytest.raises(ValueError):
            encode.encode_fv(small_model, np.zeros((0, small_model.D)))
        with pytest.raises(ValueError):
            encode.encode_fv(small_model, np.zeros((3, small_model.D + 1)))


class TestIfvNormalize:
    def test_hand_example(self):
        fv = encode.FisherVector(np.array([4.0, -9.0]), "mean_var")
        out = ifv_normalize(fv)
        np.testing.assert_allclose(out.values, [2 / np.sqrt(13), -3 / np.sqrt(13)], atol=1e-12)
        assert out.normalized

    def test_zero_vector_maps_to_zero(self):
        out = ifv_normalize(encode.FisherVector(np.zeros(4), "mean_var"))
        np.testing.assert_array_equal(out.values, np.zeros(4))

    def test_unit_norm(self, rng):
        out = ifv_normalize(encode.FisherVector(rng.standard_normal(16), "mean_var"))
        assert np.linalg.norm(out.values) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_double_normalization(self):
        out = ifv_normalize(encode.FisherVector(np.array([1.0, 2.0]), "mean_var"))
        with pytest.raises(ValueError, match="already normalized"):
            ifv_normalize(out)


class TestSupervector:
    def test_k1_r0_reduces_to_sample_moments(self, rng):
        model = GmmModel(np.ones(1), np.zeros((1, 3)), np.ones((1, 3)))
        bag = rng.standard_normal((20, 3))
        cfg = EncoderConfig(kind="sup", mode="mean_var", relevance_r=0.0)
        sup = encode.encode_sup(model, bag, cfg)
        np.testing.assert_allclose(sup.values[:3], bag.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(sup.values[3:], bag.var(axis=0), atol=1e-12)

    def test_huge_r_recovers_prior_parameters(self, small_model, rng):
        bag = near_model_bag(small_model, rng)
        cfg = EncoderConfig(kind="sup", mode="mean_var", relevance_r=1e9)
        sup = encode.encode_sup(small_model, bag, cfg)
        K, D = small_model.K, small_model.D
        np.testing.assert_allclose(
            sup.values[: K * D], small_model.means.ravel(), rtol=1e-5
        )
        np.testing.assert_allclose(
            sup.values[K * D :], small_model.variances.ravel(), rtol=1e-5
        )

    def test_two_component_hand_example(self):
        model = GmmModel(
            np.array([0.5, 0.5]), np.array([[0.0], [10.0]]), np.array([[1.0], [1.0]])
        )
        bag = np.array([[0.0], [10.0]])
        cfg = EncoderConfig(kind="sup", mode="mean_var", relevance_r=1.0)
        sup = encode.encode_sup(model, bag, cfg)
        np.testing.assert_allclose(sup.values[:2], [0.0, 10.0], atol=1e-8)
        np.testing.assert_allclose(sup.values[2:], [0.5, 0.5], atol=1e-8)

    def test_matches_dense_reference(self, small_model, rng):
        bag = near_model_bag(small_model, rng)
        for mode, mean_only in [("mean_var", False), ("mean", True)]:
            cfg = EncoderConfig(kind="sup", mode=mode, relevance_r=7.0)
            got = encode.encode_sup(small_model, bag, cfg).values
            want = sup_reference(
                small_model.weights,
                small_model.means,
                small_model.variances,
                bag,
                r=7.0,
                mean_only=mean_only,
            )
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_duplicated_bag_matches_recomputed_value(self, small_model, rng):
        # duplication changes the statistics-vs-prior balance, so assert the
        # exact recomputed value rather than invariance
        bag = near_model_bag(small_model, rng)
        doubled = np.vstack([bag, bag])
        cfg = EncoderConfig(kind="sup", mode="mean_var", relevance_r=4.0)
        got = encode.encode_sup(small_model, doubled, cfg).values
        want = sup_reference(
            small_model.weights, small_model.means, small_model.variances, doubled, r=4.0
        )
        np.testing.assert_allclose(got, want, atol=1e-10)
        single = encode.encode_sup(small_model, bag, cfg).values
        assert not np.allclose(got, single)

    def test_lengths_by_mode(self, small_model, rng):
        bag = near_model_bag(small_model, rng)
        K, D = small_model.K, small_model.D
        mean_only = encode.encode_sup(
            small_model, bag, EncoderConfig(kind="sup", mode="mean")
        )
        both = encode.encode_sup(
            small_model, bag, EncoderConfig(kind="sup", mode="mean_var")
        )
        assert mean_only.values.shape == (K * D,)
        assert both.values.shape == (2 * K * D,)

    def test_variance_update_positive(self, small_model, rng):
        for _ in range(10):
            bag = rng.standard_normal((int(rng.integers(1, 8)), small_model.D)) * 3.0
            cfg = EncoderConfig(kind="sup", mode="mean_var", relevance_r=2.0)
            sup = encode.encode_sup(small_model, bag, cfg)
            K, D = small_model.K, small_model.D
            assert (sup.values[K * D :] > 0).all()

    def test_one_hot_posteriors_give_hard_means(self, rng):
        # components far enough apart that posteriors are effectively one-hot
        model = GmmModel(
            np.array([0.5, 0.5]), np.array([[0.0], [8.0]]), np.ones((2, 1))
        )
        lo = rng.normal(0.0, 0.3, (6, 1))
        hi = rng.normal(8.0, 0.3, (4, 1))
        bag = np.vstack([lo, hi])
        cfg = EncoderConfig(kind="sup", mode="mean", relevance_r=0.0)
        sup = encode.encode_sup(model, bag, cfg)
        np.testing.assert_allclose(sup.values, [lo.mean(), hi.mean()], atol=1e-6)

    def test_instance_order_invariance(self, small_model, rng):
        bag = near_model_bag(small_model, rng)
        cfg = EncoderConfig(kind="sup", mode="mean_var", relevance_r=3.0)
        a = encode.encode_sup(small_model, bag, cfg).values
        b = encode.encode_sup(small_model, bag[::-1], cfg).values
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_validation(self, small_model):
        with pytest.raises(ValueError):
            EncoderConfig(kind="sup", relevance_r=-1.0)
        with pytest.raises(ValueError):
            encode.encode_sup(small_model, np.zeros((0, small_model.D)), EncoderConfig(kind="sup"))
        with pytest.raises(ValueError, match="does not match model"):
            encode.encode_sup(
                small_model, np.zeros((2, small_model.D)), EncoderConfig(kind="sup", K=99)
            )
        with pytest.raises(ValueError):
            encode.encode_sup(small_model, np.zeros((2, small_model.D)), EncoderConfig(kind="fv"))


class TestDispatchAndIO:
    def test_encode_bag_fv_applies_ifv(self, small_model, rng):
        bag = near_model_bag(small_model, rng)
        cfg = EncoderConfig(kind="fv", ifv=True)
        vec = encode.encode_bag(small_model, bag, cfg)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)
        raw = encode.encode_bag(small_model, bag, EncoderConfig(kind="fv", ifv=False))
        assert not np.allclose(vec, raw)

    def test_encode_bag_sup(self, small_model, rng):
        bag = near_model_bag(small_model, rng)
        vec = encode.encode_bag(small_model, bag, EncoderConfig(kind="sup", mode="mean"))
        assert vec.shape == (small_model.K * small_model.D,)

    def test_encoded_file_roundtrip(self, tmp_path, rng):
        values = rng.standard_normal(10)
        path = tmp_path / "b.enc"
        encode.save_encoded(path, values, "sup")
        loaded, kind = encode.load_encoded(path)
        np.testing.assert_array_equal(loaded, values)
        assert kind == "sup"

    def test_encoded_file_errors(self, tmp_path):
        path = tmp_path / "bad.enc"
        path.write_bytes(b"NOPE" * 4)
        with pytest.raises(ValueError):
            encode.load_encoded(path)
        with pytest.raises(ValueError):
            encode.save_encoded(tmp_path / "x.enc", np.zeros(3), "bogus")
