import numpy as np
import pytest

from weakmil import milsvm, synth
from weakmil.milsvm import LinearModel, MilTrainConfig

from oracles import enumerate_dual_qp, random_separable_problem

TIGHT = MilTrainConfig(C=100.0, solver_tol=1e-10, solver_max_iters=200000)


def mil_dataset(n_bags=40, witness_rate=0.5, distance=6.0, seed=3, bag_size=(6, 12)):
    """Linearly separable bags: concept cluster disjoint from the background."""
    concept, background = synth.separated_mixtures(4, distance)
    cfg = synth.SynthConfig(
        n_bags=n_bags,
        bag_size_range=bag_size,
        witness_rate=witness_rate,
        D=4,
        concept=concept,
        background=background,
        seed=seed,
    )
    ds = synth.generate(cfg)
    labels = np.array([ds.labels[cfg.event][b] for b in ds.bag_ids])
    return ds, labels


class TestLinearSvm:
    def test_separable_pair_analytic_solution(self):
        X = np.array([[-1.0], [1.0]])
        y = np.array([-1.0, 1.0])
        m = milsvm.train_linear_svm(X, y, TIGHT)
        assert m.w[0] == pytest.approx(1.0, abs=1e-3)
        assert m.b == pytest.approx(0.0, abs=1e-3)
        margins = y * (X @ m.w + m.b)
        np.testing.assert_allclose(margins, 1.0, atol=1e-3)

    def test_label_flip_negates_model(self):
        X = np.array([[-1.0, 0.3], [1.0, -0.2], [2.0, 0.1]])
        y = np.array([-1.0, 1.0, 1.0])
        cfg = MilTrainConfig(C=5.0, solver_tol=1e-10, solver_max_iters=200000)
        a = milsvm.train_linear_svm(X, y, cfg)
        b = milsvm.train_linear_svm(X, -y, cfg)
        np.testing.assert_allclose(a.w, -b.w, atol=1e-6)
        assert a.b == pytest.approx(-b.b, abs=1e-6)

    def test_duplicated_rows_with_halved_c(self, rng):
        X = rng.standard_normal((8, 3))
        y = np.where(X[:, 0] > 0, 1.0, -1.0)
        base = MilTrainConfig(C=2.0, solver_tol=1e-10, solver_max_iters=200000)
        half = MilTrainConfig(C=1.0, solver_tol=1e-10, solver_max_iters=200000)
        a = milsvm.train_linear_svm(X, y, base)
        b = milsvm.train_linear_svm(np.vstack([X, X]), np.concatenate([y, y]), half)
        np.testing.assert_allclose(a.w, b.w, atol=1e-5)
        assert a.b == pytest.approx(b.b, abs=1e-5)

    def test_matches_enumerated_dual_optimum(self, rng):
        for _ in range(5):
            X, y = random_separable_problem(rng)
            C = float(rng.choice([0.5, 1.0, 10.0]))
            cfg = MilTrainConfig(C=C, solver_tol=1e-10, solver_max_iters=200000)
            m = milsvm.train_linear_svm(X, y, cfg)
            wo, bo, dual_val = enumerate_dual_qp(X, y, C)
            oracle = LinearModel(wo, bo, C)
            p_solver = milsvm.hinge_objective(m, X, y)
            p_oracle = milsvm.hinge_objective(oracle, X, y)
            assert abs(p_solver - p_oracle) < 1e-3
            assert abs(p_oracle - dual_val) < 1e-6  # strong duality sanity check

    def test_objective_value_on_analytic_pair(self):
        X = np.array([[-1.0], [1.0]])
        y = np.array([-1.0, 1.0])
        m = LinearModel(np.array([1.0]), 0.0, 100.0)
        assert milsvm.hinge_objective(m, X, y) == pytest.approx(0.5)

    def test_input_validation(self):
        cfg = MilTrainConfig()
        with pytest.raises(ValueError, match="each class"):
            milsvm.train_linear_svm(np.ones((3, 2)), np.ones(3), cfg)
        with pytest.raises(ValueError, match="-1 or \\+1"):
            milsvm.train_linear_svm(np.ones((2, 2)), np.array([0.0, 1.0]), cfg)
        with pytest.raises(ValueError):
            milsvm.train_linear_svm(np.array([[np.nan], [1.0]]), np.array([1.0, -1.0]), cfg)
        with pytest.raises(ValueError):
            milsvm.train_linear_svm(np.ones((3, 2)), np.array([1.0, -1.0]), cfg)

    def test_deterministic(self, rng):
        X = rng.standard_normal((50, 4))
        y = np.where(X[:, 1] > 0, 1.0, -1.0)
        cfg = MilTrainConfig(C=1.0)
        a = milsvm.train_linear_svm(X, y, cfg)
        b = milsvm.train_linear_svm(X, y, cfg)
        np.testing.assert_array_equal(a.w, b.w)
        assert a.b == b.b


class TestDecision:
    def test_constant_model(self):
        m = LinearModel(np.zeros(3), 0.5, 1.0)
        assert milsvm.decision(m, np.array([9.0, -2.0, 4.0])) == 0.5

    def test_basis_vector(self):
        m = LinearModel(np.array([1.0, 0.0]), 0.0, 1.0)
        assert milsvm.decision(m, np.array([3.0, 7.0])) == 3.0

    def test_midpoint_of_separable_pair(self):
        X = np.array([[-1.0], [1.0]])
        y = np.array([-1.0, 1.0])
        m = milsvm.train_linear_svm(X, y, TIGHT)
        assert milsvm.decision(m, np.zeros(1)) == pytest.approx(0.0, abs=1e-3)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            milsvm.decision(LinearModel(np.zeros(2), 0.0, 1.0), np.zeros(3))


class TestMiSvm:
    def test_separable_converges_and_ranks_perfectly(self):
        ds, labels = mil_dataset()
        train_bags, train_y = ds.bags[:30], labels[:30]
        test_bags, test_y = ds.bags[30:], labels[30:]
        model, state = milsvm.train_misvm(train_bags, train_y)
        assert state.converged
        # every true witness instance in the training bags scores positive
        for bag, truth, lab in zip(train_bags, ds.truth[:30], train_y):
            if lab == 1:
                scores = bag @ model.w + model.b
                assert (scores[truth] > 0).all()
        test_scores = np.array([milsvm.bag_score(model, b) for b in test_bags])
        order = np.argsort(-test_scores)
        ranked = test_y[order]
        n_pos = (ranked == 1).sum()
        assert (ranked[:n_pos] == 1).all()  # perfect ranking, AP would be 1.0

    def test_positive_bag_constraint_every_iteration(self):
        ds, labels = mil_dataset(n_bags=24, witness_rate=0.3, distance=3.0, seed=11)
        seen_iterations = []

        def check(iteration, per_bag_labels):
            seen_iterations.append(iteration)
            for lab, per_bag in zip(labels, per_bag_labels):
                if lab == 1:
                    assert (per_bag == 1).sum() >= 1
                else:
                    assert (per_bag == -1).all()

        milsvm.train_misvm(ds.bags, labels, iteration_callback=check)
        assert seen_iterations  # the callback actually ran

    def test_all_negative_positive_bag_gets_forced_witness(self):
        rng = np.random.default_rng(0)
        neg_bags = [rng.normal(0.0, 0.5, (6, 2)) for _ in range(8)]
        pos_bags = [np.vstack([rng.normal(6.0, 0.5, (2, 2)), rng.normal(0, 0.5, (4, 2))]) for _ in range(7)]
        # a "positive" bag living entirely in the negative region
        decoy = rng.normal(0.0, 0.5, (5, 2)) - 3.0
        bags = neg_bags + pos_bags + [decoy]
        labels = np.array([-1] * 8 + [1] * 8)
        model, state = milsvm.train_misvm(bags, labels)
        decoy_labels = state.instance_labels[-1]
        assert (decoy_labels == 1).sum() == 1  # exactly the forced argmax

    def test_consistent_labels_converge_in_one_iteration(self):
        ds, labels = mil_dataset(witness_rate=1.0, seed=5)
        _, state = milsvm.train_misvm(ds.bags, labels)
        assert state.converged
        assert state.iteration == 1

    def test_requires_both_bag_classes(self):
        bags = [np.zeros((2, 2)), np.ones((2, 2))]
        with pytest.raises(ValueError):
            milsvm.train_misvm(bags, [1, 1])
        with pytest.raises(ValueError):
            milsvm.train_misvm(bags, [-1, -1])

    def test_termination_bound(self):
        ds, labels = mil_dataset(n_bags=30, witness_rate=0.2, distance=1.0, seed=2)
        cfg = MilTrainConfig(max_outer_iters=50)
        _, state = milsvm.train_misvm(ds.bags, labels, cfg)
        assert state.iteration <= 50
        assert state.converged or state.cycle_detected or state.iteration == 50
        assert len(state.assignment_history) >= 1


class TestMISVM:
    def test_separable_witnesses_are_true_positives(self):
        ds, labels = mil_dataset()
        train_bags, train_y = ds.bags[:30], labels[:30]
        model, state = milsvm.train_MISVM(train_bags, train_y)
        assert state.converged
        for bag_index, witness_index in state.witnesses.items():
            assert ds.truth[bag_index][witness_index]
        test_scores = np.array([milsvm.bag_score(model, b) for b in ds.bags[30:]])
        ranked = labels[30:][np.argsort(-test_scores)]
        n_pos = (ranked == 1).sum()
        assert (ranked[:n_pos] == 1).all()

    def test_exactly_one_witness_per_positive_bag(self):
        ds, labels = mil_dataset(n_bags=20, seed=9)
        n_pos = int((labels == 1).sum())

        def check(iteration, witnesses):
            assert len(witnesses) == n_pos
            assert set(witnesses) == set(np.flatnonzero(labels == 1))

        _, state = milsvm.train_MISVM(ds.bags, labels, iteration_callback=check)
        assert len(state.witnesses) == n_pos

    def test_singleton_positive_bags_reduce_to_plain_svm(self, rng):
        pos = [rng.normal(3.0, 0.5, (1, 2)) for _ in range(6)]
        neg = [rng.normal(0.0, 0.5, (4, 2)) for _ in range(4)]
        bags = pos + neg
        labels = np.array([1] * 6 + [-1] * 4)
        cfg = MilTrainConfig(C=1.0, solver_tol=1e-8, solver_max_iters=50000)
        model, state = milsvm.train_MISVM(bags, labels, cfg)
        assert state.converged
        X = np.vstack(pos + neg)
        y = np.concatenate([np.ones(6), -np.ones(sum(b.shape[0] for b in neg))])
        direct = milsvm.train_linear_svm(X, y, cfg)
        np.testing.assert_array_equal(model.w, direct.w)
        assert model.b == direct.b

    def test_identical_witness_maps_terminate(self):
        ds, labels = mil_dataset(n_bags=16, seed=4)
        _, state = milsvm.train_MISVM(ds.bags, labels)
        assert state.converged
        assert state.iteration <= 50


class TestModelIO:
    def test_roundtrip_with_sidecar(self, tmp_path, rng):
        model = LinearModel(rng.standard_normal(5), -0.75, 2.5)
        path = tmp_path / "m.svm"
        milsvm.save_linear_model(path, model, iterations=7, converged=True)
        loaded, meta = milsvm.load_linear_model(path)
        np.testing.assert_array_equal(loaded.w, model.w)
        assert loaded.b == model.b
        assert loaded.C == 2.5
        assert meta == {"C": 2.5, "iterations": 7, "converged": True}

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.svm"
        path.write_bytes(b"WRONG!" + b"\x00" * 20)
        with pytest.raises(ValueError):
            milsvm.load_linear_model(path)
