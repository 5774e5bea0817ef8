import numpy as np
import pytest
from conftest import FIG2_MISSING, fig2_sequence, numeric_grads, rel_err, small_task
from hypothesis import given, settings
from hypothesis import strategies as st

from treelstm.cell import LstmState, cell_forward, run_chain
from treelstm.complexity import MultCounter, leaf_calls_for_pattern
from treelstm.data import MaskedSequence, make_next_value_targets
from treelstm.model import (TreeLstmConfig, TreeLstmModel, grow_window, loss_gradients,
                            sequence_backward, sequence_forward, step_forward, total_loss,
                            window_pattern)
from treelstm.presence import active_set
from treelstm.trainer import loss_grad


def model_for(L=2, q=3, m=1, seed=0, **kw):
    kw.setdefault("init_variance", 0.25)
    return TreeLstmModel.init(TreeLstmConfig(L=L, q=q, m=m, seed=seed, **kw))


def state_before(model, seq, t):
    """Main state holding every present input at slots < t - L."""
    L = model.config.L
    xs = seq.inputs[:t - L][seq.present[:t - L]]
    tr = run_chain(model.main, xs, model.initial_state())
    return tr.state(len(tr))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(L=0), dict(q=0), dict(bptt_horizon=0),
                                    dict(leaf_selection=[4]), dict(leaf_selection=[0]),
                                    dict(leaf_init="sideways")])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            TreeLstmConfig(**kw)

    def test_leaf_lists(self):
        assert TreeLstmConfig(L=3).leaves == list(range(1, 8))
        assert TreeLstmConfig(L=3, leaf_selection=[5, 1, 5]).networks == [0, 1, 5]
        assert TreeLstmConfig(L=2, leaf_selection=[]).networks == [0]

    def test_model_shapes(self):
        m = model_for(L=3, q=4, m=2)
        assert len(m.leaves) == 7
        assert m.w_tilde.shape == (8, 4 + 6)
        assert m.w_hat.shape == (5,)
        shared = model_for(L=3, q=4, shared_combination=True)
        assert shared.w_tilde.shape == (1, 10)

    def test_mismatched_leaves_rejected(self):
        m = model_for(L=2)
        with pytest.raises(ValueError):
            TreeLstmModel(m.config, m.main, {1: m.leaves[1]}, m.w_tilde, m.w_hat)

    def test_same_seed_same_model(self):
        assert model_for(seed=4) == model_for(seed=4)
        assert model_for(seed=4) != model_for(seed=5)


class TestWindowPattern:
    def test_fig2(self, fig2):
        assert window_pattern(fig2, 10, 3) == (1, 1, 1)
        assert window_pattern(fig2, 9, 3) == (0, 1, 1)
        assert window_pattern(fig2, 7, 2) == (0, 0)

    def test_out_of_range(self, fig2):
        with pytest.raises(IndexError):
            window_pattern(fig2, 11, 3)
        with pytest.raises(IndexError):
            window_pattern(fig2, 1, 3)


def seq_with_window(bits, N=8):
    """Sequence whose last L slots carry ``bits``; everything else present."""
    present = np.ones(N, dtype=bool)
    present[N - len(bits):] = np.array(bits, dtype=bool)
    rng = np.random.default_rng(1)
    return make_next_value_targets(MaskedSequence(rng.normal(size=(N, 1)), present))


class TestStepForward:
    def test_full_window_uses_all_four_networks(self):
        seq = seq_with_window((1, 1))
        model = model_for(L=2)
        out = step_forward(model, seq, 7, state_before(model, seq, 7))
        assert sorted(out.h_bar) == [0, 1, 2, 3]
        assert np.all(out.alpha > 0)

    def test_old_slot_only(self):
        seq = seq_with_window((1, 0))
        model = model_for(L=2)
        out = step_forward(model, seq, 7, state_before(model, seq, 7))
        assert sorted(out.h_bar) == [0, 2]
        assert out.alpha[1] == 0.0 and out.alpha[3] == 0.0

    def test_empty_window(self):
        seq = seq_with_window((0, 0, 0))
        model = model_for(L=3)
        out = step_forward(model, seq, 7, state_before(model, seq, 7))
        assert out.alpha[0] == 1.0 and not out.alpha[1:].any()
        assert np.array_equal(out.h_hat, out.h_bar[0])

    def test_leaf_starts_from_main_state(self):
        seq = seq_with_window((0, 1))
        model = model_for(L=2)
        out = step_forward(model, seq, 7, state_before(model, seq, 7))
        s, _ = cell_forward(model.leaves[1], seq.inputs[7], out.main_state)
        assert np.array_equal(out.h_bar[1], s.h)

    def test_before_variant_starts_one_update_earlier(self):
        seq = seq_with_window((0, 1))
        model = model_for(L=2, leaf_init="before")
        before = state_before(model, seq, 7)
        out = step_forward(model, seq, 7, before)
        s, _ = cell_forward(model.leaves[1], seq.inputs[7], before)
        assert np.array_equal(out.h_bar[1], s.h)


class TestSequenceForward:
    def test_fig2_main_network_calls(self, fig2):
        model = model_for(L=3, leaf_selection=[])
        cnt = MultCounter()
        res = sequence_forward(model, fig2, cnt)
        assert cnt.cell_calls == 8
        assert len(res.steps) == 11 - 3

    def test_fig2_leaf_calls(self, fig2):
        cnt = MultCounter()
        sequence_forward(model_for(L=3), fig2, cnt)
        leaf = sum(leaf_calls_for_pattern(sum(window_pattern(fig2, t, 3))) for t in range(3, 11))
        assert cnt.cell_calls == 8 + leaf

    def test_all_missing(self):
        seq = MaskedSequence(np.ones((9, 1)), np.zeros(9, dtype=bool))
        model = model_for(L=2)
        cnt = MultCounter()
        res = sequence_forward(model, seq, cnt)
        assert cnt.cell_calls == 0
        assert np.all(res.d_hat == model.w_hat[-1])

    def test_too_short(self):
        with pytest.raises(ValueError):
            sequence_forward(model_for(L=3), fig2_sequence().slice(0, 3))

    @pytest.mark.parametrize("L", [1, 2, 3])
    @pytest.mark.parametrize("leaf_init", ["after", "before"])
    def test_batched_equals_step_oracle(self, L, leaf_init):
        seq = small_task(n=20, m=2, ratio=0.4, seed=L)
        model = model_for(L=L, m=2, leaf_init=leaf_init, seed=L)
        res = sequence_forward(model, seq)
        for r, t in enumerate(res.steps):
            out = step_forward(model, seq, int(t), state_before(model, seq, int(t)))
            assert res.d_hat[r] == pytest.approx(out.d_hat, abs=1e-13)
            assert np.allclose(res.alpha[r], out.alpha, atol=1e-13, rtol=0)
            assert np.all((res.alpha[r] == 0) == (out.alpha == 0))

    def test_main_trajectory_is_a_plain_lstm_run(self):
        seq = small_task(n=40, m=1, ratio=0.5, seed=3)
        model = model_for(L=2)
        res = sequence_forward(model, seq)
        s = model.initial_state()
        states = [s]
        for x in seq.inputs[seq.present]:
            s, _ = cell_forward(model.main, x, s)
            states.append(s)
        main = res.main_states
        assert np.array_equal(main.H, np.array([st.h for st in states[:len(main) + 1]]))
        assert np.array_equal(res.final_state.h, states[-1].h)
        assert np.array_equal(res.final_state.c, states[-1].c)

    def test_complete_data_matches_standalone_chain(self):
        seq = make_next_value_targets(MaskedSequence.complete(np.random.default_rng(0).normal(size=(15, 2))))
        model = model_for(L=3, m=2)
        res = sequence_forward(model, seq)
        tr = run_chain(model.main, seq.inputs, model.initial_state())
        assert np.array_equal(res.final_state.c, tr.C[-1])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.0, 1.0))
    def test_missing_payloads_are_never_read(self, seed, ratio):
        seq = small_task(n=16, m=1, ratio=ratio, seed=seed)
        model = model_for(L=2, seed=seed % 7)
        base = sequence_forward(model, seq)
        noisy = seq.copy()
        noisy.inputs[~noisy.present] = np.random.default_rng(seed).normal(size=(seq.n_missing, 1)) * 1e3
        other = sequence_forward(model, noisy)
        assert np.array_equal(base.d_hat, other.d_hat)

    def test_combination_contract(self):
        seq = small_task(n=60, m=1, ratio=0.35, seed=9)
        model = model_for(L=3)
        res = sequence_forward(model, seq)
        for r, t in enumerate(res.steps):
            act = active_set(window_pattern(seq, int(t), 3))
            assert abs(res.alpha[r][act].sum() - 1.0) <= 1e-12
            off = np.setdiff1d(np.arange(8), act)
            assert np.all(res.alpha[r][off] == 0.0)

    def test_leaf_subset_respects_configuration(self):
        seq = small_task(n=30, m=1, ratio=0.2, seed=1)
        model = model_for(L=2, leaf_selection=[3])
        res = sequence_forward(model, seq)
        assert not res.alpha[:, [1, 2]].any()

    def test_main_only_is_a_plain_regressor(self):
        seq = small_task(n=25, m=1, ratio=0.3, seed=2)
        model = model_for(L=2, leaf_selection=[])
        res = sequence_forward(model, seq)
        hs = res.main_states.H[res.cache.k_after]
        assert np.array_equal(res.d_hat, hs @ model.w_hat[:-1] + model.w_hat[-1])


class TestBackward:
    def test_zero_loss_gradients(self):
        seq = small_task()
        model = model_for(L=2, m=2)
        res = sequence_forward(model, seq)
        grads = sequence_backward(model, res, np.zeros(len(res.steps)))
        assert all(not g.any() for g in grads.values())

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("variant", [dict(), dict(leaf_init="before"),
                                         dict(shared_combination=True),
                                         dict(leaf_selection=[2, 3])])
    def test_matches_finite_differences(self, seed, variant):
        seq = small_task(n=12, m=2, ratio=0.3, seed=seed)
        model = model_for(L=2, q=3, m=2, seed=seed, bptt_horizon=12, **variant)
        _, grads = loss_gradients(model, seq)
        num = numeric_grads(lambda: total_loss(model, seq), model.parameters())
        for name in grads:
            assert rel_err(grads[name], num[name]) < 1e-5, name

    def test_deep_window_gradients(self):
        seq = small_task(n=14, m=1, ratio=0.25, seed=4)
        model = model_for(L=4, q=2, m=1, seed=4, bptt_horizon=14)
        _, grads = loss_gradients(model, seq)
        num = numeric_grads(lambda: total_loss(model, seq), model.parameters())
        for name in grads:
            assert rel_err(grads[name], num[name]) < 1e-5, name

    def test_inactive_combination_vector_gets_no_gradient(self):
        # present slots never adjacent, so the [1, 1] network is never active
        present = np.arange(20) % 3 == 0
        seq = make_next_value_targets(MaskedSequence(np.random.default_rng(0).normal(size=(20, 1)), present))
        seq.has_target[:] = True
        model = model_for(L=2)
        _, grads = loss_gradients(model, seq)
        assert not grads["w_tilde"][3].any()
        assert not grads["leaf3.W"].any() and not grads["leaf3.R"].any()
        before = sequence_forward(model, seq).d_hat
        model.w_tilde[3] += 10.0
        assert np.array_equal(sequence_forward(model, seq).d_hat, before)

    def test_truncated_horizon_changes_only_main_gradients(self):
        seq = small_task(n=30, m=1, ratio=0.2, seed=6)
        full = model_for(L=2, bptt_horizon=1000, seed=6)
        short = full.copy()
        short.config.bptt_horizon = 3
        _, gf = loss_gradients(full, seq)
        _, gs = loss_gradients(short, seq)
        assert not np.allclose(gf["main.R"], gs["main.R"])
        for name in ("w_hat", "w_tilde", "leaf3.W"):
            assert np.array_equal(gf[name], gs[name])

    def test_segment_gradients_use_trainer_protocol(self):
        seq = small_task(n=20, m=1, ratio=0.3, seed=8)
        model = model_for(L=2, bptt_horizon=50)
        steps = model.step_range(seq)
        cache = model.forward(seq, steps.start, steps.stop, model.initial_state())
        g1 = model.backward(cache, loss_grad(cache))
        _, g2 = loss_gradients(model, seq)
        for k in g1:
            assert np.allclose(g1[k], g2[k], atol=1e-14)


class TestGrowWindow:
    def test_one_to_two_inherits_low_leaf(self):
        small = model_for(L=1, q=3)
        big = grow_window(small)
        assert big.config.L == 2
        assert big.leaves[1] == small.leaves[1]
        assert big.main == small.main
        assert np.array_equal(big.w_hat, small.w_hat)
        assert big.leaves[2] != small.leaves[1] and big.leaves[3] != small.leaves[1]

    def test_combination_vectors_zero_padded(self):
        small = model_for(L=1, q=3)
        big = grow_window(small)
        for col in (0, 1):
            old = small.w_tilde[col]
            new = big.w_tilde[col]
            assert new[0] == 0.0 and new[2] == 0.0
            assert new[1] == old[0] and new[3] == old[1]
            assert np.array_equal(new[4:], old[2:])

    def test_inherited_outputs_match_on_sparse_windows(self):
        present = np.arange(24) % 2 == 0
        seq = make_next_value_targets(MaskedSequence(np.random.default_rng(2).normal(size=(24, 1)), present))
        small = model_for(L=1, q=3)
        big = grow_window(small)
        rs, rb = sequence_forward(small, seq), sequence_forward(big, seq)
        for t in range(2, 24, 2):
            a = rs.cache.h_bar[t - 1]
            b = rb.cache.h_bar[t - 2]
            assert np.array_equal(a[0], b[0])
            assert np.array_equal(a[1], b[1])

    def test_twice_grown_inheritance(self):
        m1 = model_for(L=1, q=2)
        m3 = grow_window(grow_window(m1))
        inherited = [i for i in m3.config.leaves if m3.leaves[i] == m1.leaves[1]]
        assert inherited == [1]
        assert m3.main == m1.main
        assert len(m3.leaves) == 7

    def test_shared_combination(self):
        big = grow_window(model_for(L=2, q=3, shared_combination=True))
        assert big.w_tilde.shape == (1, 3 + 6)
