import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctbnlab import (
    CtbnModel,
    EncodingScheme,
    ModelError,
    NodeFeatureMap,
    ParamSet,
    Trajectory,
    cim_from_beta,
    collect_sufficient_stats,
    config_from_key,
    config_key,
    edges_from_beta,
    gillespie_sample,
    intensity,
    make_model_m1,
)
from ctbnlab.model import context_nodes, encode_parent_config


def full_betas(cards, scheme=None, overrides=None):
    """Zero coefficients for every subproblem, with selected ones replaced."""
    scheme = scheme or EncodingScheme()
    betas = {}
    for w, card in enumerate(cards):
        dim = NodeFeatureMap(cards, w, scheme).dim
        for s in range(card):
            for s2 in range(card):
                if s != s2:
                    betas[(w, s, s2)] = np.zeros(dim)
    for key, vec in (overrides or {}).items():
        betas[key] = np.asarray(vec, dtype=float)
    return betas


class TestCtbnModel:
    def test_row_sums_zero(self, chain3):
        for q in chain3.cims:
            assert np.allclose(q.sum(axis=2), 0.0)

    def test_rejects_wrong_cim_shape(self):
        with pytest.raises(ModelError):
            CtbnModel((2, 2), ((), (0,)),
                      (np.zeros((1, 2, 2)), np.zeros((1, 2, 2))))

    def test_rejects_negative_off_diagonal(self):
        bad = np.array([[[-1.0, 1.0], [-2.0, 2.0]]])
        with pytest.raises(ModelError):
            CtbnModel((2,), ((),), (bad,))

    def test_cycles_are_permitted(self):
        q = np.array([[[-1.0, 1.0], [1.0, -1.0]]] * 2)
        model = CtbnModel((2, 2), ((1,), (0,)), (q, q))
        assert model.parents == ((1,), (0,))

    def test_rejects_self_parent(self):
        q = np.array([[[-1.0, 1.0], [1.0, -1.0]]] * 2)
        with pytest.raises(ModelError):
            CtbnModel((2, 2), ((0,), ()), (q, np.zeros((1, 2, 2))))


class TestConfigKeys:
    @given(st.lists(st.integers(2, 4), min_size=1, max_size=5), st.data())
    def test_roundtrip(self, cards, data):
        cfg = tuple(data.draw(st.integers(0, c - 1)) for c in cards)
        key = config_key(cfg, cards)
        assert config_from_key(key, cards) == cfg

    def test_keys_are_dense(self):
        cards = (2, 3)
        keys = {config_key((a, b), cards) for a in range(2) for b in range(3)}
        assert keys == set(range(6))


class TestEncoding:
    def test_binary_example(self):
        # w=A with binary B, C both at level 1 -> [1, 1, 1]
        assert encode_parent_config((1, 1), 0, (2, 2, 2)).tolist() == [1, 1, 1]

    def test_reference_config_is_intercept_only(self):
        z = encode_parent_config((0, 0), 0, (2, 2, 2))
        assert z.tolist() == [1, 0, 0]

    def test_multistate_example(self):
        # cards (3,4,3), w=A, config (b=2, c=1) -> [1, 0,1,0, 1,0]
        z = encode_parent_config((2, 1), 0, (3, 4, 3))
        assert z.tolist() == [1, 0, 1, 0, 1, 0]

    def test_length_constant_over_configs(self):
        fmap = NodeFeatureMap((3, 2, 4), 1)
        rows = fmap.matrix(fmap.all_configs())
        assert rows.shape == (fmap.config_count(), fmap.dim)
        assert fmap.dim == 1 + (3 - 1) + (4 - 1)

    def test_pairwise_owners(self):
        scheme = EncodingScheme(interactions="pairwise")
        fmap = NodeFeatureMap((2, 2, 2), 0, scheme)
        # intercept, two mains, one product
        assert fmap.dim == 4
        assert fmap.owners[3] == frozenset((1, 2))

    def test_pairwise_skips_same_node_products(self):
        scheme = EncodingScheme(interactions="pairwise")
        fmap = NodeFeatureMap((4, 4, 4), 0, scheme)
        # mains: 3 per context node; products only across the two nodes
        assert fmap.dim == 1 + 6 + 9

    def test_bad_interactions_rejected(self):
        with pytest.raises(ModelError):
            EncodingScheme(interactions="cubic")

    def test_reference_level_out_of_range(self):
        scheme = EncodingScheme(reference_levels=(2, 0))
        with pytest.raises(ModelError):
            NodeFeatureMap((2, 2), 0, scheme)


class TestIntensity:
    def _params(self, overrides):
        return ParamSet((2, 2, 2), EncodingScheme(),
                        full_betas((2, 2, 2), overrides=overrides))

    def test_zero_beta_rate_one(self):
        params = self._params({})
        for cfg in ((0, 0), (0, 1), (1, 0), (1, 1)):
            assert intensity(params, 0, 0, 1, cfg) == pytest.approx(1.0)

    def test_intercept_only(self):
        params = self._params({(0, 0, 1): [np.log(5.0), 0.0, 0.0]})
        assert intensity(params, 0, 0, 1, (1, 0)) == pytest.approx(5.0)

    def test_m1_solved_coefficients(self):
        # log Q(c) = t0 + t1*I(c=1) with Q(0)=1, Q(1)=9 gives t0=0, t1=log 9
        beta = np.array([0.0, np.log(9.0), 0.0])
        params = ParamSet((2, 2, 2), EncodingScheme(),
                          full_betas((2, 2, 2), overrides={(1, 0, 1): beta}))
        assert intensity(params, 1, 0, 1, (0, 0)) == pytest.approx(1.0)
        assert intensity(params, 1, 0, 1, (1, 0)) == pytest.approx(9.0)


class TestCimFromBeta:
    def test_single_node(self):
        betas = full_betas((2,), overrides={(0, 0, 1): [0.7],
                                             (0, 1, 0): [-0.2]})
        params = ParamSet((2,), EncodingScheme(), betas)
        cims = cim_from_beta(params, 0)
        q01, q10 = np.exp(0.7), np.exp(-0.2)
        assert np.allclose(cims, [[[-q01, q01], [q10, -q10]]])

    def test_zero_beta_unit_rates(self):
        params = ParamSet((2, 2), EncodingScheme(), full_betas((2, 2)))
        for w in range(2):
            cims = cim_from_beta(params, w)
            assert np.allclose(cims, [[[-1, 1], [1, -1]]] * 2)

    def test_matches_m1_constructor(self):
        model = make_model_m1(3, np.random.default_rng(5))
        betas = {}
        for w in range(3):
            ctx = context_nodes(3, w)
            fmap = NodeFeatureMap((2, 2, 2), w)
            rows = fmap.matrix(fmap.all_configs())
            for s, s2 in ((0, 1), (1, 0)):
                # read the model's log-rates over full context configs and
                # solve the (overdetermined, consistent) linear system
                rates = []
                for key in range(rows.shape[0]):
                    digits = fmap.all_configs()[key]
                    full = {u: digits[i] for i, u in enumerate(ctx)}
                    pa_cfg = tuple(full[u] for u in model.parents[w])
                    pk = config_key(pa_cfg, tuple(2 for _ in model.parents[w]))
                    rates.append(model.cims[w][pk, s, s2])
                beta, *_ = np.linalg.lstsq(rows, np.log(rates), rcond=None)
                betas[(w, s, s2)] = beta
        params = ParamSet((2, 2, 2), EncodingScheme(), betas)
        for w in range(3):
            stack = cim_from_beta(params, w)
            ctx = context_nodes(3, w)
            fmap = NodeFeatureMap((2, 2, 2), w)
            for key, digits in enumerate(fmap.all_configs()):
                full = {u: digits[i] for i, u in enumerate(ctx)}
                pa_cfg = tuple(full[u] for u in model.parents[w])
                pk = config_key(pa_cfg, tuple(2 for _ in model.parents[w]))
                assert np.allclose(stack[key], model.cims[w][pk], atol=1e-8)


class TestEdgesFromBeta:
    def test_zero_beta_no_edges(self):
        params = ParamSet((2, 2, 2), EncodingScheme(), full_betas((2, 2, 2)))
        assert edges_from_beta(params) == frozenset()

    def test_single_coordinate(self):
        beta = np.zeros(3)
        beta[1] = 0.3  # first context node of node 0 is node 1
        params = ParamSet((2, 2, 2), EncodingScheme(),
                          full_betas((2, 2, 2), overrides={(0, 0, 1): beta}))
        assert edges_from_beta(params, 0.0) == frozenset({(1, 0)})
        assert edges_from_beta(params, 0.5) == frozenset()

    def test_interaction_contributes_both_endpoints(self):
        scheme = EncodingScheme(interactions="pairwise")
        beta = np.zeros(4)
        beta[3] = 1.0  # the product coordinate of context nodes (1, 2)
        params = ParamSet((2, 2, 2), scheme,
                          full_betas((2, 2, 2), scheme, {(0, 0, 1): beta}))
        assert edges_from_beta(params, 0.0) == frozenset({(1, 0), (2, 0)})

    def test_recoding_preserves_edges(self):
        # flip the reference level of node 1 and convert beta exactly
        rng = np.random.default_rng(0)
        base = EncodingScheme()
        beta = np.array([0.4, rng.normal(), 0.0])  # depends on node 1 only
        params = ParamSet((2, 2, 2), base,
                          full_betas((2, 2, 2), overrides={(0, 0, 1): beta}))
        flipped = EncodingScheme(reference_levels=(0, 1, 0))
        # log q(c) = b0 + b1*I(c1=1)  ==  (b0+b1) + (-b1)*I(c1=0)
        beta2 = np.array([beta[0] + beta[1], -beta[1], 0.0])
        params2 = ParamSet((2, 2, 2), flipped,
                           full_betas((2, 2, 2), flipped, {(0, 0, 1): beta2}))
        fmap = NodeFeatureMap((2, 2, 2), 0, base)
        fmap2 = NodeFeatureMap((2, 2, 2), 0, flipped)
        for cfg in fmap.all_configs():
            assert fmap.row(cfg) @ beta == pytest.approx(fmap2.row(cfg) @ beta2)
        assert edges_from_beta(params, 0.0) == edges_from_beta(params2, 0.0)


class TestTrajectory:
    def test_rejects_unsorted_times(self):
        with pytest.raises(ModelError):
            Trajectory(10.0, [2.0, 1.0], [[0], [1], [0]])

    def test_rejects_multi_node_jump(self):
        with pytest.raises(ModelError):
            Trajectory(10.0, [1.0], [[0, 0], [1, 1]])

    def test_virtual_flag_allows_self_transition(self):
        traj = Trajectory(10.0, [1.0], [[0, 0], [0, 0]], allow_virtual=True)
        assert traj.times.size == 1

    def test_initial_state(self):
        traj = Trajectory(5.0, [1.0], [[0, 1], [1, 1]])
        assert traj.initial_state.tolist() == [0, 1]


class TestSufficientStats:
    def test_single_node_no_jumps(self):
        traj = Trajectory(10.0, [], [[1]])
        stats = collect_sufficient_stats(traj, (2,))
        assert stats.occupation == {(0, 0, 1): 10.0}
        assert dict(stats.jump_counts) == {}

    def test_hand_trajectory(self):
        # node 0 jumps 0->1 at t=2 (node 1 still 0); node 1 jumps 0->1 at t=5
        traj = Trajectory(10.0, [2.0, 5.0], [[0, 0], [1, 0], [1, 1]])
        stats = collect_sufficient_stats(traj, (2, 2))
        occ = dict(stats.occupation)
        cnt = dict(stats.jump_counts)
        assert occ[(0, 0, 0)] == pytest.approx(2.0)
        assert occ[(0, 0, 1)] == pytest.approx(3.0)
        assert occ[(0, 1, 1)] == pytest.approx(5.0)
        assert cnt[(0, 0, 0, 1)] == 1
        # node 1 spent [0,2) under context (node0=0) in state 0
        assert occ[(1, 0, 0)] == pytest.approx(2.0)
        assert occ[(1, 1, 0)] == pytest.approx(3.0)
        assert occ[(1, 1, 1)] == pytest.approx(5.0)
        assert cnt[(1, 1, 0, 1)] == 1

    def test_rejects_virtual(self):
        traj = Trajectory(10.0, [1.0], [[0], [0]], allow_virtual=True)
        with pytest.raises(ModelError):
            collect_sufficient_stats(traj, (2,))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(2, 5))
    def test_conservation(self, seed, d):
        rng = np.random.default_rng(seed)
        model = make_model_m1(d, rng)
        traj = gillespie_sample(model, 8.0, rng)
        stats = collect_sufficient_stats(traj, model.cardinalities)
        per_node_time = {}
        per_node_jumps = {}
        for (w, _key, _s), t in stats.occupation.items():
            per_node_time[w] = per_node_time.get(w, 0.0) + t
        for (w, _key, _s, _s2), n in stats.jump_counts.items():
            per_node_jumps[w] = per_node_jumps.get(w, 0) + n
        jumps_by_node = np.zeros(d, dtype=int)
        for i in range(traj.times.size):
            w = int(np.flatnonzero(traj.states[i + 1] != traj.states[i])[0])
            jumps_by_node[w] += 1
        for w in range(d):
            assert per_node_time[w] == pytest.approx(8.0, abs=1e-9 * 8.0)
            assert per_node_jumps.get(w, 0) == jumps_by_node[w]
        assert stats.total_jumps() == traj.times.size
