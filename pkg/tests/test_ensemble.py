import math

import numpy as np
import pytest

import synner.autodiff as ad
from synner.autodiff import ParamRegistry, Tensor
from synner.ensemble import (GateParams, KvmnParams, SyntaxAttnParams, attention_band,
                             direct_concat, gate_fuse, gate_fuse_batch, kvmn_forward,
                             kvmn_forward_batch, make_gate_params, make_kvmn_params,
                             make_syntax_attn_params, project, syntax_attention,
                             syntax_attention_batch)


def tensor(data, grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


def kvmn_from(keys, values):
    return KvmnParams(tensor(keys), tensor(values))


class TestKvmn:
    def test_singleton_memory(self):
        params = kvmn_from([[1.0, 0.0], [0.3, 0.4]], [[5.0, 6.0], [7.0, 8.0]])
        s, p = kvmn_forward(tensor([1.0, 0.0]), [1], [1], params)
        assert np.allclose(p.data, [1.0])
        assert np.allclose(s.data, [7.0, 8.0])

    def test_identical_keys_uniform(self):
        params = kvmn_from([[0.2, 0.9]], [[1.0, 2.0]])
        s, p = kvmn_forward(tensor([0.5, -0.3]), [0, 0, 0], [0, 0, 0], params)
        assert np.allclose(p.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)
        assert np.allclose(s.data, [1.0, 2.0])

    def test_hand_softmax_case(self):
        # h=[1,0], keys [[1,0],[0,1]] -> logits [1,0], p=[e/(e+1), 1/(e+1)]
        params = kvmn_from([[1.0, 0.0], [0.0, 1.0]], [[1.0, 2.0], [3.0, 4.0]])
        s, p = kvmn_forward(tensor([1.0, 0.0]), [0, 1], [0, 1], params)
        e = math.e
        expect_p = np.array([e / (e + 1), 1 / (e + 1)])
        assert np.abs(p.data - expect_p).max() < 1e-12
        assert abs(p.data[0] - 0.7311) < 5e-5 and abs(p.data[1] - 0.2689) < 5e-5
        expect_s = expect_p[0] * np.array([1.0, 2.0]) + expect_p[1] * np.array([3.0, 4.0])
        assert np.abs(s.data - expect_s).max() < 1e-12

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(0)
        params = kvmn_from(rng.normal(size=(20, 6)), rng.normal(size=(20, 6)))
        for _ in range(50):
            m = int(rng.integers(1, 8))
            ids = rng.integers(0, 20, size=m)
            _, p = kvmn_forward(tensor(rng.normal(size=6)), ids, ids, params)
            assert abs(p.data.sum() - 1.0) < 1e-12
            assert (p.data >= 0).all()

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        params = kvmn_from(rng.normal(size=(10, 5)), rng.normal(size=(10, 5)))
        h = tensor(rng.normal(size=5))
        keys = np.array([3, 1, 4, 1, 5])
        vals = np.array([9, 2, 6, 5, 3])
        s1, _ = kvmn_forward(h, keys, vals, params)
        perm = rng.permutation(5)
        s2, _ = kvmn_forward(h, keys[perm], vals[perm], params)
        assert np.abs(s1.data - s2.data).max() < 1e-12

    def test_empty_memory_rejected(self):
        params = kvmn_from(np.zeros((2, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            kvmn_forward(tensor([0.0, 0.0, 0.0]), [], [], params)

    def test_batch_matches_per_token(self):
        rng = np.random.default_rng(2)
        params = kvmn_from(rng.normal(size=(15, 4)), rng.normal(size=(15, 4)))
        H = tensor(rng.normal(size=(3, 4)))
        per_token = [([1, 2], [3, 4]), ([5], [6]), ([7, 8, 9], [10, 11, 12])]
        flat_k = np.concatenate([k for k, _ in per_token])
        flat_v = np.concatenate([v for _, v in per_token])
        seg = np.repeat(np.arange(3), [2, 1, 3])
        S, p_flat = kvmn_forward_batch(H, flat_k, flat_v, seg, params)
        lo = 0
        for i, (k, v) in enumerate(per_token):
            s_i, p_i = kvmn_forward(ad.row(H, i), k, v, params)
            assert np.abs(S.data[i] - s_i.data).max() < 1e-12
            assert np.abs(p_flat.data[lo:lo + len(k)] - p_i.data).max() < 1e-12
            lo += len(k)


class TestDirectConcat:
    def test_single_type_identity(self):
        s = tensor([1.0, 2.0])
        out = direct_concat({"pos": s})
        assert out is s

    def test_two_types_dim(self):
        out = direct_concat({"pos": tensor([1.0] * 4), "dep": tensor([2.0] * 4)})
        assert out.shape == (8,)

    def test_fixed_type_order(self):
        out = direct_concat({"dep": tensor([3.0]), "pos": tensor([1.0]),
                             "con": tensor([2.0])})
        assert np.array_equal(out.data, [1.0, 2.0, 3.0])


class TestSyntaxAttention:
    def _params(self, d, types=("pos", "con")):
        reg = ParamRegistry(0)
        return make_syntax_attn_params(reg, types, d)

    def test_single_type(self):
        params = self._params(2, types=("pos",))
        s, a = syntax_attention(tensor([1.0, 0.0]), {"pos": tensor([5.0, 6.0])}, params)
        assert np.allclose(a.data, [1.0])
        assert np.allclose(s.data, [5.0, 6.0])

    def test_symmetric_types_equal_weights(self):
        params = SyntaxAttnParams(
            weight={"pos": tensor(np.ones(4)), "con": tensor(np.ones(4))},
            bias={"pos": tensor(0.0), "con": tensor(0.0)})
        h = tensor([0.1, 0.2])
        s_c = tensor([0.5, -0.2])
        s, a = syntax_attention(h, {"pos": s_c, "con": tensor(s_c.data.copy())}, params)
        assert np.allclose(a.data, [0.5, 0.5], atol=1e-12)

    def test_hand_computed_attention(self):
        # q = [sigmoid(1), sigmoid(0)] -> a = softmax([0.7311, 0.5])
        params = SyntaxAttnParams(
            weight={"pos": tensor([1.0, 0.0, 0.0, 0.0]),
                    "con": tensor([0.0, 0.0, 0.0, 0.0])},
            bias={"pos": tensor(0.0), "con": tensor(0.0)})
        h = tensor([1.0, 0.0])
        summaries = {"pos": tensor([1.0, 0.0]), "con": tensor([0.0, 1.0])}
        s, a = syntax_attention(h, summaries, params)
        q0 = 1 / (1 + math.exp(-1.0))
        q1 = 0.5
        z = math.exp(q0) + math.exp(q1)
        expect_a = [math.exp(q0) / z, math.exp(q1) / z]
        assert np.abs(a.data - expect_a).max() < 1e-12
        assert abs(a.data[0] - 0.5575) < 5e-5 and abs(a.data[1] - 0.4425) < 5e-5
        expect_s = expect_a[0] * summaries["pos"].data + expect_a[1] * summaries["con"].data
        assert np.abs(s.data - expect_s).max() < 1e-12

    def test_attention_band(self):
        lo, hi = attention_band(3)
        assert abs(lo - 1 / (1 + 2 * math.e)) < 1e-15
        assert abs(hi - math.e / (math.e + 2)) < 1e-15
        rng = np.random.default_rng(3)
        reg = ParamRegistry(1)
        params = make_syntax_attn_params(reg, ("pos", "con", "dep"), 4)
        for _ in range(200):
            h = tensor(rng.normal(size=4) * 5)
            summaries = {c: tensor(rng.normal(size=4) * 5) for c in ("pos", "con", "dep")}
            _, a = syntax_attention(h, summaries, params)
            assert abs(a.data.sum() - 1.0) < 1e-12
            assert (a.data > lo).all() and (a.data < hi).all()

    def test_batch_matches_per_token(self):
        rng = np.random.default_rng(4)
        reg = ParamRegistry(2)
        params = make_syntax_attn_params(reg, ("pos", "dep"), 3)
        H = tensor(rng.normal(size=(4, 3)))
        sums = {c: tensor(rng.normal(size=(4, 3))) for c in ("pos", "dep")}
        S, A = syntax_attention_batch(H, sums, params)
        for i in range(4):
            s_i, a_i = syntax_attention(ad.row(H, i),
                                        {c: ad.row(sums[c], i) for c in sums}, params)
            assert np.abs(S.data[i] - s_i.data).max() < 1e-12
            assert np.abs(A.data[i] - a_i.data).max() < 1e-12


class TestGate:
    def test_zero_weights_half_mix(self):
        d = 3
        params = GateParams(tensor(np.zeros((d, d))), tensor(np.zeros((d, d))),
                            tensor(np.zeros(d)))
        h = tensor([1.0, 2.0, 3.0])
        s = tensor([4.0, 5.0, 6.0])
        o, r = gate_fuse(h, s, params)
        assert np.allclose(r.data, 0.5)
        assert np.allclose(o.data, [0.5, 1.0, 1.5, 2.0, 2.5, 3.0])

    def test_saturated_bias_keeps_context(self):
        d = 2
        params = GateParams(tensor(np.zeros((d, d))), tensor(np.zeros((d, d))),
                            tensor([30.0, 30.0]))
        h = tensor([1.0, -1.0])
        s = tensor([9.0, 9.0])
        o, r = gate_fuse(h, s, params)
        assert np.allclose(o.data[:2], h.data, atol=1e-8)
        assert np.abs(o.data[2:]).max() < 1e-8

    def test_hand_computed_1d(self):
        params = GateParams(tensor([[1.0]]), tensor([[0.0]]), tensor([0.0]))
        o, r = gate_fuse(tensor([2.0]), tensor([4.0]), params)
        sig2 = 1 / (1 + math.exp(-2.0))
        assert abs(r.data[0] - sig2) < 1e-12
        assert abs(r.data[0] - 0.8808) < 5e-5
        assert np.abs(o.data - [sig2 * 2, (1 - sig2) * 4]).max() < 1e-12
        assert abs(o.data[0] - 1.7616) < 5e-5 and abs(o.data[1] - 0.4768) < 5e-5

    def test_output_dim_and_range(self):
        rng = np.random.default_rng(5)
        reg = ParamRegistry(3)
        params = make_gate_params(reg, 6)
        for _ in range(50):
            h = tensor(rng.normal(size=6))
            s = tensor(rng.normal(size=6))
            o, r = gate_fuse(h, s, params)
            assert o.shape == (12,)
            assert (r.data > 0).all() and (r.data < 1).all()

    def test_dim_mismatch(self):
        params = GateParams(tensor(np.zeros((2, 2))), tensor(np.zeros((2, 2))),
                            tensor(np.zeros(2)))
        with pytest.raises(ad.ShapeError):
            gate_fuse(tensor([1.0, 2.0]), tensor([1.0, 2.0, 3.0]), params)

    def test_batch_matches_per_token(self):
        rng = np.random.default_rng(6)
        reg = ParamRegistry(4)
        params = make_gate_params(reg, 4)
        H = tensor(rng.normal(size=(3, 4)))
        S = tensor(rng.normal(size=(3, 4)))
        O, R = gate_fuse_batch(H, S, params)
        for i in range(3):
            o_i, r_i = gate_fuse(ad.row(H, i), ad.row(S, i), params)
            assert np.abs(O.data[i] - o_i.data).max() < 1e-12
            assert np.abs(R.data[i] - r_i.data).max() < 1e-12


class TestProject:
    def test_identity(self):
        o = tensor([1.0, 2.0, 3.0])
        u = project(o, tensor(np.eye(3)))
        assert np.allclose(u.data, o.data)

    def test_zero(self):
        u = project(tensor([1.0, 2.0]), tensor(np.zeros((2, 4))))
        assert np.array_equal(u.data, np.zeros(4))

    def test_random_against_numpy(self):
        rng = np.random.default_rng(7)
        o = rng.normal(size=5)
        w = rng.normal(size=(5, 3))
        u = project(tensor(o), tensor(w))
        assert np.allclose(u.data, o @ w)

    def test_shape_error(self):
        with pytest.raises(ad.ShapeError):
            project(tensor([1.0, 2.0]), tensor(np.zeros((3, 4))))


class TestEndToEndGradient:
    def test_kvmn_sa_gate_project_chain(self):
        rng = np.random.default_rng(8)
        d = 4
        reg = ParamRegistry(5)
        kv = {c: make_kvmn_params(reg, c, 8, 8, d) for c in ("pos", "con")}
        sa = make_syntax_attn_params(reg, ("pos", "con"), d)
        gate = make_gate_params(reg, d)
        w_out = reg.matrix("out.w", (2 * d, 3))
        h = Tensor(rng.normal(size=d), requires_grad=True)
        mems = {"pos": ([1, 2, 3], [4, 5, 6]), "con": ([0, 7], [2, 3])}

        def forward():
            summaries = {}
            for c, (k, v) in mems.items():
                s_c, _ = kvmn_forward(h, k, v, kv[c])
                summaries[c] = s_c
            s, _ = syntax_attention(h, summaries, sa)
            o, _ = gate_fuse(h, s, gate)
            return ad.tsum(project(o, w_out))

        tensors = [h] + [t for _, t in reg.trainable()]
        err = ad.finite_diff_check(forward, tensors, max_coords=8)
        assert err < 1e-4
