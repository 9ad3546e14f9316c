import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coreguide.cnf import Cnf
from coreguide.graph import encode
from coreguide.model import (
    BadMagic,
    ModelConfig,
    NumericalOverflow,
    Sample,
    ShapeMismatch,
    TruncatedCheckpoint,
    VersionMismatch,
    cross_entropy_loss,
    embed_nodes,
    finite_difference_grads,
    flip,
    focal_loss,
    forward_backward,
    head_forward,
    head_pairs,
    init_params,
    instance_loss,
    kl_loss,
    load_checkpoint,
    predict,
    relative_error,
    save_checkpoint,
    train,
    wgcn_forward,
)

from conftest import random_cnf

SMALL = ModelConfig(d=2, L=2, hidden=4)


def rename(cnf: Cnf, perm: np.ndarray) -> Cnf:
    """Variable v becomes perm[v-1]."""
    return Cnf(cnf.num_vars, tuple(tuple(int(np.sign(x)) * int(perm[abs(x) - 1]) for x in c) for c in cnf.clauses))


def perturbed(cfg, seed, scale=0.3):
    rng = np.random.default_rng(seed + 1000)
    p = init_params(cfg, seed)
    return {k: v + rng.normal(0, scale, v.shape) for k, v in p.items()}


class TestInit:
    def test_deterministic(self):
        a, b = init_params(SMALL, 3), init_params(SMALL, 3)
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)

    def test_zero_biases(self):
        p = init_params(SMALL, 0)
        for k in ("b_init", "b_out.0", "b_out.1", "b1", "b2"):
            assert not p[k].any()

    def test_shapes(self):
        p = init_params(SMALL, 0)
        assert p["W1"].shape == (8, 4)
        assert p["W_init"].shape == (2, 4)
        assert p["W_out.1"].shape == (8, 4)

    def test_glorot_bound(self):
        p = init_params(SMALL, 0)
        lim = math.sqrt(6 / (8 + 4))
        assert np.abs(p["W1"]).max() <= lim

    def test_shared(self):
        p = init_params(ModelConfig(d=2, L=3, hidden=4, shared_weights=True), 0)
        assert "W_out.0" in p and "W_out.1" not in p

    @pytest.mark.parametrize("bad", [dict(d=0), dict(alpha=1.0), dict(gamma=-1), dict(loss_kind="mse")])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            ModelConfig(**bad)


class TestEmbed:
    def test_zero_map(self):
        p = init_params(SMALL, 0)
        p["W_init"][:] = 0
        assert not embed_nodes(p, np.array([[3.0, 1], [0, -1]])).any()

    def test_identical_features(self):
        p = init_params(SMALL, 0)
        H = embed_nodes(p, np.array([[2.0, 1], [2.0, 1]]))
        assert np.array_equal(H[0], H[1])

    def test_hand_set(self):
        p = init_params(SMALL, 0)
        p["W_init"] = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
        assert embed_nodes(p, np.array([[2.0, -1.0]])).tolist() == [[2, -1, 0, 0]]


class TestFlip:
    def test_four_rows(self):
        H = np.array([[1], [2], [3], [4]])
        assert flip(H).ravel().tolist() == [3, 4, 1, 2]

    def test_two_rows(self):
        assert flip(np.array([[1, 2], [3, 4]])).tolist() == [[3, 4], [1, 2]]

    def test_odd(self):
        with pytest.raises(ValueError):
            flip(np.zeros((3, 2)))

    @given(st.integers(1, 20), st.integers(1, 5))
    def test_involution(self, half, k):
        H = np.random.default_rng(half * 7 + k).normal(size=(2 * half, k))
        assert np.array_equal(flip(flip(H)), H)


class TestWgcn:
    def test_zero_weights_give_zero(self):
        cfg = ModelConfig(d=2, L=1, hidden=3)
        p = init_params(cfg, 0)
        p["W_out.0"][:] = 0
        enc = encode(Cnf(2, ((1, 2),)))
        H = wgcn_forward(p, enc.adj, np.ones((4, 4)), cfg, enc.partner)
        assert not H.any()

    def test_hand_computed_two_node_graph(self):
        # (x1 or -x1): the only edge joins the two literal nodes, so A' = [[0, .5], [.5, 0]]
        cfg = ModelConfig(d=1, L=1, hidden=2)
        p = init_params(cfg, 0)
        p["W_out.0"] = np.array([[1.0, 0], [0, 1], [1, -1], [0, 0]])
        p["b_out.0"] = np.array([0.0, -1.0])
        enc = encode(Cnf(1, ((1, -1),)))
        H0 = np.array([[1.0, 2.0], [3.0, 4.0]])
        H = wgcn_forward(p, enc.adj, H0, cfg, enc.partner)
        # row 0: C = [1.5, 2, 3, 4] -> Z = [4.5, -2]; row 1: C = [0.5, 1, 1, 2] -> Z = [1.5, -1]
        assert H.tolist() == [[4.5, 0.0], [1.5, 0.0]]

    def test_nonnegative(self, rng):
        cfg = ModelConfig(d=3, L=2, hidden=4)
        enc = encode(random_cnf(rng, 6, 12))
        H = wgcn_forward(perturbed(cfg, 1), enc.adj, rng.normal(size=(12, 6)), cfg, enc.partner)
        assert (H >= 0).all()

    def test_dimension_mismatch(self):
        enc = encode(Cnf(2, ((1, 2),)))
        with pytest.raises(ValueError):
            wgcn_forward(init_params(SMALL, 0), enc.adj, np.zeros((6, 4)), SMALL, enc.partner)

    def test_permutation_equivariance(self, rng):
        cfg = ModelConfig(d=3, L=2, hidden=4)
        p = perturbed(cfg, 2)
        cnf = random_cnf(rng, 7, 15)
        perm = rng.permutation(7) + 1
        a, b = encode(cnf), encode(rename(cnf, perm))
        Ha = wgcn_forward(p, a.adj, embed_nodes(p, a.features), cfg, a.partner)
        Hb = wgcn_forward(p, b.adj, embed_nodes(p, b.features), cfg, b.partner)
        node_perm = np.concatenate([perm - 1, perm - 1 + 7])
        assert np.allclose(Hb[node_perm], Ha, atol=1e-9, rtol=0)


class TestHead:
    def test_zero_output_layer(self):
        p = init_params(SMALL, 0)
        p["W2"][:] = 0
        pred = head_forward(p, np.random.default_rng(0).normal(size=(6, 4)), 3)
        assert pred.probs.tolist() == [0.5, 0.5, 0.5]

    @pytest.mark.parametrize("z", [-30.0, 0.0, 2.5, 700.0])
    def test_equal_logits(self, z):
        p = init_params(SMALL, 0)
        p["W2"][:] = 0
        p["b2"] = np.array([z, z])
        assert head_forward(p, np.ones((2, 4)), 1).probs[0] == 0.5

    def test_ln3(self):
        p = init_params(SMALL, 0)
        p["W2"][:] = 0
        p["b2"] = np.array([0.0, math.log(3)])
        assert head_forward(p, np.ones((2, 4)), 1).probs[0] == pytest.approx(0.75, abs=1e-15)

    def test_pairings_use_each_row_once(self):
        for pairing in ("half", "mirror"):
            a, b = head_pairs(5, 10, pairing)
            assert sorted(np.concatenate([a, b]).tolist()) == list(range(10))
        a, b = head_pairs(3, 6, "mirror")
        assert b.tolist() == [5, 4, 3]

    @given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-100, 100))
    def test_shift_invariance_and_complement(self, z0, z1, c):
        p = init_params(SMALL, 0)
        p["W2"][:] = 0
        p["b2"] = np.array([z0, z1])
        a = head_forward(p, np.ones((2, 4)), 1)
        p["b2"] = np.array([z0 + c, z1 + c])
        b = head_forward(p, np.ones((2, 4)), 1)
        assert a.probs[0] == pytest.approx(b.probs[0], rel=1e-9, abs=1e-12)
        assert a.probs[0] + a.not_core[0] == 1.0


class TestLosses:
    def test_hand_term(self):
        loss, _ = focal_loss([0.9], [1], 0.25, 2.0)
        assert loss == pytest.approx(-0.25 * 0.1**2 * math.log(0.9), rel=1e-12)
        assert loss == pytest.approx(2.634e-4, rel=1e-3)

    def test_confident_correct(self):
        loss, _ = focal_loss([1 - 1e-9], [1], 0.25, 2.0)
        assert loss < 1e-20

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            focal_loss([0.5, 0.5], [1], 0.25, 2.0)

    @given(st.lists(st.tuples(st.floats(1e-6, 1 - 1e-6), st.integers(0, 1)), min_size=1, max_size=20))
    def test_gamma0_alpha_half_is_half_ce(self, pairs):
        p = np.array([a for a, _ in pairs])
        y = np.array([b for _, b in pairs])
        fl, gfl = focal_loss(p, y, 0.5, 0.0)
        ce, gce = cross_entropy_loss(p, y)
        assert abs(fl - 0.5 * ce) <= 1e-12 * max(1.0, ce)
        assert np.allclose(gfl, 0.5 * gce, rtol=1e-12, atol=0)

    @pytest.mark.parametrize("fn", ["focal", "ce", "kl"])
    def test_gradient_matches_difference_quotient(self, fn):
        rng = np.random.default_rng(5)
        p = rng.uniform(0.05, 0.95, 12)
        y = (rng.random(12) < 0.6).astype(float)
        f = {
            "focal": lambda q: focal_loss(q, y, 0.3, 1.7),
            "ce": lambda q: cross_entropy_loss(q, y),
            "kl": lambda q: kl_loss(q, y),
        }[fn]
        _, g = f(p)
        h = 1e-6
        for i in range(12):
            e = np.zeros(12)
            e[i] = h
            fd = (f(p + e)[0] - f(p - e)[0]) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_kl_matches_ce_on_hard_labels(self):
        p = np.array([0.2, 0.7, 0.9])
        y = np.array([0.0, 1.0, 1.0])
        assert kl_loss(p, y)[0] == pytest.approx(cross_entropy_loss(p, y)[0], abs=1e-5)

    def test_clamped_gradient_is_zero(self):
        _, g = focal_loss([0.0, 1.0], [1, 0], 0.25, 2.0)
        assert g.tolist() == [0.0, 0.0]


def _sample(rng, n=5, m=10, graph="wlig"):
    cnf = random_cnf(rng, n, m)
    return Sample(encode(cnf, graph), (rng.random(n) < 0.6).astype(float), 1.0, "s")


class TestGradients:
    @pytest.mark.parametrize("overrides", [
        {},
        {"shared_weights": True},
        {"pairing": "mirror"},
        {"loss_kind": "cross_entropy"},
        {"loss_kind": "kl"},
        {"target_kind": "satisfiability"},
        {"graph": "lcg"},
        {"norm": "row"},
    ])
    def test_finite_differences(self, overrides):
        rng = np.random.default_rng(11)
        cfg = ModelConfig(d=2, L=2, hidden=3, **overrides)
        s = _sample(rng, graph=cfg.graph)
        if cfg.norm == "row":
            s = Sample(encode(random_cnf(rng, 5, 10), norm="row"), s.labels, 1.0)
        p = perturbed(cfg, 4)
        _, g = forward_backward(p, s, cfg)
        fd = finite_difference_grads(p, s, cfg, 1e-4)
        for k in g:
            assert relative_error(g[k], fd[k]) < 1e-4, k

    def test_symmetric_b2_gradient(self):
        cfg = ModelConfig(d=2, L=1, hidden=3)
        p = init_params(cfg, 0)
        p["W2"][:] = 0
        s = Sample(encode(Cnf(3, ((1, 2), (-2, 3)))), np.zeros(3), 1.0)
        _, g = forward_backward(p, s, cfg)
        assert g["b2"][0] == -g["b2"][1] and g["b2"][0] != 0

    def test_loss_decreases_after_step(self, rng):
        cfg = SMALL
        s = _sample(rng)
        p = perturbed(cfg, 0)
        before, g = forward_backward(p, s, cfg)
        stepped = {k: v - 1e-3 * g[k] for k, v in p.items()}
        assert instance_loss(stepped, s, cfg) < before

    def test_overflow_reported(self, rng):
        s = _sample(rng)
        p = perturbed(SMALL, 0)
        p["W_init"][:] = np.inf
        with pytest.raises(NumericalOverflow) as exc:
            forward_backward(p, s, SMALL)
        assert exc.value.tensor == "H0"


class TestTrain:
    def test_overfits_single_instance(self, rng):
        cfg = ModelConfig(d=4, L=2, hidden=8, epochs=200, lr=1e-2)
        _, hist = train([_sample(rng, 8, 20)], cfg)
        assert hist[-1].train_loss < hist[0].train_loss

    def test_deterministic(self, rng):
        data = [_sample(rng) for _ in range(6)]
        cfg = ModelConfig(d=2, L=2, hidden=4, epochs=4, batch_size=2)
        p1, h1 = train(data, cfg)
        p2, h2 = train(data, cfg)
        assert h1 == h2
        assert all(p1[k].tobytes() == p2[k].tobytes() for k in p1)

    def test_zero_lr(self, rng):
        data = [_sample(rng) for _ in range(3)]
        cfg = ModelConfig(d=2, L=1, hidden=3, epochs=3, lr=0.0)
        p, hist = train(data, cfg)
        init = init_params(cfg)
        assert all(np.array_equal(p[k], init[k]) for k in p)
        assert len({h.train_loss for h in hist}) == 1

    def test_no_positive_labels_warns(self, rng):
        s = _sample(rng)
        s.labels[:] = 0
        with pytest.warns(RuntimeWarning):
            train([s], ModelConfig(d=1, L=1, hidden=2, epochs=1))

    def test_empty(self):
        with pytest.raises(ValueError):
            train([], SMALL)


class TestCheckpoint:
    def test_round_trip_bytes(self, tmp_path):
        p = perturbed(SMALL, 1)
        save_checkpoint(p, SMALL, tmp_path / "a.ckpt")
        q, cfg = load_checkpoint(tmp_path / "a.ckpt")
        assert cfg == SMALL
        assert all(p[k].tobytes() == q[k].tobytes() for k in p)
        save_checkpoint(q, cfg, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_layout(self, tmp_path):
        save_checkpoint(init_params(SMALL, 0), SMALL, tmp_path / "a.ckpt")
        raw = (tmp_path / "a.ckpt").read_bytes()
        assert raw[:4] == b"IBNW"
        assert int.from_bytes(raw[4:8], "little") == 1

    def test_bad_magic(self, tmp_path):
        save_checkpoint(init_params(SMALL, 0), SMALL, tmp_path / "a.ckpt")
        raw = bytearray((tmp_path / "a.ckpt").read_bytes())
        raw[0:4] = b"XXXX"
        (tmp_path / "a.ckpt").write_bytes(bytes(raw))
        with pytest.raises(BadMagic):
            load_checkpoint(tmp_path / "a.ckpt")

    def test_version(self, tmp_path):
        save_checkpoint(init_params(SMALL, 0), SMALL, tmp_path / "a.ckpt")
        raw = bytearray((tmp_path / "a.ckpt").read_bytes())
        raw[4] = 9
        (tmp_path / "a.ckpt").write_bytes(bytes(raw))
        with pytest.raises(VersionMismatch):
            load_checkpoint(tmp_path / "a.ckpt")

    def test_truncated(self, tmp_path):
        save_checkpoint(init_params(SMALL, 0), SMALL, tmp_path / "a.ckpt")
        raw = (tmp_path / "a.ckpt").read_bytes()
        (tmp_path / "a.ckpt").write_bytes(raw[:-5])
        with pytest.raises(TruncatedCheckpoint):
            load_checkpoint(tmp_path / "a.ckpt")

    def test_shape_mismatch(self, tmp_path):
        save_checkpoint(init_params(SMALL, 0), SMALL, tmp_path / "a.ckpt")
        with pytest.raises(ShapeMismatch):
            load_checkpoint(tmp_path / "a.ckpt", expect=ModelConfig(d=3, L=2, hidden=4))


class TestPredict:
    def test_deterministic_and_length(self, rng):
        cnf = random_cnf(rng, 9, 20)
        p = perturbed(SMALL, 0)
        a, b = predict(p, SMALL, cnf), predict(p, SMALL, cnf)
        assert len(a) == 9 and np.array_equal(a.probs, b.probs)
        assert ((a.probs > 0) & (a.probs < 1)).all()
        assert a.wall_ms > 0

    def test_edgeless_fallback(self):
        pred = predict(init_params(SMALL, 0), SMALL, Cnf(3, ((1,), (-2,))))
        assert pred.probs.tolist() == [0.5, 0.5, 0.5]

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000))
    def test_renaming_permutes_predictions(self, seed):
        rng = np.random.default_rng(seed)
        cnf = random_cnf(rng, 8, 18)
        perm = rng.permutation(8) + 1
        p = perturbed(SMALL, 3)
        a = predict(p, SMALL, cnf).probs
        b = predict(p, SMALL, rename(cnf, perm)).probs
        assert np.allclose(b[perm - 1], a, atol=1e-9, rtol=0)
