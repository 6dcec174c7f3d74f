import json

import numpy as np
import pytest

from reckernel.activation import builtin_activation, compute_H
from reckernel.kernel import TruncatedFeatureMap, feature_map
from reckernel.network import (
    ConstructionError,
    HalfspaceFamily,
    NetworkStructureError,
    NeuralNet,
    UnsupportedNetworkError,
    brute_force_margins,
    build_hardness_net,
    embed_quadratic,
    eval_halfspaces,
    extend_input,
    forward,
    net_from_json,
    net_to_json,
    random_halfspace_family,
    random_net,
    required_budget,
    select_margin_param,
    validate,
)

QUAD = builtin_activation("quadratic")
ERF = builtin_activation("shifted_erf")
SH = builtin_activation("smoothed_hinge")


def tiny_net(*mats, act=QUAD):
    return NeuralNet(weights=tuple(np.array(m, dtype=float) for m in mats), activation=act)


# ---------------------------------------------------------------------------
# forward and validation
# ---------------------------------------------------------------------------

def test_forward_single_quadratic_neuron():
    net = tiny_net([[1.0]], [[1.0]])
    assert forward(net, [0.5]) == 0.25


def test_forward_zero_weights():
    net = tiny_net([[0.0, 0.0]], [[0.0]])
    assert forward(net, [0.5, 0.5]) == 0.0


def test_forward_two_hidden_layers():
    net = tiny_net([[1.0]], [[1.0]], [[1.0]])
    assert forward(net, [0.5]) == 0.0625


def test_forward_shape_mismatch():
    net = tiny_net([[1.0, 0.0]], [[1.0]])
    with pytest.raises(NetworkStructureError):
        forward(net, [0.5])


def test_validate_l2_first_layer():
    net = tiny_net([[3.0, 4.0]], [[1.0]])
    assert validate(net, 5.0).ok  # 3-4-5 row sits exactly on the budget


def test_validate_l1_deeper_layers():
    net = tiny_net([[1.0, 0.0], [0.0, 1.0]], [[3.0, 4.0]])
    report = validate(net, 5.0)
    assert not report.ok
    v = report.violations[0]
    assert (v.layer, v.row, v.norm_kind) == (1, 0, "l1")
    assert v.norm == 7.0


def test_zero_hidden_layers_is_structural_error():
    with pytest.raises(NetworkStructureError):
        NeuralNet(weights=(np.array([[1.0]]),), activation=QUAD)


def test_output_must_be_single_row():
    with pytest.raises(NetworkStructureError):
        tiny_net([[1.0]], [[1.0], [2.0]])


def test_required_budget_is_tight():
    net = tiny_net([[3.0, 4.0]], [[2.0]])
    L = required_budget(net)
    assert L == 5.0
    assert validate(net, L).ok


# ---------------------------------------------------------------------------
# random networks
# ---------------------------------------------------------------------------

def test_random_net_respects_budgets():
    for seed in range(5):
        net = random_net(2, [4, 5, 3], 1.7, QUAD, seed)
        assert validate(net, 1.7).ok


def test_random_net_deterministic_and_seed_sensitive():
    a = random_net(1, [3, 4], 1.0, QUAD, 11)
    b = random_net(1, [3, 4], 1.0, QUAD, 11)
    c = random_net(1, [3, 4], 1.0, QUAD, 12)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert any(not np.array_equal(x, y) for x, y in zip(a.weights, c.weights))


def test_random_net_rejects_bad_widths():
    with pytest.raises(ValueError):
        random_net(2, [3, 4], 1.0, QUAD, 0)


# ---------------------------------------------------------------------------
# quadratic embedding oracle
# ---------------------------------------------------------------------------

def test_embed_single_weight_network():
    net = tiny_net([[1.0]], [[1.0]])
    emb = embed_quadratic(net)
    assert emb.coords == {(0, 0): pytest.approx(2.0 ** 1.5, rel=1e-15)}
    assert emb.norm == pytest.approx(2.0 ** 1.5, rel=1e-15)
    for x in (0.5, -0.5, 0.25):
        assert emb.evaluate([x]) == pytest.approx(forward(net, [x]), rel=1e-12)


def test_embed_zero_output_weights():
    net = tiny_net([[1.0, 0.0]], [[0.0]])
    emb = embed_quadratic(net)
    assert emb.coords == {}
    assert emb.norm == 0.0


def test_embed_requires_depth_one_quadratic():
    with pytest.raises(UnsupportedNetworkError):
        embed_quadratic(tiny_net([[1.0]], [[1.0]], [[1.0]]))
    with pytest.raises(UnsupportedNetworkError):
        embed_quadratic(tiny_net([[1.0]], [[1.0]], act=ERF))


def test_embed_reproduces_forward_and_norm_bound():
    rng = np.random.default_rng(0)
    for trial in range(50):
        d = int(rng.integers(1, 5))
        width = int(rng.integers(1, 6))
        L = float(rng.uniform(0.3, 2.0))
        net = random_net(1, [d, width], L, QUAD, seed=1000 + trial)
        emb = embed_quadratic(net)
        assert emb.norm <= compute_H(QUAD, L, L).to_float() * (1 + 1e-12)
        for _ in range(20):
            x = rng.normal(size=d)
            x /= np.linalg.norm(x)
            want = forward(net, x)
            assert emb.evaluate(x) == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_embed_dense_pairs_with_feature_map():
    # independent route: dot the dense coordinates against the feature map
    rng = np.random.default_rng(1)
    net = random_net(1, [3, 4], 1.0, QUAD, seed=5)
    emb = embed_quadratic(net)
    fm = TruncatedFeatureMap(3, 2)
    dense = emb.to_dense(fm)
    assert np.linalg.norm(dense) == pytest.approx(emb.norm, rel=1e-12)
    for _ in range(10):
        x = rng.normal(size=3)
        x /= np.linalg.norm(x)
        assert dense @ feature_map(fm, x) == pytest.approx(forward(net, x), rel=1e-10)


# ---------------------------------------------------------------------------
# halfspace families
# ---------------------------------------------------------------------------

def test_eval_halfspaces_single():
    hs = HalfspaceFamily(np.array([[1, 1]]), np.array([0]), budget=4)
    assert eval_halfspaces(hs, [1, 1]) == 1
    assert eval_halfspaces(hs, [-1, -1]) == -1


def test_eval_halfspaces_contradictory_pair():
    hs = HalfspaceFamily(np.array([[1, 1], [-1, -1]]), np.array([0, 0]), budget=4)
    for bits in ([1, 1], [1, -1], [-1, 1], [-1, -1]):
        assert eval_halfspaces(hs, bits) == -1


def test_halfspace_budget_enforced():
    with pytest.raises(ValueError, match="budget"):
        HalfspaceFamily(np.array([[5, 5]]), np.array([9]), budget=16)


def test_random_family_within_budget():
    for seed in range(5):
        hs = random_halfspace_family(8, 3, 12, seed)
        cost = np.abs(hs.offsets) + np.abs(hs.weights).sum(axis=1)
        assert np.all(cost <= 12)


def test_extend_input_unit_norm():
    for d in (2, 5, 9):
        x = np.ones(d)
        assert np.linalg.norm(extend_input(x)) == pytest.approx(1.0, rel=1e-15)


# ---------------------------------------------------------------------------
# hardness construction
# ---------------------------------------------------------------------------

def test_hardness_margin_single_halfspace():
    hs = HalfspaceFamily(np.array([[1, 1]]), np.array([0]), budget=4)
    net = build_hardness_net(hs, ERF, select_margin_param(ERF, 1))
    report = brute_force_margins(net, hs)
    assert report.min_margin >= 1.0
    assert report.max_hinge_loss == 0.0
    assert report.n_inputs == 4


def test_hardness_hinge_zero_random_families():
    for seed in range(3):
        hs = random_halfspace_family(4, 2, 8, seed)
        net = build_hardness_net(hs, ERF, select_margin_param(ERF, 2))
        assert brute_force_margins(net, hs).max_hinge_loss == 0.0


def test_hardness_relu_like_path():
    lam = select_margin_param(SH, 2)
    for seed in range(3):
        hs = random_halfspace_family(4, 2, 8, seed)
        net = build_hardness_net(hs, SH, lam)
        # paired neurons double the width
        assert net.widths[1] == 2 * (hs.T + 1)
        assert brute_force_margins(net, hs).max_hinge_loss == 0.0


def test_hardness_net_is_within_its_own_budget():
    hs = random_halfspace_family(6, 3, 12, 2)
    net = build_hardness_net(hs, ERF, select_margin_param(ERF, 3))
    assert validate(net, required_budget(net)).ok


def test_hardness_rejects_unsaturated_margin_param():
    hs = HalfspaceFamily(np.array([[1, 1]]), np.array([0]), budget=4)
    with pytest.raises(ConstructionError, match="transfer"):
        build_hardness_net(hs, ERF, 0.05)


def test_hardness_rejects_polynomial_activation():
    hs = HalfspaceFamily(np.array([[1, 1]]), np.array([0]), budget=4)
    with pytest.raises(ConstructionError):
        build_hardness_net(hs, QUAD, 3.0)
    with pytest.raises(ConstructionError):
        select_margin_param(QUAD, 1)


def test_margin_param_saturates_both_sides():
    for act, T in ((ERF, 1), (ERF, 3), (SH, 2)):
        lam = select_margin_param(act, T)
        if act.kind == "relu_like":
            hi = act.evaluate(lam) - act.evaluate(lam - 1.0)
            lo = act.evaluate(-lam) - act.evaluate(-lam - 1.0)
        else:
            hi = act.evaluate(lam)
            lo = act.evaluate(-lam)
        assert hi >= 1.0 - 1.0 / (4.0 * T)
        assert lo <= 1.0 / (4.0 * T)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_net_json_round_trip():
    net = random_net(2, [3, 4, 2], 1.3, ERF, 9)
    text = net_to_json(net)
    back = net_from_json(text)
    assert back.k == net.k
    assert back.activation.name == "shifted_erf"
    assert all(np.array_equal(a, b) for a, b in zip(net.weights, back.weights))
    payload = json.loads(text)
    assert payload["widths"] == [3, 4, 2]
