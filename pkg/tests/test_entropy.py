from fractions import Fraction

import numpy as np
import pytest

from codec.entropy import (
    P_FLOOR,
    SCALE_FLOOR,
    EntropyParams,
    MapHistory,
    MapWindow,
    ParamFusion,
    ReferenceBundle,
    ReferenceGenerators,
    anchor_mask,
    build_reference_window,
    cbr,
    checkerboard_merge,
    checkerboard_split,
    diagnostic_loss,
    eta_from_map,
    group_rate,
    information_bits,
    laplace_box_prob,
    predict_params_anchor,
    predict_params_nonanchor,
    quantize,
    total_rate,
    transmission_cost,
    window_indices,
)
from utils.errors import InvalidInputError, InvalidParamsError, InvalidRefsError


# ---------------------------------------------------------------------
# Quantização e Laplace
# ---------------------------------------------------------------------
def test_quantize_ties_away_from_zero():
    assert quantize([0.5, -0.5, 1.5, -2.5, 0.49]).tolist() == [1, -1, 2, -3, 0]
    with pytest.raises(InvalidInputError):
        quantize([np.inf])


def test_laplace_box_probabilities_sum_to_one():
    rng = np.random.default_rng(8)
    for _ in range(200):
        mu = rng.uniform(-20, 20)
        b = rng.uniform(0.3, 10.0)
        half = max(256, int(np.ceil(40 * b)))
        n = np.arange(round(mu) - half, round(mu) + half + 1)
        total = laplace_box_prob(n, mu, b, floor=False).sum()
        assert abs(total - 1.0) < 1e-9


def test_laplace_tail_is_floored_not_zero():
    p = laplace_box_prob(np.array([1e4, -1e4]), 0.0, 0.5)
    assert np.all(p == P_FLOOR)
    raw = laplace_box_prob(np.array([60.0]), 0.0, 1.0, floor=False)
    assert 0 < raw[0] < 1e-25


def test_laplace_rejects_tiny_scale():
    with pytest.raises(InvalidParamsError):
        laplace_box_prob([0], 0.0, SCALE_FLOOR / 2)
    with pytest.raises(InvalidParamsError):
        EntropyParams(mu=np.zeros(2), scale=np.array([1.0, 0.0]))


# ---------------------------------------------------------------------
# Xadrez
# ---------------------------------------------------------------------
def test_anchor_mask_pattern():
    assert anchor_mask(2, 3).tolist() == [[True, False, True], [False, True, False]]


def test_checkerboard_merge_inverts_split(rng):
    values = rng.integers(-5, 5, size=(3, 5, 4))
    anchors, others = checkerboard_split(values)
    assert np.all(others[..., anchor_mask(5, 4)] == 0)
    np.testing.assert_array_equal(checkerboard_merge(anchors, others), values)


# ---------------------------------------------------------------------
# Referências
# ---------------------------------------------------------------------
@pytest.fixture
def generators():
    return ReferenceGenerators(n_groups=4, context_group=2, n_map_cols=8, rng=np.random.default_rng(1))


def _window(rng, rows=4, cols=8):
    return MapWindow(maps=(rng.dirichlet(np.ones(cols), size=rows),), indices=(0,))


def test_map_ref_only_sees_earlier_rows(generators, rng):
    window = _window(rng)
    base = generators.map_ref(window, 1, (3, 3))
    changed = window.maps[0].copy()
    changed[2:] = np.roll(changed[2:], 3, axis=1)
    other = generators.map_ref(MapWindow(maps=(changed,), indices=(0,)), 1, (3, 3))
    assert base.shape == (2, 2, 3, 3)
    np.testing.assert_array_equal(base, other)
    with pytest.raises(InvalidRefsError):
        generators.map_ref(MapWindow(maps=(), indices=()), 0, (3, 3))


def test_anchor_ref_ignores_non_anchor_values(generators, rng):
    anchors = rng.standard_normal((2, 4, 4))
    noisy = anchors + np.where(anchor_mask(4, 4), 0.0, 9.0)
    np.testing.assert_array_equal(generators.anchor_ref(anchors), generators.anchor_ref(noisy))


def test_causal_ref_first_group_is_zero(generators):
    assert not generators.causal_ref(None, (2, 3)).any()


def test_zero_references_give_unit_softplus_scale():
    fusion = ParamFusion(n_groups=2, rng=np.random.default_rng(0))
    zeros = np.zeros((2, 3, 2, 2))
    params = predict_params_anchor(ReferenceBundle(zeros, zeros, zeros), 1, fusion)
    assert not params.mu.any()
    np.testing.assert_allclose(params.scale, np.log(2.0))


def test_map_shift_is_bounded_by_scale():
    fusion = ParamFusion(n_groups=1, rng=np.random.default_rng(3))
    zeros = np.zeros((2, 2, 3, 3))
    phi_m = zeros.copy()
    phi_m[0] = 5.0
    phi_z = zeros.copy()
    phi_z[1] = -4.5
    params = predict_params_anchor(ReferenceBundle(phi_m, zeros, phi_z), 0, fusion)
    assert params.scale.max() < 0.02
    assert np.all(np.abs(params.mu) <= params.scale)


def test_scale_plane_does_not_move_location():
    fusion = ParamFusion(n_groups=2, rng=np.random.default_rng(1))
    zeros = np.zeros((2, 2, 2, 2))
    phi = zeros.copy()
    phi[1] = -9.0
    params = predict_params_nonanchor(ReferenceBundle(zeros, phi, phi, phi_lc=phi), 1, fusion)
    assert not params.mu.any()


def test_reference_errors():
    fusion = ParamFusion(n_groups=1, rng=np.random.default_rng(0))
    zeros = np.zeros((2, 1, 2, 2))
    with pytest.raises(InvalidRefsError):
        predict_params_anchor(ReferenceBundle(zeros, zeros, None), 0, fusion)
    with pytest.raises(InvalidRefsError):
        predict_params_anchor(ReferenceBundle(zeros, zeros, zeros, phi_lc=zeros), 0, fusion)
    with pytest.raises(InvalidRefsError):
        predict_params_nonanchor(ReferenceBundle(zeros, zeros, zeros), 0, fusion)
    with pytest.raises(InvalidRefsError):
        predict_params_nonanchor(ReferenceBundle(zeros, zeros, zeros, phi_lc=np.zeros((2, 1, 3, 3))), 0, fusion)


# ---------------------------------------------------------------------
# Janela de mapas
# ---------------------------------------------------------------------
def test_window_indices():
    for t in range(64):
        assert window_indices(t, 8) == list(range(t - t % 8, t + 1))


def test_window_skips_missing_maps():
    history = MapHistory(period=8)
    history.add(10, np.ones((2, 2)))
    window = build_reference_window(history, 10, 8)
    assert window.indices == (10,) and window.n_missing == 2
    with pytest.raises(InvalidRefsError):
        build_reference_window(history, 11, 8)


def test_window_modes():
    history = MapHistory(period=4)
    for t in range(7):
        history.add(t, np.full((1, 2), t))
    assert build_reference_window(history, 6, 4).indices == (4, 5, 6)
    assert build_reference_window(history, 6, 4, mode="current").indices == (6,)
    assert sorted(history.maps) == [4, 5, 6]


# ---------------------------------------------------------------------
# Taxa
# ---------------------------------------------------------------------
def test_eta_policies():
    values = np.array([[0.25, 0.75], [0.5, 0.5]])
    np.testing.assert_allclose(eta_from_map(values), [1.75, 1.5])
    np.testing.assert_allclose(eta_from_map(values, "unit"), [1.0, 1.0])
    with pytest.raises(InvalidInputError):
        eta_from_map(values, "other")


def test_information_bits_and_group_rate():
    assert information_bits([0.5, 0.25]) == pytest.approx(3.0)
    assert information_bits([]) == 0.0
    assert group_rate([0.5], [0.25], eta=1.5) == pytest.approx(4.5)
    with pytest.raises(InvalidInputError):
        group_rate([0.5], [0.5], eta=-1.0)


def test_total_rate_and_cost():
    assert total_rate([1.0, 2.5]) == 3.5
    assert transmission_cost(1.0, 2.0, 3.0, 4.0) == 10.0
    with pytest.raises(InvalidInputError):
        transmission_cost(1.0, -2.0, 0.0, 0.0)


def test_cbr_exact():
    rng = np.random.default_rng(3)
    for _ in range(100):
        costs = rng.uniform(0, 1e5, size=int(rng.integers(1, 6)))
        t, h, w = len(costs), int(rng.integers(1, 300)), int(rng.integers(1, 300))
        exact = sum(Fraction(float(c)) for c in costs) / (t * h * w * 3)
        assert abs(cbr(costs, t, h, w) - float(exact)) <= 1e-15 * max(1.0, float(exact))
    assert cbr([0.0347 * 256 * 256 * 3], 1, 256, 256) == pytest.approx(0.0347)
    with pytest.raises(InvalidInputError):
        cbr([1.0], 0, 1, 1)


def test_diagnostic_loss():
    frame = np.zeros((2, 2, 3))
    decoded = np.full((2, 2, 3), 0.1)
    assert diagnostic_loss(100.0, 10.0, frame, decoded, frame) == pytest.approx(100.0 + 10.0 * 0.01)
