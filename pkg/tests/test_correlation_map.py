from dataclasses import replace

import numpy as np
import pytest

from codec.correlation_map import LinearEmbedder, MapConfig, MapEmbedders, build_map, softmax_rows
from phy.sampling import SampledCsi
from utils.errors import InvalidConfigError, InvalidInputError


def _csi(rng, n_groups=8, n_rx=2, n_tx=2, t=0):
    entries = rng.standard_normal((n_groups, n_rx, n_tx)) + 1j * rng.standard_normal((n_groups, n_rx, n_tx))
    return SampledCsi(t=t, entries=entries, positions=tuple(range(n_groups)))


@pytest.fixture
def setup():
    config = MapConfig(feature_channels=16, context_group=4, embed_dim=8)
    return config, MapEmbedders.from_seed(3, config, 2, 2)


def test_rows_are_distributions(setup):
    config, embedders = setup
    rng = np.random.default_rng(0)
    for _ in range(1000):
        context = rng.standard_normal((16, 2, 2)) * rng.uniform(0.01, 10)
        values = build_map(context, _csi(rng), config, embedders).values
        assert values.shape == (4, 8)
        assert np.all(values >= 0)
        assert np.max(np.abs(values.sum(axis=1) - 1.0)) < 1e-12


def test_scale_invariance(setup, rng):
    config, embedders = setup
    context = rng.standard_normal((16, 3, 3))
    csi = _csi(rng)
    base = build_map(context, csi, config, embedders).values

    scaled_ctx = context.copy()
    scaled_ctx[4:8] *= 7.5
    np.testing.assert_allclose(build_map(scaled_ctx, csi, config, embedders).values, base, atol=1e-12)

    entries = csi.entries.copy()
    entries[2] *= 0.3
    scaled_csi = SampledCsi(t=0, entries=entries, positions=csi.positions)
    np.testing.assert_allclose(build_map(context, scaled_csi, config, embedders).values, base, atol=1e-12)


def test_high_temperature_is_uniform(rng):
    config = MapConfig(feature_channels=16, context_group=4, embed_dim=8, temperature=1e6)
    embedders = MapEmbedders.from_seed(3, config, 2, 2)
    values = build_map(rng.standard_normal((16, 2, 2)), _csi(rng), config, embedders).values
    np.testing.assert_allclose(values, 1.0 / 8, atol=1e-6)


def test_lower_temperature_sharpens_rows(setup, rng):
    config, embedders = setup
    context = rng.standard_normal((16, 2, 2))
    csi = _csi(rng)
    peaks = [
        build_map(context, csi, replace(config, temperature=tau), embedders).values.max(axis=1).mean()
        for tau in (1.0, 0.3, 0.07, 0.01)
    ]
    assert all(a < b for a, b in zip(peaks, peaks[1:]))


def test_zero_context_gives_identical_rows(setup, rng):
    config, embedders = setup
    values = build_map(np.zeros((16, 2, 2)), _csi(rng), config, embedders).values
    for row in values[1:]:
        np.testing.assert_array_equal(row, values[0])


def test_zero_vector_embeds_to_canonical_axis(rng):
    e = LinearEmbedder(4, 6, rng)(np.zeros(4))
    assert list(e) == [1.0, 0, 0, 0, 0, 0]


def test_softmax_is_stable():
    values = softmax_rows(np.array([[1e4, 0.0], [-1e4, -1e4]]))
    np.testing.assert_allclose(values, [[1.0, 0.0], [0.5, 0.5]])


def test_config_and_shape_errors(setup, rng):
    with pytest.raises(InvalidConfigError):
        MapConfig(feature_channels=64, context_group=3)
    with pytest.raises(InvalidConfigError):
        MapConfig(temperature=0.0)
    config, embedders = setup
    with pytest.raises(InvalidInputError):
        build_map(np.zeros((8, 2, 2)), _csi(rng), config, embedders)


def test_csi_entry_count_must_match_groups(setup, rng):
    config, embedders = setup
    with pytest.raises(InvalidInputError):
        build_map(np.zeros((16, 2, 2)), _csi(rng, n_groups=4), config, embedders)
    with pytest.raises(InvalidConfigError):
        MapConfig(subcarrier_group=3)
    wide = MapConfig(feature_channels=16, context_group=4, embed_dim=8, subcarrier_group=16)
    assert wide.n_cols == 4
    values = build_map(np.ones((16, 2, 2)), _csi(rng, n_groups=4), wide, embedders).values
    assert values.shape == (4, 4)
