import logging

import numpy as np
import pytest

from phy.channel_sim import (
    ChannelConfig,
    ChannelState,
    TraceChannel,
    channel_preset,
    doppler_coefficient,
    doppler_frequency,
    freq_response,
    read_trace,
    step,
    write_trace,
)
from utils.errors import InvalidConfigError, InvalidInputError


# ---------------------------------------------------------------------
# Doppler
# ---------------------------------------------------------------------
J0_FIRST_ZERO = 2.404825557695773


def test_doppler_frequency_at_40_kmh():
    assert doppler_frequency(40.0 / 3.6, 2.6e9) == pytest.approx(96.3, abs=0.1)


@pytest.mark.parametrize("speed_kmh, expected", [(40.0, 0.91043), (80.0, 0.6657)])
def test_doppler_coefficient_presets(speed_kmh, expected):
    rho = doppler_coefficient(speed_kmh / 3.6, 2.6e9, 1e-3)
    assert rho == pytest.approx(expected, abs=1e-4)


def test_doppler_coefficient_at_first_bessel_zero():
    speed = 40.0 / 3.6
    duration = J0_FIRST_ZERO / (2 * np.pi * doppler_frequency(speed, 2.6e9))
    assert doppler_coefficient(speed, 2.6e9, duration) == pytest.approx(0.0, abs=1e-9)


def test_doppler_static_channel():
    assert doppler_coefficient(0.0, 2.6e9, 1e-3) == 1.0


def test_doppler_clamped_to_unit_interval():
    # argumento perto do primeiro zero de J0 e além dele
    for speed in (100.0, 500.0, 2000.0):
        assert 0.0 <= doppler_coefficient(speed, 2.6e9, 1e-3) <= 1.0


@pytest.mark.parametrize("args", [(-1.0, 2.6e9, 1e-3), (10.0, 0.0, 1e-3), (10.0, 2.6e9, -1.0), (np.nan, 2.6e9, 1e-3)])
def test_doppler_rejects_invalid(args):
    with pytest.raises(InvalidConfigError):
        doppler_coefficient(*args)


# ---------------------------------------------------------------------
# Configuração e presets
# ---------------------------------------------------------------------
def test_presets():
    g1, g2 = channel_preset("G1"), channel_preset("g2")
    assert g1.symbols_per_frame == 1 and g2.symbols_per_frame == 4
    assert g2.speed_mps == pytest.approx(2 * g1.speed_mps)
    with pytest.raises(InvalidConfigError):
        channel_preset("G3")


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(tap_powers=(0.5, 0.25, 0.15, 0.2)),
        dict(tap_delays=(0, 2, 2, 9)),
        dict(tap_delays=(0, 2, 5, 64)),
        dict(tap_delays=(0, 2), tap_powers=(0.5, 0.25, 0.25)),
        dict(n_tx=0),
    ],
)
def test_channel_config_rejects(kwargs):
    with pytest.raises(InvalidConfigError):
        ChannelConfig(**kwargs)


# ---------------------------------------------------------------------
# Resposta em frequência
# ---------------------------------------------------------------------
def test_freq_response_fft_matches_direct(rng):
    gains = rng.standard_normal((4, 3, 2)) + 1j * rng.standard_normal((4, 3, 2))
    delays = (0, 2, 5, 9)
    fast = freq_response(gains, delays, 64)
    slow = freq_response(gains, delays, 64, method="direct")
    assert fast.shape == (64, 3, 2)
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_single_tap_at_zero_is_flat(rng):
    gains = rng.standard_normal((1, 2, 2)) + 1j * rng.standard_normal((1, 2, 2))
    h = freq_response(gains, (0,), 16)
    for i in range(16):
        np.testing.assert_allclose(h[i], gains[0], atol=1e-14)


def test_freq_response_rejects_delay_out_of_range():
    with pytest.raises(InvalidConfigError):
        freq_response(np.ones((1, 1, 1)), (16,), 16)


# ---------------------------------------------------------------------
# Estado
# ---------------------------------------------------------------------
def test_state_indexing_and_shapes():
    state = ChannelState(ChannelConfig(seed=3))
    first = state.realization()
    assert first.t == 0 and first.freq_response.shape == (64, 8, 8)
    np.testing.assert_array_equal(state.realization().freq_response, first.freq_response)
    nxt = step(state)
    assert nxt.t == 1 and state.t == 1
    assert not np.allclose(nxt.freq_response, first.freq_response)


def test_static_channel_never_changes():
    state = ChannelState(ChannelConfig(speed_mps=0.0, seed=9))
    h0 = state.realization().freq_response
    for _ in range(5):
        state.advance()
    np.testing.assert_array_equal(state.realization().freq_response, h0)


def test_same_seed_same_channel():
    a = ChannelState(ChannelConfig(seed=11))
    b = ChannelState(ChannelConfig(seed=11))
    for _ in range(3):
        np.testing.assert_array_equal(a.step().freq_response, b.step().freq_response)


def test_average_power_per_entry():
    cfg = ChannelConfig(seed=5)
    state = ChannelState(cfg)
    powers = [np.mean(np.abs(state.step().freq_response) ** 2) for _ in range(1000)]
    assert np.mean(powers) == pytest.approx(1.0, rel=0.05)


@pytest.mark.slow
def test_tap_autocorrelation_matches_rho():
    cfg = ChannelConfig(n_tx=2, n_rx=2, seed=21)
    state = ChannelState(cfg)
    n = 100_000
    scale = 1.0 / np.sqrt(np.asarray(cfg.tap_powers))[:, None, None]
    samples = np.empty((n,) + state.gains.shape, dtype=np.complex128)
    for k in range(n):
        samples[k] = state.gains * scale
        state.advance()
    flat = samples.reshape(n, -1)
    power = np.mean(np.abs(flat) ** 2)
    for lag in range(1, 6):
        corr = np.real(np.mean(flat[lag:] * np.conj(flat[:-lag]))) / power
        assert corr == pytest.approx(cfg.rho**lag, abs=0.02)


def _gain_series(cfg: ChannelConfig, n: int) -> np.ndarray:
    state = ChannelState(cfg)
    samples = np.empty((n,) + state.gains.shape, dtype=np.complex128)
    for k in range(n):
        samples[k] = state.gains
        state.advance()
    return samples


@pytest.mark.slow
def test_uncorrelated_channel_has_no_lag_one_correlation():
    speed = 40.0 / 3.6
    duration = J0_FIRST_ZERO / (2 * np.pi * doppler_frequency(speed, 2.6e9))
    cfg = ChannelConfig(n_tx=1, n_rx=1, speed_mps=speed, symbol_duration_s=duration, seed=4)
    assert cfg.rho == pytest.approx(0.0, abs=1e-9)
    flat = _gain_series(cfg, 100_000).reshape(100_000, -1)
    for column in flat.T:
        corr = np.real(np.mean(column[1:] * np.conj(column[:-1]))) / np.mean(np.abs(column) ** 2)
        assert abs(corr) < 0.02


@pytest.mark.slow
def test_total_tap_power_is_conserved():
    cfg = ChannelConfig(n_tx=2, n_rx=2, seed=8)
    gains = _gain_series(cfg, 100_000)
    per_symbol = np.sum(np.abs(gains) ** 2, axis=(1, 2, 3)) / (cfg.n_rx * cfg.n_tx)
    assert np.mean(per_symbol) == pytest.approx(1.0, abs=0.02)


# ---------------------------------------------------------------------
# Traços
# ---------------------------------------------------------------------
def test_trace_round_trip(tmp_path):
    state = ChannelState(ChannelConfig(n_tx=2, n_rx=3, n_subcarriers=16, tap_delays=(0, 3), tap_powers=(0.6, 0.4)))
    realizations = [state.step() for _ in range(5)]
    path = write_trace(tmp_path / "canal.bin", realizations)
    data = read_trace(path)
    assert data.shape == (5, 16, 3, 2)
    for k, r in enumerate(realizations):
        np.testing.assert_array_equal(data[k], r.freq_response)


def test_trace_header_layout(tmp_path):
    path = write_trace(tmp_path / "t.bin", np.zeros((2, 4, 1, 3), dtype=complex))
    raw = path.read_bytes()
    assert raw[:8] == b"MCVST01\x00"
    assert len(raw) == 8 + 16 + 2 * 4 * 1 * 3 * 16


def test_trace_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXXXXXX" + bytes(16))
    with pytest.raises(InvalidInputError):
        read_trace(bad)
    path = write_trace(tmp_path / "t.bin", np.ones((1, 2, 1, 1), dtype=complex))
    truncated = tmp_path / "trunc.bin"
    truncated.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(InvalidInputError):
        read_trace(truncated)


def test_trace_channel_wraps_with_warning(caplog):
    responses = np.arange(3, dtype=complex).reshape(3, 1, 1, 1)
    channel = TraceChannel(responses)
    with caplog.at_level(logging.WARNING):
        values = [channel.realization().freq_response[0, 0, 0]]
        for _ in range(4):
            values.append(channel.step().freq_response[0, 0, 0])
    assert values == [0, 1, 2, 0, 1]
    assert channel.t == 4
    assert sum("esgotado" in r.message for r in caplog.records) == 1
