import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from codec.entropy import transmission_cost
from config import parse_config
from export import run_sweep, summarize
from phy.channel_sim import ChannelState
from pipeline import (
    MID_GRAY,
    SimulationModels,
    combine,
    demodulate,
    init_state,
    make_gop,
    modulate,
    motion_context_split,
    psnr_db,
    run_frame,
    run_gop,
)
from utils.errors import CapacityError, InvalidInputError

NOISELESS = """
sampling.m_h = 1
codec.qam_order = 64
codec.quant_step = 0.03125
mimo.symbols_per_frame = 16
sweep.frames = 2
"""


# ---------------------------------------------------------------------
# Peças
# ---------------------------------------------------------------------
def test_motion_context_split():
    f_t, f_ref = np.ones((2, 1, 1)), np.full((2, 1, 1), 0.25)
    v, c = motion_context_split(f_t, f_ref)
    np.testing.assert_array_equal(v, 0.75)
    np.testing.assert_array_equal(combine(v, c), f_t)
    with pytest.raises(InvalidInputError):
        motion_context_split(np.ones((2, 1, 1)), np.ones((1, 1, 1)))


def test_psnr():
    assert psnr_db(0.0) == math.inf
    assert psnr_db(0.01) == pytest.approx(20.0)


def test_modulate_fills_streams_in_order(rng):
    bits = rng.integers(0, 2, size=10)
    codeword, placement = modulate(bits, 4, [2, 2, 2])
    assert len(codeword) == 5 and codeword.n_bits == 10
    assert placement.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1], [2, 0]]
    np.testing.assert_array_equal(demodulate(codeword.symbols, 4, 10), bits)


def test_modulate_uneven_streams_and_padding(rng):
    bits = rng.integers(0, 2, size=7)
    codeword, placement = modulate(bits, 16, [0, 1, 3])
    assert len(codeword) == 2
    assert placement.tolist() == [[1, 0], [2, 0]]
    np.testing.assert_array_equal(demodulate(codeword.symbols, 16, 7), bits)


def test_modulate_capacity_and_empty():
    with pytest.raises(CapacityError) as info:
        modulate(np.zeros(10, dtype=np.uint8), 4, [1, 1])
    assert (info.value.required, info.value.available) == (5, 2)
    codeword, placement = modulate(np.zeros(0, dtype=np.uint8), 4, [1])
    assert len(codeword) == 0 and placement.shape == (0, 2)


# ---------------------------------------------------------------------
# Quadro e GoP
# ---------------------------------------------------------------------
def test_noiseless_matched_link_is_transparent():
    cfg = parse_config(NOISELESS)
    metrics = run_gop(cfg, 0, float("inf"))
    assert len(metrics) == 2
    for m in metrics:
        assert not m.frame_error and m.bit_errors == 0
        assert m.psnr_db >= 40.0
        assert m.k_t == pytest.approx(transmission_cost(m.k_c, m.k_v, m.k_cz, m.k_vz))
        # decodificador idêntico ao lado do codificador: D(x, x̂) = D(x, x̄)
        for lam, loss in zip(cfg.codec.lambdas, m.losses):
            assert loss == pytest.approx(m.k_t + 2 * lam * m.mse)
        assert m.cbr == pytest.approx(m.k_t / (64 * 64 * 3))
    assert metrics[0].window_missing == 0


def test_channel_advances_per_frame(small_config_text):
    cfg = parse_config(small_config_text + "mimo.preset = G2\n")
    assert cfg.mimo.symbols_per_frame == 4
    models = SimulationModels.build(cfg)
    state = init_state(cfg, 0, float("inf"), models)
    gop = make_gop(cfg, 0, models)
    for frame in gop.frames:
        run_frame(state, frame)
    assert state.channel_t == gop.n_frames * 4
    assert state.frame_index == gop.n_frames


def test_errors_conceal_with_previous_reconstruction(small_config_text):
    cfg = parse_config(small_config_text.replace("sampling.m_h = 1", "sampling.m_h = 8"))
    models = SimulationModels.build(cfg)
    gop = make_gop(cfg, 0, models)
    metrics = run_gop(cfg, 0, 0.0, models=models, gop=gop)
    assert all(m.frame_error for m in metrics)
    for frame, m in zip(gop.frames, metrics):
        assert m.mse == pytest.approx(float(np.mean((frame - MID_GRAY) ** 2)))


def test_capacity_error_propagates():
    cfg = parse_config("codec.qam_order = 4\ncodec.quant_step = 0.01\nsweep.frames = 1\n")
    with pytest.raises(CapacityError):
        run_gop(cfg, 0, 10.0)


@pytest.mark.parametrize("snr_db", [0.0, 14.0])
def test_default_config_fits_one_frame(snr_db):
    cfg = parse_config("")
    metrics = run_gop(cfg, 0, snr_db)
    capacity = cfg.mimo.n_subcarriers * cfg.mimo.active_streams * cfg.mimo.symbols_per_frame
    assert len(metrics) == cfg.sweep.frames
    for m in metrics:
        assert m.channel_uses <= capacity
        assert np.isfinite(m.mse) and m.k_t > 0


def test_static_gop_motion_is_cheaper_than_intra():
    cfg = parse_config("sweep.static_gop = true\n")
    metrics = run_gop(cfg, 0, 30.0)
    intra = metrics[0].k_v
    assert all(m.k_v < 0.25 * intra for m in metrics[1:])


def test_recursive_csi_waterfilling_and_interleaver_run(small_config_text):
    text = small_config_text.replace("sampling.m_h = 1", "sampling.m_h = 4")
    text += "sampling.csi_mode = recursive\nmimo.power_allocation = waterfilling\nmimo.interleave = true\n"
    cfg = parse_config(text)
    metrics = run_gop(cfg, 1, 30.0)
    assert len(metrics) == 2
    assert all(np.isfinite(m.mse) and m.n_svd > 0 for m in metrics)


def test_same_seed_same_metrics(small_config):
    a = run_gop(small_config, 3, 30.0)
    b = run_gop(small_config, 3, 30.0)
    assert a == b


def test_trace_shape_is_checked(small_config):
    with pytest.raises(InvalidInputError):
        init_state(small_config, 0, 10.0, trace=np.zeros((2, 64, 4, 4), dtype=complex))


def test_trace_replays_live_channel(small_config):
    state = ChannelState(small_config.channel_config(0))
    trace = []
    for _ in range(small_config.sweep.frames * small_config.mimo.symbols_per_frame):
        trace.append(state.realization().freq_response)
        state.advance()
    live = run_gop(small_config, 0, 30.0)
    replay = run_gop(small_config, 0, 30.0, trace=np.stack(trace))
    assert live == replay


# ---------------------------------------------------------------------
# Curva de distorção
# ---------------------------------------------------------------------
SWEEP = """
sampling.m_h = 1
codec.qam_order = 4
codec.quant_step = 0.125
mimo.n_streams = 4
mimo.symbols_per_frame = 16
sweep.frames = 4
sweep.seeds = 20
sweep.snr_db = 0, 4, 8, 12
"""


@pytest.mark.slow
def test_distortion_decreases_with_snr():
    cfg = parse_config(SWEEP)
    summary = summarize(run_sweep(cfg))
    mse = summary["mse"].to_numpy()
    assert np.all(np.diff(mse) <= 1e-12)
    rho, _ = spearmanr(summary["snr_db"], mse)
    assert rho <= -0.9
