import pytest

from config import DEFAULT_LAMBDAS, DEFAULT_SNR_DB, load_config, parse_config, resolve_seed
from phy.channel_sim import channel_preset
from utils.errors import ConfigError, InvalidConfigError


def _issues(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.issues


def test_empty_text_gives_defaults():
    cfg = parse_config("")
    assert cfg.mimo.n_tx == 8 and cfg.mimo.n_rx == 8 and cfg.mimo.n_subcarriers == 64
    assert cfg.mimo.active_streams == 8
    assert cfg.sampling.m_h == 8 and cfg.map.m_c == 8
    assert cfg.codec.qam_order == 64
    assert cfg.sweep.snr_db == DEFAULT_SNR_DB
    assert cfg.codec.lambdas == DEFAULT_LAMBDAS
    assert cfg.n_subcarrier_groups == 8
    assert load_config(None) == cfg


def test_non_divisor_m_h_reported_with_line():
    (issue,) = _issues("sampling.m_h = 3\n")
    assert issue.line == 1 and issue.key == "sampling.m_h"


def test_all_field_errors_reported_together():
    text = "# teste\nmimo.foo = 1\ncodec.qam_order = 8\n\nsweep.frames = 0\n"
    issues = _issues(text)
    by_key = {i.key: i.line for i in issues}
    assert by_key == {"mimo.foo": 2, "codec.qam_order": 3, "sweep.frames": 5}


def test_cross_section_issues():
    issues = _issues("map.m_c = 6\nmimo.n_streams = 9\n")
    assert {i.key for i in issues} == {"map.m_c", "mimo.n_streams"}
    issues = _issues("mimo.tap_powers = 0.5, 0.3, 0.1, 0.05\n")
    assert issues[0].key == "mimo.tap_powers" and issues[0].line == 1


def test_cross_section_issues_survive_field_errors():
    issues = _issues("codec.qam_order = 8\nsampling.m_h = 3\nmimo.carrier_freq_hz = -1\n")
    assert [(i.line, i.key) for i in issues] == [
        (1, "codec.qam_order"),
        (2, "sampling.m_h"),
        (3, "mimo.carrier_freq_hz"),
    ]


def test_channel_issues_keyed_by_field():
    (issue,) = _issues("mimo.tap_powers = 0.6, 0.4\n")
    assert issue.key == "mimo.tap_powers" and issue.line == 1
    (issue,) = _issues("mimo.tap_delays = 0, 2, 5, 70\n")
    assert issue.key == "mimo.tap_delays" and issue.line == 1


def test_checks_on_rejected_fields_are_skipped():
    (issue,) = _issues("mimo.n_subcarriers = 60\nsampling.m_h = abc\n")
    assert issue.key == "sampling.m_h" and issue.line == 2


def test_syntax_errors():
    issues = _issues("sweep.seeds\nseeds = 3\nsweep.frames = 2\nsweep.frames = 3\n")
    assert [i.line for i in issues] == [1, 2, 4]


def test_presets_and_overrides():
    g2 = parse_config("mimo.preset = g2\n")
    assert g2.mimo.symbols_per_frame == 4
    assert g2.mimo.speed_mps == pytest.approx(channel_preset("G2").speed_mps)
    custom = parse_config("mimo.preset = G2\nmimo.symbols_per_frame = 2\nmimo.speed_mps = 0\n")
    assert custom.mimo.symbols_per_frame == 2 and custom.mimo.speed_mps == 0.0


def test_lists_aliases_and_bools():
    cfg = parse_config("channel.n_streams = 4\nsweep.snr_db = [3]\nmimo.interleave = true\ncodec.lambdas = 0.1, 0.2\n")
    assert cfg.mimo.active_streams == 4
    assert cfg.sweep.snr_db == [3.0]
    assert cfg.mimo.interleave is True
    assert cfg.codec.lambdas == [0.1, 0.2]
    assert _issues("mimo.interleave = talvez\n")[0].key == "mimo.interleave"


def test_channel_config_uses_run_seed():
    cfg = parse_config("")
    assert cfg.channel_config(1).seed != cfg.channel_config(2).seed
    assert cfg.run_seeds() == [0, 1, 2, 3]


def test_seed_precedence(monkeypatch):
    cfg = parse_config("sweep.seed = 5\n")
    assert resolve_seed(cfg).sweep.seed == 5
    monkeypatch.setenv("MCVST_SEED", "17")
    assert resolve_seed(cfg).sweep.seed == 17
    assert resolve_seed(cfg, 3).sweep.seed == 3
    monkeypatch.setenv("MCVST_SEED", "abc")
    with pytest.raises(InvalidConfigError):
        resolve_seed(cfg)


def test_seed_out_of_range():
    with pytest.raises(InvalidConfigError):
        resolve_seed(parse_config(""), -1)


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("sweep.frames = 7\n", encoding="utf-8")
    assert load_config(path).sweep.frames == 7
