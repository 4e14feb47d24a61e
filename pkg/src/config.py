"""
Configuração de experimentos.

Formato texto, uma chave por linha::

    # comentário
    mimo.preset = G2
    sampling.m_h = 8
    sweep.snr_db = 0, 2, 4, 6, 8, 10, 12, 14

Seções: ``mimo`` (sinônimo ``channel``), ``sampling``, ``map``, ``codec``,
``sweep`` e ``io``. Cada seção é um modelo pydantic com ``extra="forbid"``;
os invariantes que cruzam seções são verificados depois. Todos os problemas
encontrados são devolvidos juntos, cada um com o número da linha de origem.

A semente raiz vem de ``sweep.seed``; a variável de ambiente ``MCVST_SEED``
tem precedência sobre o arquivo e ``--seed`` na CLI sobre ambos.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from codec.correlation_map import MapConfig
from phy.channel_sim import (
    DEFAULT_SYMBOL_DURATION_S,
    DEFAULT_TAP_DELAYS,
    DEFAULT_TAP_POWERS,
    ChannelConfig,
    channel_config_problems,
    channel_preset,
)
from phy.qam import SUPPORTED_ORDERS
from utils.errors import ConfigError, ConfigIssue, InvalidConfigError
from utils.seeding import StreamId, child_seed

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "MCVST_SEED"
SECTION_ALIASES = {"channel": "mimo"}

DEFAULT_SNR_DB = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0]
DEFAULT_LAMBDAS = [0.015, 0.06, 0.12, 0.20, 0.32]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class MimoSection(_Section):
    preset: Optional[Literal["G1", "G2"]] = "G1"
    n_tx: int = Field(8, ge=1)
    n_rx: int = Field(8, ge=1)
    n_subcarriers: int = Field(64, ge=1)
    tap_delays: List[int] = Field(default_factory=lambda: list(DEFAULT_TAP_DELAYS))
    tap_powers: List[float] = Field(default_factory=lambda: list(DEFAULT_TAP_POWERS))
    carrier_freq_hz: float = Field(2.6e9, gt=0)
    speed_mps: float = Field(40.0 / 3.6, ge=0)
    symbol_duration_s: float = Field(DEFAULT_SYMBOL_DURATION_S, gt=0)
    symbols_per_frame: int = Field(1, ge=1)
    n_streams: int = Field(0, ge=0, description="0 = min(n_rx, n_tx)")
    power_allocation: Literal["equal", "waterfilling"] = "equal"
    interleave: bool = False

    @field_validator("preset", mode="before")
    @classmethod
    def _upper_preset(cls, value: Any) -> Any:
        if isinstance(value, str):
            value = value.strip().upper()
            return None if value in ("", "NONE") else value
        return value

    @model_validator(mode="before")
    @classmethod
    def _apply_preset(cls, data: Any) -> Any:
        if isinstance(data, dict):
            name = data.get("preset", "G1")
            if isinstance(name, str) and name.strip().upper() in ("G1", "G2"):
                preset = channel_preset(name)
                data = dict(data)
                data.setdefault("speed_mps", preset.speed_mps)
                data.setdefault("symbols_per_frame", preset.symbols_per_frame)
        return data

    @property
    def active_streams(self) -> int:
        return self.n_streams or min(self.n_rx, self.n_tx)


class SamplingSection(_Section):
    m_h: int = Field(8, ge=1)
    csi_mode: Literal["representative", "recursive"] = "representative"


class MapSection(_Section):
    feature_channels: int = Field(64, ge=1, le=768)
    m_c: int = Field(8, ge=1)
    temperature: float = Field(0.07, gt=0)
    embed_dim: int = Field(32, ge=1)


class CodecSection(_Section):
    qam_order: int = 64
    quant_step: float = Field(1.0, gt=0)
    scale_floor: float = Field(1e-6, ge=1e-6)
    lambdas: List[float] = Field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    eta_policy: Literal["map", "unit"] = "map"
    reference_mode: Literal["temporal", "current"] = "temporal"

    @field_validator("qam_order")
    @classmethod
    def _check_order(cls, value: int) -> int:
        if value not in SUPPORTED_ORDERS:
            raise ValueError(f"ordem QAM deve ser uma de {SUPPORTED_ORDERS}")
        return value

    @field_validator("lambdas")
    @classmethod
    def _check_lambdas(cls, value: List[float]) -> List[float]:
        if any(v < 0 for v in value):
            raise ValueError("λ deve ser >= 0")
        return value


class SweepSection(_Section):
    seed: int = Field(0, ge=0, lt=2**64)
    seeds: int = Field(4, ge=1)
    snr_db: List[float] = Field(default_factory=lambda: list(DEFAULT_SNR_DB))
    frames: int = Field(4, ge=1)
    height: int = Field(64, ge=1)
    width: int = Field(64, ge=1)
    static_gop: bool = False


class IoSection(_Section):
    trace_path: Optional[Path] = None
    output_path: Path = Path("results.csv")

    @field_validator("trace_path", mode="before")
    @classmethod
    def _empty_path(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        return value


class ExperimentConfig(_Section):
    mimo: MimoSection = Field(default_factory=MimoSection)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    map: MapSection = Field(default_factory=MapSection)
    codec: CodecSection = Field(default_factory=CodecSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    io: IoSection = Field(default_factory=IoSection)

    # -----------------------------------------------------------------
    # Conversões para os tipos dos módulos
    # -----------------------------------------------------------------
    def channel_config(self, run_seed: int) -> ChannelConfig:
        m = self.mimo
        return ChannelConfig(
            n_tx=m.n_tx,
            n_rx=m.n_rx,
            n_subcarriers=m.n_subcarriers,
            tap_delays=tuple(m.tap_delays),
            tap_powers=tuple(m.tap_powers),
            carrier_freq_hz=m.carrier_freq_hz,
            speed_mps=m.speed_mps,
            symbol_duration_s=m.symbol_duration_s,
            seed=child_seed(run_seed, StreamId.CHANNEL),
        )

    def map_config(self) -> MapConfig:
        return MapConfig(
            feature_channels=self.map.feature_channels,
            context_group=self.map.m_c,
            subcarrier_group=self.sampling.m_h,
            temperature=self.map.temperature,
            embed_dim=self.map.embed_dim,
            n_subcarriers=self.mimo.n_subcarriers,
        )

    @property
    def n_subcarrier_groups(self) -> int:
        return self.mimo.n_subcarriers // self.sampling.m_h

    def run_seeds(self) -> List[int]:
        return [self.sweep.seed + k for k in range(self.sweep.seeds)]


# ---------------------------------------------------------------------
# Leitura do texto
# ---------------------------------------------------------------------
def _parse_value(raw: str) -> Union[str, List[str]]:
    text = raw.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
        return [p.strip() for p in text.split(",") if p.strip()]
    if "," in text:
        return [p.strip() for p in text.split(",") if p.strip()]
    return text


_LIST_FIELDS = {("mimo", "tap_delays"), ("mimo", "tap_powers"), ("codec", "lambdas"), ("sweep", "snr_db")}


def _read_lines(text: str) -> Tuple[Dict[str, Dict[str, Any]], Dict[Tuple[str, ...], int], List[ConfigIssue]]:
    data: Dict[str, Dict[str, Any]] = {}
    lines: Dict[Tuple[str, ...], int] = {}
    issues: List[ConfigIssue] = []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            issues.append(ConfigIssue(number, stripped, "linha sem '='"))
            continue
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key.count(".") != 1:
            issues.append(ConfigIssue(number, key, "chave deve ter a forma secao.chave"))
            continue
        section, name = key.split(".")
        section = SECTION_ALIASES.get(section, section)
        if (section, name) in lines:
            issues.append(ConfigIssue(number, key, f"chave repetida (primeira na linha {lines[(section, name)]})"))
            continue
        parsed = _parse_value(value)
        if (section, name) in _LIST_FIELDS and isinstance(parsed, str):
            parsed = [parsed] if parsed else []
        data.setdefault(section, {})[name] = parsed
        lines[(section, name)] = number
        lines.setdefault((section,), number)
    return data, lines, issues


_Field = Tuple[str, str]


def _validate_sections(
    data: Dict[str, Dict[str, Any]],
    lines: Dict[Tuple[str, ...], int],
) -> Tuple[Dict[str, _Section], Set[_Field], List[ConfigIssue]]:
    """Valida cada seção separadamente.

    Campos rejeitados são descartados e a seção é validada de novo com o
    restante, de modo que as verificações entre seções ainda rodem sobre os
    valores que passaram. Devolve as seções, os campos rejeitados e os problemas.
    """
    sections: Dict[str, _Section] = {}
    failed: Set[_Field] = set()
    issues: List[ConfigIssue] = []
    for name in data:
        if name not in ExperimentConfig.model_fields:
            issues.append(ConfigIssue(lines.get((name,)), name, "seção desconhecida"))
    for name, info in ExperimentConfig.model_fields.items():
        model = info.annotation
        raw = data.get(name, {})
        try:
            sections[name] = model.model_validate(raw)
            continue
        except ValidationError as exc:
            bad: Set[str] = set()
            for err in exc.errors():
                loc = (name,) + tuple(str(p) for p in err["loc"])
                issues.append(ConfigIssue(lines.get(loc[:2]) or lines.get(loc[:1]), ".".join(loc), err["msg"]))
                bad.update([loc[1]] if len(loc) > 1 else raw.keys())
        failed.update((name, key) for key in bad)
        try:
            sections[name] = model.model_validate({k: v for k, v in raw.items() if k not in bad})
        except ValidationError:
            failed.update((name, key) for key in model.model_fields)
            sections[name] = model()
    return sections, failed, issues


def _cross_section_issues(
    cfg: ExperimentConfig,
    lines: Dict[Tuple[str, ...], int],
    failed: Set[_Field],
) -> List[ConfigIssue]:
    issues: List[ConfigIssue] = []

    def check(fields: Sequence[_Field], message: str) -> None:
        # verificações que dependem de um campo rejeitado não se aplicam
        if any(f in failed for f in fields):
            return
        line = next((lines[f] for f in fields if f in lines), None)
        issues.append(ConfigIssue(line, ".".join(fields[0]), message))

    for names, problem in channel_config_problems(cfg.mimo):
        check([("mimo", n) for n in names], problem)
    if cfg.mimo.n_subcarriers % cfg.sampling.m_h:
        check(
            [("sampling", "m_h"), ("mimo", "n_subcarriers")],
            f"m_h={cfg.sampling.m_h} não divide N_s={cfg.mimo.n_subcarriers}",
        )
    if cfg.map.feature_channels % cfg.map.m_c:
        check(
            [("map", "m_c"), ("map", "feature_channels")],
            f"m_c={cfg.map.m_c} não divide L={cfg.map.feature_channels}",
        )
    if cfg.mimo.n_streams > min(cfg.mimo.n_rx, cfg.mimo.n_tx):
        check([("mimo", "n_streams"), ("mimo", "n_rx"), ("mimo", "n_tx")], "n_streams excede min(n_rx, n_tx)")
    if not cfg.sweep.snr_db:
        check([("sweep", "snr_db")], "lista de SNR vazia")
    return issues


def parse_config(text: str) -> ExperimentConfig:
    """Interpreta e valida o texto de configuração.

    Returns:
        Configuração validada (texto vazio resulta nos padrões).

    Raises:
        ConfigError: com a lista completa de problemas (chave desconhecida,
            tipo inválido ou invariante violado), cada um com a linha, em
            ordem de linha.
    """
    data, lines, issues = _read_lines(text)
    sections, failed, field_issues = _validate_sections(data, lines)
    cfg = ExperimentConfig(**sections)
    issues.extend(field_issues)
    issues.extend(_cross_section_issues(cfg, lines, failed))
    if issues:
        ordered = sorted(issues, key=lambda i: (i.line is None, i.line or 0))
        raise ConfigError(ordered)
    return cfg


def load_config(path: Optional[Union[str, Path]]) -> ExperimentConfig:
    """Lê um arquivo de configuração (``None`` = padrões)."""
    if path is None:
        return parse_config("")
    return parse_config(Path(path).read_text(encoding="utf-8"))


def resolve_seed(cfg: ExperimentConfig, cli_seed: Optional[int] = None) -> ExperimentConfig:
    """Aplica ``MCVST_SEED`` e ``--seed`` sobre ``sweep.seed``."""
    seed = cfg.sweep.seed
    env_value = os.getenv(SEED_ENV_VAR)
    if env_value not in (None, ""):
        try:
            seed = int(env_value, 0)
        except ValueError:
            raise InvalidConfigError(f"{SEED_ENV_VAR} inválido: {env_value!r}") from None
        logger.info("semente %d lida de %s", seed, SEED_ENV_VAR)
    if cli_seed is not None:
        seed = cli_seed
    if seed == cfg.sweep.seed:
        return cfg
    sweep = cfg.sweep.model_copy(update={"seed": seed})
    try:
        SweepSection.model_validate(sweep.model_dump())
    except ValidationError:
        raise InvalidConfigError(f"semente fora de [0, 2^64): {seed}") from None
    return cfg.model_copy(update={"sweep": sweep})
