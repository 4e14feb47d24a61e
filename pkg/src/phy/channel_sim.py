"""
Simulação de canal MIMO-OFDM multipercurso correlacionado no tempo.

O canal é uma linha de atrasos (TDL) com ganhos por tap que evoluem segundo um
processo autorregressivo de primeira ordem:

    G_t = ρ·G_{t-1} + sqrt(1-ρ²)·W_t,   ρ = J0(2π·f_d·T_s)

e a resposta em frequência por subportadora é a DFT dos taps:

    H_{t,i} = Σ_l G_{t,l}·exp(-j·2π·i·d_l/N_s)

Também contém os presets G1/G2 da configuração de referência (8x8, 64
subportadoras, 2,6 GHz) e a importação/exportação de traços binários.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import j0

from utils.errors import InvalidConfigError, InvalidInputError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

DEFAULT_TAP_DELAYS: Tuple[int, ...] = (0, 2, 5, 9)
DEFAULT_TAP_POWERS: Tuple[float, ...] = (0.5, 0.25, 0.15, 0.10)
DEFAULT_SYMBOL_DURATION_S = 1e-3

TRACE_MAGIC = b"MCVST01\x00"
_TRACE_HEADER = struct.Struct("<8s4I")


# ---------------------------------------------------------------------
# Configuração
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class ChannelConfig:
    """Parâmetros do canal TDL.

    Args:
        n_tx: Número de antenas de transmissão (N_t).
        n_rx: Número de antenas de recepção (N_r).
        n_subcarriers: Número de subportadoras (N_s).
        tap_delays: Atrasos inteiros dos taps, em amostras.
        tap_powers: Fração linear de potência de cada tap (soma 1).
        carrier_freq_hz: Frequência da portadora.
        speed_mps: Velocidade do móvel em m/s.
        symbol_duration_s: Duração do símbolo OFDM.
        seed: Semente do gerador do canal.
    """

    n_tx: int = 8
    n_rx: int = 8
    n_subcarriers: int = 64
    tap_delays: Tuple[int, ...] = DEFAULT_TAP_DELAYS
    tap_powers: Tuple[float, ...] = DEFAULT_TAP_POWERS
    carrier_freq_hz: float = 2.6e9
    speed_mps: float = 40.0 / 3.6
    symbol_duration_s: float = DEFAULT_SYMBOL_DURATION_S
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "tap_delays", tuple(int(d) for d in self.tap_delays))
        object.__setattr__(self, "tap_powers", tuple(float(p) for p in self.tap_powers))
        problems = channel_config_problems(self)
        if problems:
            raise InvalidConfigError("; ".join(message for _, message in problems))

    @property
    def rho(self) -> float:
        return doppler_coefficient(self.speed_mps, self.carrier_freq_hz, self.symbol_duration_s)


def channel_config_problems(cfg: ChannelConfig) -> List[Tuple[Tuple[str, ...], str]]:
    """Violações de invariantes do canal.

    Returns:
        Lista de ``(campos, mensagem)``; o primeiro campo é o que recebe o
        problema, os demais também participam da verificação.
    """
    problems: List[Tuple[Tuple[str, ...], str]] = []
    for name in ("n_tx", "n_rx", "n_subcarriers"):
        if getattr(cfg, name) < 1:
            problems.append(((name,), f"{name} deve ser >= 1"))
    delays, powers = cfg.tap_delays, cfg.tap_powers
    if len(delays) == 0:
        problems.append((("tap_delays",), "é preciso ao menos um tap"))
    if len(delays) != len(powers):
        problems.append((("tap_powers", "tap_delays"), "tap_delays e tap_powers devem ter o mesmo tamanho"))
    if any(p <= 0 for p in powers):
        problems.append((("tap_powers",), "tap_powers devem ser todos > 0"))
    elif powers and abs(sum(powers) - 1.0) > 1e-12:
        problems.append((("tap_powers",), f"tap_powers devem somar 1 (soma = {sum(powers):.15g})"))
    if any(b <= a for a, b in zip(delays, delays[1:])):
        problems.append((("tap_delays",), "tap_delays devem ser estritamente crescentes"))
    if any(d < 0 or d >= cfg.n_subcarriers for d in delays):
        problems.append((("tap_delays", "n_subcarriers"), "tap_delays devem estar em [0, n_subcarriers)"))
    if cfg.carrier_freq_hz <= 0:
        problems.append((("carrier_freq_hz",), "carrier_freq_hz deve ser > 0"))
    if cfg.symbol_duration_s <= 0:
        problems.append((("symbol_duration_s",), "symbol_duration_s deve ser > 0"))
    if cfg.speed_mps < 0:
        problems.append((("speed_mps",), "speed_mps não pode ser negativo"))
    return problems


@dataclass(frozen=True)
class ChannelPreset:
    name: str
    speed_mps: float
    symbols_per_frame: int


# Configurações de referência: 8x8, 64 subportadoras, 2,6 GHz.
CHANNEL_PRESETS = {
    "G1": ChannelPreset("G1", speed_mps=40.0 / 3.6, symbols_per_frame=1),
    "G2": ChannelPreset("G2", speed_mps=80.0 / 3.6, symbols_per_frame=4),
}


def channel_preset(name: str) -> ChannelPreset:
    """Retorna o preset ``G1`` ou ``G2`` (sem diferenciar maiúsculas)."""
    try:
        return CHANNEL_PRESETS[name.strip().upper()]
    except KeyError:
        raise InvalidConfigError(
            f"preset de canal desconhecido: {name!r} (use G1 ou G2)"
        ) from None


# ---------------------------------------------------------------------
# Operações
# ---------------------------------------------------------------------
def doppler_frequency(speed_mps: float, carrier_freq_hz: float) -> float:
    """Desvio Doppler máximo f_d = v·f_c/c."""
    return speed_mps * carrier_freq_hz / SPEED_OF_LIGHT


def doppler_coefficient(speed_mps: float, carrier_freq_hz: float, symbol_duration_s: float) -> float:
    """Coeficiente de correlação temporal ρ = J0(2π·f_d·T_s), limitado a [0, 1].

    Velocidade zero é aceita (canal estático, ρ = 1). Portadora e duração de
    símbolo precisam ser positivas.

    Raises:
        InvalidConfigError: entrada negativa, nula (exceto velocidade) ou não finita.
    """
    values = (speed_mps, carrier_freq_hz, symbol_duration_s)
    if not all(np.isfinite(v) for v in values):
        raise InvalidConfigError("parâmetros de Doppler devem ser finitos")
    if speed_mps < 0:
        raise InvalidConfigError(f"velocidade negativa: {speed_mps}")
    if carrier_freq_hz <= 0 or symbol_duration_s <= 0:
        raise InvalidConfigError("portadora e duração de símbolo devem ser > 0")
    arg = 2.0 * np.pi * doppler_frequency(speed_mps, carrier_freq_hz) * symbol_duration_s
    return float(np.clip(j0(arg), 0.0, 1.0))


def freq_response(
    tap_gains: np.ndarray,
    tap_delays: Sequence[int],
    n_subcarriers: int,
    method: Literal["fft", "direct"] = "fft",
) -> np.ndarray:
    """Resposta em frequência por subportadora.

    Args:
        tap_gains: Array complexo (n_taps, N_r, N_t).
        tap_delays: Atraso inteiro de cada tap.
        n_subcarriers: N_s.
        method: ``"fft"`` (padrão) ou ``"direct"`` (soma explícita).

    Returns:
        Array complexo (N_s, N_r, N_t).
    """
    gains = np.asarray(tap_gains, dtype=np.complex128)
    delays = np.asarray(tap_delays, dtype=np.int64)
    if gains.ndim != 3 or gains.shape[0] != delays.size:
        raise InvalidInputError("tap_gains deve ter forma (n_taps, N_r, N_t)")
    if np.any(delays < 0) or np.any(delays >= n_subcarriers):
        raise InvalidConfigError(f"atraso fora de [0, {n_subcarriers})")

    if method == "direct":
        bins = np.arange(n_subcarriers)
        phases = np.exp(-2j * np.pi * np.outer(bins, delays) / n_subcarriers)
        return np.einsum("il,lrt->irt", phases, gains)

    impulse = np.zeros((n_subcarriers,) + gains.shape[1:], dtype=np.complex128)
    # atrasos repetidos somam no mesmo bin
    np.add.at(impulse, delays, gains)
    return np.fft.fft(impulse, axis=0)


@dataclass(frozen=True)
class ChannelRealization:
    """Canal em frequência de um símbolo OFDM: ``freq_response[i]`` é N_r x N_t."""

    t: int
    freq_response: np.ndarray

    @property
    def n_subcarriers(self) -> int:
        return int(self.freq_response.shape[0])


def _complex_gaussian(rng: np.random.Generator, shape: Tuple[int, ...], variance: np.ndarray) -> np.ndarray:
    scale = np.sqrt(np.asarray(variance) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


class ChannelState:
    """Estado do canal TDL com ganhos AR(1).

    O índice de símbolo começa em 0. ``realization()`` devolve o símbolo atual
    sem avançar; ``step()`` avança um símbolo e devolve a nova realização.
    """

    def __init__(self, config: ChannelConfig, rng: Optional[np.random.Generator] = None) -> None:
        self.config = config
        self.rho = config.rho
        self._rng = rng if rng is not None else np.random.default_rng(config.seed)
        self._powers = np.asarray(config.tap_powers)[:, None, None]
        self._shape = (len(config.tap_delays), config.n_rx, config.n_tx)
        self.gains = _complex_gaussian(self._rng, self._shape, self._powers)
        self.t = 0

    def advance(self) -> None:
        """Atualiza os taps para o próximo símbolo (única mutação do estado)."""
        innovation = _complex_gaussian(self._rng, self._shape, self._powers)
        self.gains = self.rho * self.gains + np.sqrt(1.0 - self.rho**2) * innovation
        self.t += 1

    def realization(self) -> ChannelRealization:
        h = freq_response(self.gains, self.config.tap_delays, self.config.n_subcarriers)
        return ChannelRealization(t=self.t, freq_response=h)

    def step(self) -> ChannelRealization:
        self.advance()
        return self.realization()


def step(channel_state: ChannelState) -> ChannelRealization:
    """Avança o estado um símbolo e devolve a resposta em frequência nova."""
    return channel_state.step()


# ---------------------------------------------------------------------
# Traços binários
# ---------------------------------------------------------------------
def write_trace(path: Union[str, Path], responses: Union[np.ndarray, Sequence[ChannelRealization]]) -> Path:
    """Exporta uma sequência de respostas em frequência no formato ``MCVST01``.

    Args:
        path: Arquivo de destino.
        responses: Array (T, N_s, N_r, N_t) ou lista de ``ChannelRealization``.

    Returns:
        Caminho escrito.
    """
    if not isinstance(responses, np.ndarray):
        responses = np.stack([r.freq_response for r in responses]) if len(responses) else np.zeros((0, 1, 1, 1), complex)
    data = np.asarray(responses, dtype=np.complex128)
    if data.ndim != 4:
        raise InvalidInputError("traço deve ter forma (T, N_s, N_r, N_t)")
    n_sym, n_s, n_r, n_t = data.shape
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_TRACE_HEADER.pack(TRACE_MAGIC, n_r, n_t, n_s, n_sym))
        fh.write(np.ascontiguousarray(data).astype("<c16").tobytes())
    logger.debug("traço com %d símbolos gravado em %s", n_sym, path)
    return path


def read_trace(path: Union[str, Path]) -> np.ndarray:
    """Importa um traço ``MCVST01`` como array (T, N_s, N_r, N_t)."""
    raw = Path(path).read_bytes()
    if len(raw) < _TRACE_HEADER.size:
        raise InvalidInputError("traço truncado: cabeçalho incompleto")
    magic, n_r, n_t, n_s, n_sym = _TRACE_HEADER.unpack_from(raw)
    if magic != TRACE_MAGIC:
        raise InvalidInputError(f"assinatura de traço inválida: {magic!r}")
    expected = n_sym * n_s * n_r * n_t * 16
    payload = raw[_TRACE_HEADER.size:]
    if len(payload) != expected:
        raise InvalidInputError(f"traço com {len(payload)} bytes de dados, esperado {expected}")
    data = np.frombuffer(payload, dtype="<c16").astype(np.complex128)
    return data.reshape(n_sym, n_s, n_r, n_t)


@dataclass
class TraceChannel:
    """Reproduz um traço importado com a mesma interface de ``ChannelState``.

    Ao chegar ao fim, o traço recomeça do primeiro símbolo (com aviso no log).
    """

    responses: np.ndarray
    t: int = 0
    _warned: bool = field(default=False, repr=False)

    def __post_init__(self) -> None:
        if self.responses.ndim != 4 or self.responses.shape[0] == 0:
            raise InvalidInputError("traço vazio ou com forma inválida")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "TraceChannel":
        return cls(read_trace(path))

    @property
    def n_symbols(self) -> int:
        return int(self.responses.shape[0])

    def advance(self) -> None:
        self.t += 1
        if self.t >= self.n_symbols and not self._warned:
            logger.warning("traço esgotado após %d símbolos; recomeçando do início", self.n_symbols)
            self._warned = True

    def realization(self) -> ChannelRealization:
        return ChannelRealization(t=self.t, freq_response=self.responses[self.t % self.n_symbols])

    def step(self) -> ChannelRealization:
        self.advance()
        return self.realization()
