"""
Amostragem recursiva de subportadoras e histórico de CSI.

As N_s subportadoras são divididas em N_s/m_h grupos de m_h subportadoras
adjacentes. No símbolo t, cada grupo envia o CSI da posição relativa
``t mod m_h``; o deslocamento avança uma posição por símbolo, de modo que m_h
símbolos consecutivos cobrem todas as subportadoras exatamente uma vez.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Tuple

import numpy as np

from phy.channel_sim import ChannelRealization
from utils.errors import InvalidConfigError, InvalidInputError, OrderingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplingSchedule:
    n_subcarriers: int
    group_size: int

    def __post_init__(self) -> None:
        if self.n_subcarriers < 1 or self.group_size < 1:
            raise InvalidConfigError("n_subcarriers e group_size devem ser >= 1")
        if self.n_subcarriers % self.group_size:
            raise InvalidConfigError(
                f"m_h={self.group_size} não divide N_s={self.n_subcarriers}"
            )

    @property
    def n_groups(self) -> int:
        return self.n_subcarriers // self.group_size

    def offset(self, t: int) -> int:
        return t % self.group_size

    def group_of(self, subcarrier: int) -> int:
        return subcarrier // self.group_size


@dataclass(frozen=True)
class SampledCsi:
    """CSI realimentado: um representante por grupo (``entries[g]`` é N_r x N_t)."""

    t: int
    entries: np.ndarray
    positions: Tuple[int, ...]


def sampled_indices(schedule: SamplingSchedule, t: int) -> List[int]:
    """Índices absolutos amostrados no símbolo ``t``: ``g·m_h + (t mod m_h)``."""
    if t < 0:
        raise InvalidInputError(f"índice de símbolo negativo: {t}")
    offset = schedule.offset(t)
    return [g * schedule.group_size + offset for g in range(schedule.n_groups)]


def sample(realization: ChannelRealization, schedule: SamplingSchedule, t: Optional[int] = None) -> SampledCsi:
    """Extrai o CSI dos representantes de cada grupo.

    Args:
        realization: Resposta em frequência do símbolo.
        schedule: Agenda de amostragem.
        t: Índice de símbolo da agenda; por padrão, ``realization.t``.

    Raises:
        InvalidInputError: número de subportadoras diferente da agenda.
    """
    if realization.n_subcarriers != schedule.n_subcarriers:
        raise InvalidInputError(
            f"realização com {realization.n_subcarriers} subportadoras, agenda com {schedule.n_subcarriers}"
        )
    t = realization.t if t is None else t
    positions = sampled_indices(schedule, t)
    entries = realization.freq_response[positions].copy()
    return SampledCsi(t=t, entries=entries, positions=tuple(positions))


# ---------------------------------------------------------------------
# Histórico
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class CsiAssembly:
    """Amostras mais recentes por posição relativa dentro do grupo.

    ``entries[g, o]`` é o CSI do grupo g na posição o; ``timestamps[o]`` é o
    símbolo de origem (-1 se a posição ainda não foi amostrada).
    """

    entries: np.ndarray
    timestamps: np.ndarray
    group_size: int

    @property
    def present(self) -> np.ndarray:
        return self.timestamps >= 0

    @property
    def n_missing(self) -> int:
        return int(np.count_nonzero(~self.present))


class CsiHistory:
    """Anel com os últimos m_h registros de ``SampledCsi``."""

    def __init__(self, schedule: SamplingSchedule) -> None:
        self.schedule = schedule
        self.ring: Deque[SampledCsi] = deque(maxlen=schedule.group_size)

    @property
    def last_t(self) -> Optional[int]:
        return self.ring[-1].t if self.ring else None

    def push(self, sampled: SampledCsi) -> None:
        if self.ring and sampled.t <= self.ring[-1].t:
            raise OrderingError(
                f"símbolo {sampled.t} não é posterior ao último registrado ({self.ring[-1].t})"
            )
        if len(sampled.positions) != self.schedule.n_groups:
            raise InvalidInputError("amostra com número de grupos diferente da agenda")
        self.ring.append(sampled)

    def assemble(self) -> CsiAssembly:
        m_h = self.schedule.group_size
        n_groups = self.schedule.n_groups
        if self.ring:
            shape = self.ring[-1].entries.shape[1:]
        else:
            shape = (0, 0)
        entries = np.zeros((n_groups, m_h) + tuple(shape), dtype=np.complex128)
        timestamps = np.full(m_h, -1, dtype=np.int64)
        # o anel está em ordem crescente de t: o último a escrever vence
        for record in self.ring:
            offset = record.positions[0] % m_h
            entries[:, offset] = record.entries
            timestamps[offset] = record.t
        return CsiAssembly(entries=entries, timestamps=timestamps, group_size=m_h)


def push_and_assemble(history: CsiHistory, sampled: SampledCsi) -> CsiAssembly:
    """Registra a amostra e devolve, por grupo, a amostra mais recente de cada posição.

    Raises:
        OrderingError: ``sampled.t`` não é estritamente maior que o anterior.
    """
    history.push(sampled)
    assembly = history.assemble()
    if assembly.n_missing:
        logger.debug("histórico de CSI em aquecimento: %d posições ausentes", assembly.n_missing)
    return assembly


def latest_csi_per_subcarrier(assembly: CsiAssembly) -> Tuple[np.ndarray, np.ndarray]:
    """Reconstrói o CSI por subportadora a partir do histórico.

    Returns:
        Tupla ``(csi, known)`` com ``csi`` (N_s, N_r, N_t) e ``known`` (N_s,)
        indicando as subportadoras com amostra própria no anel.
    """
    n_groups, m_h = assembly.entries.shape[:2]
    csi = assembly.entries.reshape((n_groups * m_h,) + assembly.entries.shape[2:])
    known = np.tile(assembly.present, n_groups)
    return csi, known


@dataclass(frozen=True)
class CoverageAudit:
    rows: List[Tuple[int, List[int]]]
    partition_ok: bool
    n_subcarriers: int


def coverage_audit(schedule: SamplingSchedule, t0: int = 0) -> CoverageAudit:
    """Índices de m_h símbolos consecutivos a partir de ``t0`` e se eles particionam 0..N_s-1."""
    rows = [(t, sampled_indices(schedule, t)) for t in range(t0, t0 + schedule.group_size)]
    flat = sorted(i for _, idx in rows for i in idx)
    return CoverageAudit(
        rows=rows,
        partition_ok=flat == list(range(schedule.n_subcarriers)),
        n_subcarriers=schedule.n_subcarriers,
    )
