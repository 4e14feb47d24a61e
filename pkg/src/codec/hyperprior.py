"""
Densidade fatorada do hiperlatente z̃.

Cada canal j de z̃ tem uma CDF monotônica própria, uma mistura de logísticas
com parâmetros ψ^(j) = (pesos, posições, escalas). A probabilidade de um
inteiro é a massa da caixa [z − ½, z + ½]. O padrão é uma única logística de
posição 0 e escala sorteada em [4, 8] por canal.

O hiperlatente é obtido do latente principal pela magnitude média de cada
grupo de canais em blocos 2x2, levada ao domínio do preditor de escala.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from codec.entropy import quantize
from codec.range_coder import CdfTable
from utils.errors import InvalidParamsError

Z_LIMIT = 64
SUPPORT_SCALES = 40
MIN_MAGNITUDE = 0.01


@dataclass(frozen=True)
class ChannelDensity:
    """Parâmetros ψ de um canal: mistura de logísticas."""

    weights: Tuple[float, ...]
    locs: Tuple[float, ...]
    scales: Tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.weights)
        if n == 0 or len(self.locs) != n or len(self.scales) != n:
            raise InvalidParamsError("ψ precisa de pesos, posições e escalas do mesmo tamanho")
        values = self.weights + self.locs + self.scales
        if not all(math.isfinite(v) for v in values):
            raise InvalidParamsError("ψ com valores não finitos")
        if any(w < 0 for w in self.weights) or abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise InvalidParamsError("pesos de ψ devem ser >= 0 e somar 1")
        if any(s <= 0 for s in self.scales):
            raise InvalidParamsError("escalas de ψ devem ser > 0")

    def cdf(self, x: float) -> float:
        total = 0.0
        for w, loc, s in zip(self.weights, self.locs, self.scales):
            total += w * _sigmoid((x - loc) / s)
        return total

    def box_prob(self, z: float) -> float:
        """Massa em [z − ½, z + ½], calculada pela cauda mais estável."""
        total = 0.0
        for w, loc, s in zip(self.weights, self.locs, self.scales):
            upper = (z + 0.5 - loc) / s
            lower = (z - 0.5 - loc) / s
            if lower > 0:
                # cauda superior: diferença das sobrevivências
                total += w * (_sigmoid(-lower) - _sigmoid(-upper))
            else:
                total += w * (_sigmoid(upper) - _sigmoid(lower))
        return total

    def support(self) -> Tuple[int, int]:
        lo = min(loc - SUPPORT_SCALES * s for loc, s in zip(self.locs, self.scales))
        hi = max(loc + SUPPORT_SCALES * s for loc, s in zip(self.locs, self.scales))
        return min(-Z_LIMIT, int(math.floor(lo))), max(Z_LIMIT, int(math.ceil(hi)))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass(frozen=True)
class HyperDensity:
    """Densidades de todos os canais do hiperlatente."""

    channels: Tuple[ChannelDensity, ...]

    @classmethod
    def default(cls, n_channels: int, rng: np.random.Generator) -> "HyperDensity":
        scales = rng.uniform(4.0, 8.0, size=n_channels)
        return cls(tuple(ChannelDensity((1.0,), (0.0,), (float(s),)) for s in scales))

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def table(self, channel: int) -> CdfTable:
        return _density_table(self.channels[channel])


@lru_cache(maxsize=256)
def _density_table(density: ChannelDensity) -> CdfTable:
    lo, hi = density.support()
    return CdfTable(density.cdf, lo, hi)


def hyper_likelihood(z: np.ndarray, psi: HyperDensity) -> np.ndarray:
    """Probabilidade de caixa de cada elemento de z (canal no eixo 0).

    Raises:
        InvalidParamsError: número de canais diferente de ψ.
    """
    z = np.asarray(z)
    if z.shape[0] != psi.n_channels:
        raise InvalidParamsError(
            f"z tem {z.shape[0]} canais, ψ descreve {psi.n_channels}"
        )
    out = np.empty(z.shape, dtype=float)
    for j, density in enumerate(psi.channels):
        flat = z[j].reshape(-1)
        out[j] = np.array([density.box_prob(float(v)) for v in flat]).reshape(z[j].shape)
    return out


# ---------------------------------------------------------------------
# Análise do hiperlatente
# ---------------------------------------------------------------------
def softplus_inv(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x + np.log(-np.expm1(-x))


def block_mean(plane: np.ndarray, block: int = 2) -> np.ndarray:
    """Média em blocos ``block x block`` (blocos de borda parciais)."""
    h, w = plane.shape
    hb, wb = -(-h // block), -(-w // block)
    sums = np.zeros((hb, wb))
    counts = np.zeros((hb, wb))
    rows = np.arange(h) // block
    cols = np.arange(w) // block
    np.add.at(sums, (rows[:, None], cols[None, :]), plane)
    np.add.at(counts, (rows[:, None], cols[None, :]), 1.0)
    return sums / counts


def hyper_analysis(y: np.ndarray, context_group: int) -> np.ndarray:
    """Hiperlatente z̃ (n_grupos, ceil(H'/2), ceil(W'/2)) de um latente inteiro.

    Args:
        y: Latente L x H' x W'.
        context_group: m_c, canais por grupo.
    """
    y = np.asarray(y, dtype=float)
    n_groups = y.shape[0] // context_group
    planes: List[np.ndarray] = []
    for i in range(n_groups):
        mag = np.abs(y[i * context_group:(i + 1) * context_group]).mean(axis=0)
        planes.append(block_mean(mag))
    magnitude = np.maximum(np.stack(planes), MIN_MAGNITUDE)
    z = quantize(2.0 * softplus_inv(magnitude))
    return np.clip(z, -Z_LIMIT, Z_LIMIT)


def hyper_tables(z_shape: Sequence[int], psi: HyperDensity) -> List[CdfTable]:
    """Tabelas por elemento de z em ordem raster (canal, linha, coluna)."""
    per_channel = int(np.prod(z_shape[1:]))
    return [psi.table(j) for j in range(z_shape[0]) for _ in range(per_channel)]
