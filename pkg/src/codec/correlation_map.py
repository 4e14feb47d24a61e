"""
Mapa de correlação contexto-subportadora.

Para cada grupo de contexto i (m_c canais das features) e cada grupo de
subportadoras j (o CSI do representante), o mapa é o softmax por linha das
similaridades de cosseno com temperatura τ:

    m_ij = exp(sim_ij/τ) / Σ_j exp(sim_ij/τ)

Os codificadores de features são projeções lineares fixas (sementes) seguidas
de normalização L2. A interface ``FeatureEmbedder`` permite trocar por pesos
treinados sem mudar o restante do código.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from phy.sampling import SampledCsi
from utils.errors import InvalidConfigError, InvalidInputError
from utils.seeding import StreamId, child_rng


@dataclass(frozen=True)
class MapConfig:
    feature_channels: int = 64
    context_group: int = 8
    subcarrier_group: int = 8
    temperature: float = 0.07
    embed_dim: int = 32
    n_subcarriers: int = 64

    def __post_init__(self) -> None:
        if self.feature_channels < 1 or self.context_group < 1:
            raise InvalidConfigError("L e m_c devem ser >= 1")
        if self.feature_channels % self.context_group:
            raise InvalidConfigError(
                f"m_c={self.context_group} não divide L={self.feature_channels}"
            )
        if not (self.temperature > 0 and np.isfinite(self.temperature)):
            raise InvalidConfigError(f"temperatura deve ser > 0 (recebido {self.temperature})")
        if self.embed_dim < 1:
            raise InvalidConfigError("embed_dim deve ser >= 1")
        if self.subcarrier_group < 1 or self.n_subcarriers % self.subcarrier_group:
            raise InvalidConfigError(
                f"m_h={self.subcarrier_group} não divide N_s={self.n_subcarriers}"
            )

    @property
    def n_rows(self) -> int:
        return self.feature_channels // self.context_group

    @property
    def n_cols(self) -> int:
        return self.n_subcarriers // self.subcarrier_group


class FeatureEmbedder(Protocol):
    def __call__(self, vector: np.ndarray) -> np.ndarray:
        """Devolve um vetor unitário de dimensão d_e."""
        ...


class LinearEmbedder:
    """Projeção linear fixa seguida de normalização L2.

    Entradas que projetam no vetor nulo (inclusive a entrada nula) viram o
    vetor canônico e₀.
    """

    def __init__(self, in_dim: int, embed_dim: int, rng: np.random.Generator) -> None:
        self.in_dim = in_dim
        self.embed_dim = embed_dim
        self.weights = rng.standard_normal((embed_dim, in_dim)) / np.sqrt(in_dim)

    def __call__(self, vector: np.ndarray) -> np.ndarray:
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.size != self.in_dim:
            raise InvalidInputError(f"embedder espera {self.in_dim} valores, recebeu {vector.size}")
        z = self.weights @ vector
        norm = np.linalg.norm(z)
        if norm == 0 or not np.isfinite(norm):
            e0 = np.zeros(self.embed_dim)
            e0[0] = 1.0
            return e0
        return z / norm


@dataclass(frozen=True)
class MapEmbedders:
    context: FeatureEmbedder
    csi: FeatureEmbedder

    @classmethod
    def from_seed(cls, root_seed: int, config: MapConfig, n_rx: int, n_tx: int) -> "MapEmbedders":
        return cls(
            context=LinearEmbedder(config.context_group, config.embed_dim, child_rng(root_seed, StreamId.CONTEXT_EMBED)),
            csi=LinearEmbedder(2 * n_rx * n_tx, config.embed_dim, child_rng(root_seed, StreamId.CSI_EMBED)),
        )


@dataclass(frozen=True)
class CorrelationMap:
    """Matriz estocástica por linha (L/m_c) x (N_s/m_h)."""

    values: np.ndarray
    t: int

    def row_max(self) -> np.ndarray:
        return self.values.max(axis=1)


def embed_context(context: np.ndarray, group: int, embedder: FeatureEmbedder, context_group: int) -> np.ndarray:
    """Vetor unitário do grupo ``group`` de canais do contexto (L x H' x W').

    O bloco de m_c canais é reduzido pela média espacial antes da projeção.
    """
    context = np.asarray(context, dtype=float)
    n_rows = context.shape[0] // context_group
    if not 0 <= group < n_rows:
        raise InvalidInputError(f"grupo de contexto {group} fora de [0, {n_rows})")
    slab = context[group * context_group:(group + 1) * context_group]
    return embedder(slab.mean(axis=(1, 2)))


def embed_csi(h: np.ndarray, embedder: FeatureEmbedder) -> np.ndarray:
    """Vetor unitário de uma matriz de CSI (re/im intercalados)."""
    h = np.asarray(h, dtype=np.complex128)
    if not np.all(np.isfinite(h)):
        raise InvalidInputError("CSI com entradas não finitas")
    return embedder(np.stack([h.real, h.imag], axis=-1).reshape(-1))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def build_map(
    context: np.ndarray,
    sampled_csi: SampledCsi,
    config: MapConfig,
    embedders: MapEmbedders,
) -> CorrelationMap:
    """Constrói o mapa de correlação do símbolo ``sampled_csi.t``.

    Raises:
        InvalidInputError: número de canais do contexto diferente de L, ou
            número de entradas de CSI diferente de N_s/m_h.
    """
    context = np.asarray(context, dtype=float)
    if context.ndim != 3 or context.shape[0] != config.feature_channels:
        raise InvalidInputError(
            f"contexto deve ter forma ({config.feature_channels}, H', W'), recebido {context.shape}"
        )
    if len(sampled_csi.entries) != config.n_cols:
        raise InvalidInputError(
            f"CSI com {len(sampled_csi.entries)} representantes, esperado N_s/m_h = {config.n_cols}"
        )
    ctx = np.stack([
        embed_context(context, i, embedders.context, config.context_group)
        for i in range(config.n_rows)
    ])
    csi = np.stack([embed_csi(h, embedders.csi) for h in sampled_csi.entries])
    similarity = ctx @ csi.T
    return CorrelationMap(values=softmax_rows(similarity / config.temperature), t=sampled_csi.t)
