"""
Divisão determinística da semente raiz em sementes filhas.

Toda a aleatoriedade do simulador nasce de uma única semente de 64 bits. Cada
consumidor (canal, ruído, embedders, preditores, ...) recebe uma semente filha
derivada por

    filho = splitmix64(raiz XOR (stream_id * 0x9E3779B97F4A7C15))

com aritmética módulo 2^64. Os identificadores de fluxo estão em ``StreamId``.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class StreamId(IntEnum):
    CHANNEL = 1
    NOISE = 2
    CONTEXT_EMBED = 3
    CSI_EMBED = 4
    PREDICTORS = 5
    HYPERPRIOR = 6
    TRANSFORM = 7
    SOURCE = 8
    INTERLEAVER = 9


def splitmix64(x: int) -> int:
    """Função de mistura splitmix64 (um passo, sem estado)."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def child_seed(root: int, stream_id: int) -> int:
    """Semente filha para ``stream_id`` a partir da semente raiz."""
    root &= MASK64
    return splitmix64(root ^ ((int(stream_id) * GOLDEN_GAMMA) & MASK64))


def child_rng(root: int, stream_id: int) -> np.random.Generator:
    """Gerador numpy independente para um fluxo da semente raiz."""
    return np.random.default_rng(child_seed(root, stream_id))
