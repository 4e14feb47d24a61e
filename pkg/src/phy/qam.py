"""
Modulação QAM quadrada com mapeamento Gray (4, 16 e 64 pontos).

Cada símbolo recebe log2(M) bits: a primeira metade define o eixo I e a
segunda o eixo Q. Em cada eixo o código Gray g é convertido no índice binário b
e o nível é ``(√M − 1) − 2b``; o resultado é normalizado para energia média 1.
Com isso, em QPSK, ``00`` mapeia para (1 + j)/√2.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from utils.errors import InvalidConfigError, InvalidInputError

SUPPORTED_ORDERS = (4, 16, 64)


def _check_order(order: int) -> Tuple[int, int]:
    if order not in SUPPORTED_ORDERS:
        raise InvalidConfigError(f"ordem QAM não suportada: {order} (use 4, 16 ou 64)")
    bits_per_symbol = int(order).bit_length() - 1
    return bits_per_symbol, int(round(np.sqrt(order)))


def bits_per_symbol(order: int) -> int:
    return _check_order(order)[0]


def _normalization(order: int) -> float:
    return float(np.sqrt(2.0 * (order - 1) / 3.0))


def _gray_to_binary(g: np.ndarray, n_bits: int) -> np.ndarray:
    b = g.copy()
    shift = 1
    while shift < n_bits:
        b ^= b >> shift
        shift <<= 1
    return b


def _pack(bits: np.ndarray) -> np.ndarray:
    """Linhas de bits (MSB primeiro) para inteiros."""
    weights = 1 << np.arange(bits.shape[1] - 1, -1, -1)
    return bits.astype(np.int64) @ weights


def _unpack(values: np.ndarray, n_bits: int) -> np.ndarray:
    shifts = np.arange(n_bits - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8)


def qam_map(bits: np.ndarray, order: int) -> np.ndarray:
    """Converte bits em símbolos complexos QAM Gray de energia média unitária.

    Raises:
        InvalidConfigError: ordem não suportada.
        InvalidInputError: bits fora de {0, 1} ou comprimento não múltiplo de log2(M).
    """
    k, side = _check_order(order)
    bits = np.asarray(bits).reshape(-1)
    if bits.size % k:
        raise InvalidInputError(f"{bits.size} bits não é múltiplo de {k}")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise InvalidInputError("bits devem ser 0 ou 1")
    groups = bits.reshape(-1, k).astype(np.int64)
    half = k // 2
    b_i = _gray_to_binary(_pack(groups[:, :half]), half)
    b_q = _gray_to_binary(_pack(groups[:, half:]), half)
    level_i = (side - 1) - 2 * b_i
    level_q = (side - 1) - 2 * b_q
    return (level_i + 1j * level_q) / _normalization(order)


def qam_demap(symbols: np.ndarray, order: int) -> np.ndarray:
    """Decisão abrupta pelo vizinho mais próximo; devolve bits uint8."""
    k, side = _check_order(order)
    symbols = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    half = k // 2
    scaled = symbols * _normalization(order)

    def axis_bits(level: np.ndarray) -> np.ndarray:
        b = np.rint(((side - 1) - level) / 2.0)
        b = np.clip(np.nan_to_num(b, nan=0.0), 0, side - 1).astype(np.int64)
        return _unpack(b ^ (b >> 1), half)

    out = np.concatenate([axis_bits(scaled.real), axis_bits(scaled.imag)], axis=1)
    return out.reshape(-1)


def constellation(order: int) -> np.ndarray:
    """Todos os pontos, indexados pelo valor inteiro dos bits do símbolo."""
    k, _ = _check_order(order)
    idx = np.arange(order)
    return qam_map(_unpack(idx, k).reshape(-1), order)
