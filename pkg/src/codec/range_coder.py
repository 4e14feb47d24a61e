"""
Codificador aritmético binário (faixa de 64 bits, frequências de 32 bits).

Cada símbolo é codificado com uma tabela própria que expõe o intervalo de
suporte ``[lo, hi]`` e a CDF quantizada ``cum(k)`` com ``cum(lo) = 0`` e
``cum(hi + 1) = FREQ_TOTAL``. As tabelas de Laplace e da densidade do
hiperprior avaliam a CDF com ``math`` escalar, o mesmo caminho no codificador e
no decodificador, o que mantém o fluxo de bits idêntico nos dois lados.

A quantização da CDF é

    cum(k) = floor(G(k)·(FREQ_TOTAL − K)) + (k − lo)

com G a CDF contínua renormalizada no suporte truncado e K o tamanho do
suporte; todo símbolo recebe frequência >= 1.

Terminação: após o último símbolo, emite-se o bit que fixa o intervalo
seguido dos bits pendentes. O decodificador lê zeros além do fim do payload.
"""

from __future__ import annotations

import math
from typing import List, Protocol, Sequence, Tuple

import numpy as np

from utils.errors import EncodingError, InternalError, InvalidParamsError

STATE_BITS = 64
FREQ_BITS = 32
FREQ_TOTAL = 1 << FREQ_BITS
# menor probabilidade representável (frequência 1)
MIN_PROB = 1.0 / FREQ_TOTAL

_FULL = 1 << STATE_BITS
_HALF = _FULL >> 1
_QUARTER = _HALF >> 1
_MASK = _FULL - 1


class SymbolTable(Protocol):
    lo: int
    hi: int

    def cum(self, k: int) -> int:
        ...


def _quantized_cum(g: float, k: int, lo: int, size: int) -> int:
    return int(math.floor(g * (FREQ_TOTAL - size))) + (k - lo)


class PmfTable:
    """Tabela a partir de uma lista explícita de probabilidades (símbolo ``lo + idx``)."""

    def __init__(self, probs: Sequence[float], lo: int = 0) -> None:
        p = [float(x) for x in probs]
        if not p or any(x < 0 or not math.isfinite(x) for x in p):
            raise InvalidParamsError("probabilidades devem ser finitas e não negativas")
        total = math.fsum(p)
        if total <= 0:
            raise InvalidParamsError("probabilidades somam zero")
        self.lo = int(lo)
        self.hi = self.lo + len(p) - 1
        size = len(p)
        cdf = [0.0]
        acc = 0.0
        for x in p:
            acc += x
            cdf.append(acc)
        cdf[-1] = total
        self._cum = [_quantized_cum(c / total, self.lo + i, self.lo, size) for i, c in enumerate(cdf)]

    def cum(self, k: int) -> int:
        return self._cum[k - self.lo]


class LaplaceTable:
    """Laplace discretizada L(mu, b) truncada em ``round(mu) ± max(256, ceil(40·b))``."""

    MIN_HALF_WIDTH = 256
    SCALES = 40

    def __init__(self, mu: float, b: float) -> None:
        self.mu = float(mu)
        self.b = float(b)
        if not (self.b > 0 and math.isfinite(self.b) and math.isfinite(self.mu)):
            raise InvalidParamsError(f"parâmetros de Laplace inválidos: mu={mu}, b={b}")
        center = int(round(self.mu))
        half = max(self.MIN_HALF_WIDTH, int(math.ceil(self.SCALES * self.b)))
        self.lo = center - half
        self.hi = center + half
        self._size = self.hi - self.lo + 1
        self._f_lo = self._cdf(self.lo - 0.5)
        self._span = self._cdf(self.hi + 0.5) - self._f_lo

    def _cdf(self, x: float) -> float:
        z = (x - self.mu) / self.b
        if z < 0:
            return 0.5 * math.exp(z)
        return 1.0 - 0.5 * math.exp(-z)

    def cum(self, k: int) -> int:
        if k <= self.lo:
            return 0
        if k > self.hi:
            return FREQ_TOTAL
        g = (self._cdf(k - 0.5) - self._f_lo) / self._span
        return _quantized_cum(g, k, self.lo, self._size)


class CdfTable:
    """Tabela genérica a partir de uma CDF contínua monotônica e um suporte fixo."""

    def __init__(self, cdf, lo: int, hi: int) -> None:
        self.lo = int(lo)
        self.hi = int(hi)
        size = self.hi - self.lo + 1
        f_lo = cdf(self.lo - 0.5)
        span = cdf(self.hi + 0.5) - f_lo
        if not span > 0:
            raise InvalidParamsError("CDF sem massa no suporte")
        self._cum = [0]
        for k in range(self.lo + 1, self.hi + 1):
            self._cum.append(_quantized_cum((cdf(k - 0.5) - f_lo) / span, k, self.lo, size))
        self._cum.append(FREQ_TOTAL)

    def cum(self, k: int) -> int:
        return self._cum[k - self.lo]


# ---------------------------------------------------------------------
# Codificador / decodificador
# ---------------------------------------------------------------------
class _BitWriter:
    def __init__(self) -> None:
        self.bits: List[int] = []

    def write(self, bit: int, pending: int) -> None:
        self.bits.append(bit)
        if pending:
            self.bits.extend([bit ^ 1] * pending)

    def to_bytes(self) -> bytes:
        if not self.bits:
            return b""
        return np.packbits(np.asarray(self.bits, dtype=np.uint8)).tobytes()


class RangeEncoder:
    def __init__(self) -> None:
        self.low = 0
        self.high = _MASK
        self.pending = 0
        self.out = _BitWriter()
        self.n_symbols = 0

    def encode(self, symbol: int, table: SymbolTable) -> None:
        if symbol < table.lo or symbol > table.hi:
            raise EncodingError(
                f"símbolo {symbol} fora do suporte [{table.lo}, {table.hi}]"
            )
        c_lo = table.cum(symbol)
        c_hi = table.cum(symbol + 1)
        if c_hi <= c_lo:
            raise InternalError(f"frequência nula para o símbolo {symbol}")
        rng = self.high - self.low + 1
        self.high = self.low + rng * c_hi // FREQ_TOTAL - 1
        self.low = self.low + rng * c_lo // FREQ_TOTAL
        while True:
            if self.high < _HALF:
                self.out.write(0, self.pending)
                self.pending = 0
            elif self.low >= _HALF:
                self.out.write(1, self.pending)
                self.pending = 0
                self.low -= _HALF
                self.high -= _HALF
            elif self.low >= _QUARTER and self.high < 3 * _QUARTER:
                self.pending += 1
                self.low -= _QUARTER
                self.high -= _QUARTER
            else:
                break
            self.low = (self.low << 1) & _MASK
            self.high = ((self.high << 1) & _MASK) | 1
        self.n_symbols += 1

    def finish(self) -> Tuple[bytes, int]:
        """Encerra o fluxo; devolve ``(payload, n_bits)`` com ``n_bits`` exato."""
        if self.n_symbols == 0:
            return b"", 0
        self.pending += 1
        if self.low < _QUARTER:
            self.out.write(0, self.pending)
        else:
            self.out.write(1, self.pending)
        self.pending = 0
        return self.out.to_bytes(), len(self.out.bits)


class RangeDecoder:
    def __init__(self, payload: bytes, n_bits: int | None = None) -> None:
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8)) if payload else np.zeros(0, np.uint8)
        if n_bits is not None:
            bits = bits[:n_bits]
        self._bits = bits.tolist()
        self._pos = 0
        self.low = 0
        self.high = _MASK
        self.code = 0
        for _ in range(STATE_BITS):
            self.code = (self.code << 1) | self._next_bit()

    def _next_bit(self) -> int:
        if self._pos < len(self._bits):
            bit = self._bits[self._pos]
        else:
            bit = 0
        self._pos += 1
        return bit

    def decode(self, table: SymbolTable) -> int:
        rng = self.high - self.low + 1
        value = ((self.code - self.low + 1) * FREQ_TOTAL - 1) // rng
        a, b = table.lo, table.hi + 1
        while b - a > 1:
            mid = (a + b) // 2
            if table.cum(mid) <= value:
                a = mid
            else:
                b = mid
        symbol = a
        c_lo = table.cum(symbol)
        c_hi = table.cum(symbol + 1)
        if not c_lo <= value < c_hi:
            raise InternalError("fluxo de bits inconsistente com a tabela")
        self.high = self.low + rng * c_hi // FREQ_TOTAL - 1
        self.low = self.low + rng * c_lo // FREQ_TOTAL
        while True:
            if self.high < _HALF:
                pass
            elif self.low >= _HALF:
                self.low -= _HALF
                self.high -= _HALF
                self.code -= _HALF
            elif self.low >= _QUARTER and self.high < 3 * _QUARTER:
                self.low -= _QUARTER
                self.high -= _QUARTER
                self.code -= _QUARTER
            else:
                break
            self.low = (self.low << 1) & _MASK
            self.high = ((self.high << 1) & _MASK) | 1
            self.code = ((self.code << 1) & _MASK) | self._next_bit()
        return symbol


def range_encode(symbols: Sequence[int], tables: Sequence[SymbolTable]) -> Tuple[bytes, int]:
    """Codifica ``symbols[k]`` com ``tables[k]``.

    Returns:
        ``(payload, n_bits)``; sequência vazia resulta em payload vazio.

    Raises:
        EncodingError: símbolo fora do suporte da sua tabela.
    """
    if len(symbols) != len(tables):
        raise EncodingError("número de símbolos e de tabelas difere")
    enc = RangeEncoder()
    for s, table in zip(symbols, tables):
        enc.encode(int(s), table)
    return enc.finish()


def range_decode(payload: bytes, tables: Sequence[SymbolTable], n_bits: int | None = None) -> List[int]:
    """Inverso de ``range_encode`` para a mesma sequência de tabelas."""
    if not tables:
        return []
    dec = RangeDecoder(payload, n_bits)
    return [dec.decode(t) for t in tables]
