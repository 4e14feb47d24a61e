"""
Transformada semântica de brinquedo e geração de GoPs sintéticos.

A análise divide o quadro 3 x H x W em blocos 16 x 16, aplica a DCT 2-D
ortonormal por cor, mantém os L coeficientes de menor frequência (ordem
(u + v, u, cor)) e mistura esses L valores com uma matriz ortonormal sorteada.
A síntese é a transposta exata. O resultado é um par semi-ortogonal: a
composição análise∘síntese é a identidade nas features e síntese∘análise é a
identidade em qualquer quadro do espaço de síntese (onde vivem os GoPs
sintéticos). Dimensões não múltiplas de 16 são estendidas por reflexão e
recortadas na saída.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.fft import dctn, idctn

from utils.errors import InvalidInputError
from utils.seeding import StreamId, child_rng

logger = logging.getLogger(__name__)

BLOCK = 16
COLORS = 3


@dataclass(frozen=True)
class Gop:
    """T quadros 3 x H x W com valores em [0, 1]."""

    frames: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.frames, dtype=float)
        if f.ndim != 4 or f.shape[0] < 1 or f.shape[1] != COLORS:
            raise InvalidInputError("GoP deve ter forma (T, 3, H, W) com T >= 1")
        if not np.all(np.isfinite(f)) or f.min() < 0 or f.max() > 1:
            raise InvalidInputError("quadros devem ser finitos e estar em [0, 1]")
        object.__setattr__(self, "frames", f)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def height(self) -> int:
        return int(self.frames.shape[2])

    @property
    def width(self) -> int:
        return int(self.frames.shape[3])


def _coefficient_order(n_keep: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    keys = sorted(
        ((u + v, u, c, v) for c in range(COLORS) for u in range(BLOCK) for v in range(BLOCK))
    )[:n_keep]
    colors = np.array([k[2] for k in keys])
    us = np.array([k[1] for k in keys])
    vs = np.array([k[3] for k in keys])
    return colors, us, vs


def _orthonormal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    # sinal da diagonal de R fixado para que Q dependa só da semente
    return q * np.sign(np.diag(r))[None, :]


class ToySemanticTransform:
    """Par análise/síntese por blocos com L canais de saída."""

    def __init__(self, feature_channels: int = 64, seed: int = 0) -> None:
        if not 1 <= feature_channels <= COLORS * BLOCK * BLOCK:
            raise InvalidInputError(f"L deve estar em [1, {COLORS * BLOCK * BLOCK}]")
        self.feature_channels = feature_channels
        self._colors, self._us, self._vs = _coefficient_order(feature_channels)
        self.mixing = _orthonormal(feature_channels, child_rng(seed, StreamId.TRANSFORM))

    @staticmethod
    def latent_shape(height: int, width: int) -> Tuple[int, int]:
        return -(-height // BLOCK), -(-width // BLOCK)

    def encode(self, frame: np.ndarray) -> np.ndarray:
        """Quadro 3 x H x W para features L x ceil(H/16) x ceil(W/16)."""
        frame = np.asarray(frame, dtype=float)
        if frame.ndim != 3 or frame.shape[0] != COLORS:
            raise InvalidInputError("quadro deve ter forma (3, H, W)")
        h, w = frame.shape[1:]
        hb, wb = self.latent_shape(h, w)
        pad = ((0, 0), (0, hb * BLOCK - h), (0, wb * BLOCK - w))
        if pad[1][1] or pad[2][1]:
            frame = np.pad(frame, pad, mode="symmetric")
            logger.debug("quadro %dx%d estendido por reflexão para %dx%d", h, w, hb * BLOCK, wb * BLOCK)
        blocks = frame.reshape(COLORS, hb, BLOCK, wb, BLOCK).transpose(0, 1, 3, 2, 4)
        coeffs = dctn(blocks, axes=(-2, -1), norm="ortho")
        selected = coeffs[self._colors, :, :, self._us, self._vs]  # (L, hb, wb)
        return np.einsum("kl,lhw->khw", self.mixing, selected)

    def decode(self, features: np.ndarray, height: Optional[int] = None, width: Optional[int] = None) -> np.ndarray:
        """Síntese (transposta exata); recorta para ``height`` x ``width`` quando dados."""
        features = np.asarray(features, dtype=float)
        if features.ndim != 3 or features.shape[0] != self.feature_channels:
            raise InvalidInputError(f"features devem ter forma ({self.feature_channels}, H', W')")
        _, hb, wb = features.shape
        selected = np.einsum("kl,khw->lhw", self.mixing, features)
        coeffs = np.zeros((COLORS, hb, wb, BLOCK, BLOCK))
        coeffs[self._colors, :, :, self._us, self._vs] = selected
        blocks = idctn(coeffs, axes=(-2, -1), norm="ortho")
        frame = blocks.transpose(0, 1, 3, 2, 4).reshape(COLORS, hb * BLOCK, wb * BLOCK)
        return frame[:, : height or hb * BLOCK, : width or wb * BLOCK]


def toy_semantic_encode(frame: np.ndarray, transform: ToySemanticTransform) -> np.ndarray:
    return transform.encode(frame)


def toy_semantic_decode(features: np.ndarray, transform: ToySemanticTransform, height: int, width: int) -> np.ndarray:
    return transform.decode(features, height, width)


def synthetic_gop(
    n_frames: int,
    height: int,
    width: int,
    transform: ToySemanticTransform,
    rng: np.random.Generator,
    static: bool = False,
    innovation: float = 0.3,
    amplitude: float = 0.45,
) -> Gop:
    """GoP correlacionado no tempo dentro do espaço de síntese da transformada.

    As features evoluem como f_t = f_{t−1} + innovation·ruído; os quadros são
    0,5 + s·síntese(f_t) com s tal que o desvio máximo seja ``amplitude``.
    ``static=True`` repete o primeiro quadro. Com altura e largura múltiplas de
    16 os quadros ficam exatamente no espaço de síntese.
    """
    if n_frames < 1:
        raise InvalidInputError("GoP precisa de ao menos um quadro")
    hb, wb = transform.latent_shape(height, width)
    shape = (transform.feature_channels, hb, wb)
    features = [rng.standard_normal(shape)]
    for _ in range(1, n_frames):
        step = 0.0 if static else innovation * rng.standard_normal(shape)
        features.append(features[-1] + step)
    variations = np.stack([transform.decode(f, height, width) for f in features])
    peak = float(np.max(np.abs(variations)))
    scale = amplitude / peak if peak > 0 else 0.0
    frames = np.clip(0.5 + scale * variations, 0.0, 1.0)
    return Gop(frames=frames)
