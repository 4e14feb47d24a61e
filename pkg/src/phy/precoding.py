"""
Precodificação SVD por subportadora, equalização e alocação de potência.

A transmissão segue

    y = Λ_s⁻¹·U_sᴴ·H·V_s·x + Λ_s⁻¹·U_sᴴ·n

em que (U_s, Λ_s, V_s) vêm do CSI amostrado (representante do grupo) e H é o
canal verdadeiro da subportadora. Com CSI casado e sem ruído a saída é igual à
entrada. O ruído é somado nas antenas de recepção, antes de Uᴴ.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from utils.errors import InvalidInputError, RankDeficiencyError

logger = logging.getLogger(__name__)

RANK_THRESHOLD_REL = 1e-8


@dataclass(frozen=True)
class SvdTriple:
    """Decomposição H = u·diag(s)·vᴴ com u (N_r x N_r) e v (N_t x N_t) unitárias."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def rank_threshold(self) -> float:
        s_max = float(self.s[0]) if self.s.size else 0.0
        return RANK_THRESHOLD_REL * s_max

    def active_streams(self) -> int:
        """Número de valores singulares acima do limiar de posto."""
        if not self.s.size or self.s[0] <= 0:
            return 0
        return int(np.count_nonzero(self.s > self.rank_threshold))

    def reconstruct(self) -> np.ndarray:
        n_r, n_t = self.u.shape[0], self.v.shape[0]
        sigma = np.zeros((n_r, n_t))
        k = self.s.size
        sigma[:k, :k] = np.diag(self.s)
        return self.u @ sigma @ self.v.conj().T


@dataclass(frozen=True)
class NoiseConfig:
    """Ruído complexo gaussiano de variância ``sigma2`` por antena.

    ``sigma2 = 10^(-ν/10)`` para potência de sinal unitária; ``snr_db = inf``
    resulta em canal sem ruído.
    """

    snr_db: float
    sigma2: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not np.isfinite(self.sigma2) or self.sigma2 < 0:
            raise InvalidInputError(f"sigma2 inválido: {self.sigma2}")

    @classmethod
    def from_snr_db(cls, snr_db: float, seed: int = 0, signal_power: float = 1.0) -> "NoiseConfig":
        sigma2 = 0.0 if np.isposinf(snr_db) else signal_power / 10.0 ** (snr_db / 10.0)
        return cls(snr_db=float(snr_db), sigma2=float(sigma2), seed=seed)

    @classmethod
    def noiseless(cls) -> "NoiseConfig":
        return cls(snr_db=float("inf"), sigma2=0.0)


# ---------------------------------------------------------------------
# SVD
# ---------------------------------------------------------------------
def svd_decompose(h: np.ndarray) -> SvdTriple:
    """SVD completa com convenção de fase fixa.

    A entrada de maior módulo de cada coluna de ``v`` vira real positiva; a
    coluna correspondente de ``u`` recebe a mesma rotação, preservando a
    reconstrução.

    Raises:
        InvalidInputError: matriz com entradas não finitas ou não 2-D.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2:
        raise InvalidInputError("canal deve ser uma matriz 2-D")
    if not np.all(np.isfinite(h)):
        raise InvalidInputError("canal com entradas não finitas")

    u, s, vh = np.linalg.svd(h, full_matrices=True)
    v = vh.conj().T
    pivots = np.argmax(np.abs(v), axis=0)
    pivot_values = v[pivots, np.arange(v.shape[1])]
    mags = np.abs(pivot_values)
    phases = np.where(mags > 0, pivot_values / np.where(mags > 0, mags, 1.0), 1.0)
    v = v * phases.conj()[None, :]
    k = s.size
    u = u.copy()
    u[:, :k] = u[:, :k] * phases[:k].conj()[None, :]
    return SvdTriple(u=u, s=s, v=v)


def _check_streams(svd: SvdTriple, n_streams: int) -> None:
    if n_streams < 1 or n_streams > svd.s.size:
        raise InvalidInputError(
            f"número de fluxos {n_streams} fora de [1, {svd.s.size}]"
        )
    threshold = svd.rank_threshold
    for k in range(n_streams):
        if svd.s[k] <= threshold or svd.s[k] <= 0:
            raise RankDeficiencyError(k, float(svd.s[k]), threshold)


def transmit_equalize(
    x: np.ndarray,
    h_true: np.ndarray,
    svd_sampled: SvdTriple,
    noise: NoiseConfig,
    rng: Optional[np.random.Generator] = None,
    powers: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Aplica precodificação, canal, ruído e equalização.

    Args:
        x: Vetor (r,) ou matriz (r, K) de símbolos por fluxo; cada coluna é um uso
            independente da mesma subportadora.
        h_true: Canal verdadeiro N_r x N_t.
        svd_sampled: SVD do CSI usado para precodificar.
        noise: Configuração de ruído.
        rng: Gerador para o ruído; por padrão, ``default_rng(noise.seed)``.
        powers: Potência por fluxo (todas > 0); por padrão, 1.

    Returns:
        Símbolos equalizados com a mesma forma de ``x``.

    Raises:
        RankDeficiencyError: fluxo ativo com valor singular abaixo do limiar.
    """
    x = np.asarray(x, dtype=np.complex128)
    squeeze = x.ndim == 1
    xs = x[:, None] if squeeze else x
    r = xs.shape[0]
    _check_streams(svd_sampled, r)

    h_true = np.asarray(h_true, dtype=np.complex128)
    if h_true.shape != (svd_sampled.u.shape[0], svd_sampled.v.shape[0]):
        raise InvalidInputError("dimensões de h_true não batem com a SVD")

    if powers is None:
        amp = np.ones(r)
    else:
        p = np.asarray(powers, dtype=float)
        if p.shape != (r,) or np.any(p <= 0):
            raise InvalidInputError("potências devem ter um valor > 0 por fluxo")
        amp = np.sqrt(p)

    u_r = svd_sampled.u[:, :r]
    v_r = svd_sampled.v[:, :r]
    received = h_true @ (v_r @ (amp[:, None] * xs))
    if noise.sigma2 > 0:
        rng = rng if rng is not None else np.random.default_rng(noise.seed)
        scale = np.sqrt(noise.sigma2 / 2.0)
        received = received + scale * (
            rng.standard_normal(received.shape) + 1j * rng.standard_normal(received.shape)
        )
    y = (u_r.conj().T @ received) / (svd_sampled.s[:r] * amp)[:, None]
    return y[:, 0] if squeeze else y


def equalization_residual(h_true: np.ndarray, svd_sampled: SvdTriple, n_streams: Optional[int] = None) -> float:
    """Resíduo ‖Λ_r⁻¹·U_rᴴ·H·V_r − I‖²_F / r do descasamento de CSI."""
    r = svd_sampled.active_streams() if n_streams is None else n_streams
    _check_streams(svd_sampled, r)
    u_r = svd_sampled.u[:, :r]
    v_r = svd_sampled.v[:, :r]
    effective = (u_r.conj().T @ np.asarray(h_true) @ v_r) / svd_sampled.s[:r, None]
    return float(np.sum(np.abs(effective - np.eye(r)) ** 2) / r)


# ---------------------------------------------------------------------
# Water-filling
# ---------------------------------------------------------------------
def _water_fill(gains: np.ndarray, total_power: float, sigma2: float) -> Tuple[np.ndarray, float]:
    gains = np.asarray(gains, dtype=float)
    if total_power <= 0 or sigma2 <= 0:
        raise InvalidInputError("potência total e sigma2 devem ser > 0")
    positive = np.flatnonzero(gains > 0)
    if positive.size == 0:
        raise InvalidInputError("water-filling precisa de ao menos um ganho > 0")

    # Ordena os canais do melhor para o pior e descarta o pior enquanto o
    # nível d'água não o cobrir.
    order = positive[np.argsort(-gains[positive], kind="stable")]
    floors = sigma2 / gains[order]
    n_active = order.size
    mu = 0.0
    while n_active > 0:
        mu = (total_power + floors[:n_active].sum()) / n_active
        if mu > floors[n_active - 1]:
            break
        n_active -= 1

    powers = np.zeros(gains.size)
    powers[order[:n_active]] = mu - floors[:n_active]
    return powers, float(mu)


def waterfilling(gains: Sequence[float], total_power: float, sigma2: float) -> np.ndarray:
    """Alocação de potência p_k = max(0, μ − σ²/g_k) com Σp_k = P.

    Ganhos <= 0 recebem potência zero.

    Raises:
        InvalidInputError: nenhum ganho positivo, ou P/σ² não positivos.
    """
    return _water_fill(np.asarray(gains, dtype=float), float(total_power), float(sigma2))[0]


def water_level(gains: Sequence[float], total_power: float, sigma2: float) -> float:
    """Nível d'água μ da alocação ótima."""
    return _water_fill(np.asarray(gains, dtype=float), float(total_power), float(sigma2))[1]


def sum_capacity(gains: Sequence[float], powers: Sequence[float], sigma2: float) -> float:
    """Capacidade Σ log2(1 + g_k·p_k/σ²) em bits por uso de canal."""
    g = np.asarray(gains, dtype=float)
    p = np.asarray(powers, dtype=float)
    return float(np.sum(np.log2(1.0 + np.clip(g, 0, None) * p / sigma2)))
