"""
Modelo de entropia com múltiplas referências correlacionadas no tempo.

Conteúdo:
  - quantização ⌊·⌉ (arredondamento com empate para longe do zero);
  - probabilidade de caixa da Laplace discretizada;
  - divisão xadrez em âncoras ((h + w) par) e não-âncoras;
  - geradores de referência (mapa, contexto causal, hiperprior, âncoras) e a
    fusão que produz (μ, b) para cada passada;
  - janela de mapas de correlação m_s = [m_{t_p}, m_t];
  - contabilidade de taxa por grupo, total, custo de transmissão e CBR.

Os geradores padrão são mapas lineares sorteados (sem viés), de modo que
referências nulas produzem μ = 0 e b = softplus(0) = ln 2. Todos podem ser
substituídos por preditores treinados com a mesma assinatura.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from utils.errors import InternalError, InvalidInputError, InvalidParamsError, InvalidRefsError

logger = logging.getLogger(__name__)

SCALE_FLOOR = 1e-6
P_FLOOR = 2.0 ** -64

EtaPolicy = Literal["map", "unit"]
ReferenceMode = Literal["temporal", "current"]


# ---------------------------------------------------------------------
# Quantização e verossimilhança
# ---------------------------------------------------------------------
def quantize(x: np.ndarray) -> np.ndarray:
    """Arredonda para o inteiro mais próximo, empates para longe do zero.

    Raises:
        InvalidInputError: valores não finitos.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("quantização de valores não finitos")
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def laplace_cdf(x: np.ndarray, mu: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = (np.asarray(x, dtype=float) - mu) / b
    return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))


def laplace_box_prob(n, mu, b, floor: bool = True) -> np.ndarray:
    """P(n) = F(n + ½) − F(n − ½) da Laplace(μ, b), por elemento.

    A diferença é avaliada na cauda em que não há cancelamento. Com
    ``floor=True`` o resultado é limitado inferiormente por ``P_FLOOR``.

    Raises:
        InvalidParamsError: escala abaixo de ``SCALE_FLOOR``.
    """
    n = np.asarray(n, dtype=float)
    mu = np.asarray(mu, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(b >= SCALE_FLOOR)):
        raise InvalidParamsError(f"escala de Laplace abaixo do piso {SCALE_FLOOR}")
    lo = (n - 0.5 - mu) / b
    hi = (n + 0.5 - mu) / b
    width = -np.expm1(-1.0 / b)
    below = 0.5 * np.exp(np.minimum(hi, 0.0)) * width
    above = 0.5 * np.exp(-np.maximum(lo, 0.0)) * width
    middle = 1.0 - 0.5 * (np.exp(np.minimum(lo, 0.0)) + np.exp(-np.maximum(hi, 0.0)))
    p = np.where(hi <= 0, below, np.where(lo >= 0, above, middle))
    return np.maximum(p, P_FLOOR) if floor else p


# ---------------------------------------------------------------------
# Xadrez
# ---------------------------------------------------------------------
def anchor_mask(height: int, width: int) -> np.ndarray:
    """Máscara booleana das âncoras ((h + w) par)."""
    return (np.add.outer(np.arange(height), np.arange(width)) % 2) == 0


def checkerboard_split(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Separa as duas últimas dimensões em âncoras e não-âncoras (zeros no complemento)."""
    values = np.asarray(values)
    mask = anchor_mask(*values.shape[-2:])
    zero = np.zeros((), dtype=values.dtype)
    return np.where(mask, values, zero), np.where(mask, zero, values)


def checkerboard_merge(anchors: np.ndarray, non_anchors: np.ndarray) -> np.ndarray:
    mask = anchor_mask(*np.shape(anchors)[-2:])
    return np.where(mask, anchors, non_anchors)


# ---------------------------------------------------------------------
# Parâmetros e referências
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class EntropyParams:
    mu: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        if np.any(~(np.asarray(self.scale) >= SCALE_FLOOR)):
            raise InvalidParamsError("escala abaixo do piso")


@dataclass(frozen=True)
class ReferenceBundle:
    """Referências de um grupo; cada φ tem forma (2, m_c, H', W') (posição, pré-escala).

    ``q`` e ``snr_db`` são informação lateral transportada, não usada pelos
    geradores padrão.
    """

    phi_m: Optional[np.ndarray]
    phi_ch: Optional[np.ndarray]
    phi_z: Optional[np.ndarray]
    phi_lc: Optional[np.ndarray] = None
    window_t: Tuple[int, ...] = ()
    q: Optional[np.ndarray] = None
    snr_db: Optional[float] = None


@dataclass(frozen=True)
class MapWindow:
    """Janela m_s: mapas em ordem crescente de t (o último é m_t)."""

    maps: Tuple[np.ndarray, ...]
    indices: Tuple[int, ...]
    n_missing: int = 0


def upsample(plane: np.ndarray, shape: Tuple[int, int], block: int = 2) -> np.ndarray:
    """Vizinho mais próximo, recortado para ``shape``."""
    up = np.repeat(np.repeat(plane, block, axis=0), block, axis=1)
    return up[: shape[0], : shape[1]]


def _nbr_mean(plane: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Média dos 4 vizinhos que estão em ``mask`` (0 onde não há vizinho)."""
    values = np.where(mask, plane, 0.0)
    pad_v = np.pad(values, [(0, 0)] * (values.ndim - 2) + [(1, 1), (1, 1)])
    pad_m = np.pad(mask.astype(float), [(1, 1), (1, 1)])
    total = pad_v[..., :-2, 1:-1] + pad_v[..., 2:, 1:-1] + pad_v[..., 1:-1, :-2] + pad_v[..., 1:-1, 2:]
    count = pad_m[:-2, 1:-1] + pad_m[2:, 1:-1] + pad_m[1:-1, :-2] + pad_m[1:-1, 2:]
    return total / np.maximum(count, 1.0)


class ReferenceGenerators:
    """Geradores padrão g_m, g_ch, g_z e g_lc (mapas lineares sorteados)."""

    def __init__(self, n_groups: int, context_group: int, n_map_cols: int, rng: np.random.Generator) -> None:
        self.n_groups = n_groups
        self.context_group = context_group
        self.n_map_cols = n_map_cols
        m_c = context_group
        self.map_proj = rng.standard_normal((2, m_c, 2 * n_map_cols)) * (0.1 / math.sqrt(2 * n_map_cols))
        self.causal_loc = rng.standard_normal((m_c, m_c)) * (0.05 / math.sqrt(m_c))
        self.causal_scale = rng.standard_normal((m_c, m_c)) * (0.05 / math.sqrt(m_c))
        self.hyper_loc = rng.standard_normal(m_c) * 0.01
        self.hyper_scale = 0.5 + rng.standard_normal(m_c) * 0.02
        self.anchor_loc = 0.25 + rng.standard_normal(m_c) * 0.02
        self.anchor_scale = rng.standard_normal(m_c) * 0.02

    def map_ref(self, window: MapWindow, group: int, spatial: Tuple[int, int]) -> np.ndarray:
        """g_m: usa só as linhas ≤ ``group`` de cada mapa da janela."""
        if not window.maps:
            raise InvalidRefsError("janela de mapas vazia")
        stack = np.stack(window.maps)
        cols = stack.shape[2]
        own_row = stack[:, group, :].mean(axis=0)
        upto_row = stack[:, : group + 1, :].mean(axis=(0, 1))
        features = cols * np.concatenate([own_row, upto_row])
        planes = self.map_proj @ features
        return np.broadcast_to(planes[:, :, None, None], (2, self.context_group) + spatial).copy()

    def causal_ref(self, previous_group: Optional[np.ndarray], spatial: Tuple[int, int]) -> np.ndarray:
        """g_ch: depende apenas do grupo anterior já decodificado."""
        if previous_group is None:
            return np.zeros((2, self.context_group) + spatial)
        prev = np.asarray(previous_group, dtype=float)
        loc = np.einsum("kc,chw->khw", self.causal_loc, prev)
        scale = np.einsum("kc,chw->khw", self.causal_scale, np.abs(prev))
        return np.stack([loc, scale])

    def hyper_ref(self, z_group: np.ndarray, spatial: Tuple[int, int]) -> np.ndarray:
        """g_z: escala guiada pelo hiperlatente do grupo ampliado para H' x W'."""
        up = upsample(np.asarray(z_group, dtype=float), spatial)
        loc = self.hyper_loc[:, None, None] * up
        scale = self.hyper_scale[:, None, None] * up
        return np.stack([loc, scale])

    def anchor_ref(self, anchors: np.ndarray) -> np.ndarray:
        """g_lc: média das âncoras vizinhas (posições não-âncora só veem âncoras)."""
        anchors = np.asarray(anchors, dtype=float)
        mask = anchor_mask(*anchors.shape[-2:])
        loc = self.anchor_loc[:, None, None] * _nbr_mean(anchors, mask)
        scale = self.anchor_scale[:, None, None] * _nbr_mean(np.abs(anchors), mask)
        return np.stack([loc, scale])


class ParamFusion:
    """g_ep: soma de (1 + 0.05·g_{i,r,plano})·φ_r por plano.

    b = softplus(Σ planos de escala). A posição recebe as referências r >= 1
    diretamente; a do mapa (r = 0) entra como b·tanh(·/b), ou seja, o mapa
    desloca μ no máximo uma escala. Sem isso, um mapa concentrado move μ de
    um latente nulo para longe de 0 enquanto o hiperprior aperta b, e o símbolo
    mais provável passa a custar dezenas de bits.

    Os planos não se misturam: a pré-ativação da escala (negativa para
    latentes pequenos) nunca vaza para μ.
    """

    N_REFS = 4
    MAP_REF = 0

    def __init__(self, n_groups: int, rng: np.random.Generator) -> None:
        self.gains = 1.0 + 0.05 * rng.standard_normal((n_groups, self.N_REFS, 2))

    def __call__(self, refs: Sequence[np.ndarray], group: int) -> EntropyParams:
        parts = [self.gains[group, r].reshape((2,) + (1,) * (phi.ndim - 1)) * phi for r, phi in enumerate(refs)]
        scale = np.maximum(np.logaddexp(0.0, sum(p[1] for p in parts)), SCALE_FLOOR)
        map_shift = scale * np.tanh(parts[self.MAP_REF][0] / scale)
        mu = map_shift + sum(p[0] for r, p in enumerate(parts) if r != self.MAP_REF)
        return EntropyParams(mu=mu, scale=scale)


def _required(refs: ReferenceBundle, names: Sequence[str]) -> List[np.ndarray]:
    missing = [n for n in names if getattr(refs, n) is None]
    if missing:
        raise InvalidRefsError(f"referências ausentes: {', '.join(missing)}")
    arrays = [np.asarray(getattr(refs, n), dtype=float) for n in names]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays) or len(shape) < 1 or shape[0] != 2:
        raise InvalidRefsError("referências com formas incompatíveis")
    return arrays


def predict_params_anchor(refs: ReferenceBundle, group: int, fusion: ParamFusion) -> EntropyParams:
    """Parâmetros da passada de âncoras a partir de (φ_m, φ_ch, φ_z).

    Raises:
        InvalidRefsError: referência ausente, ou φ_lc presente na passada de âncoras.
    """
    if refs.phi_lc is not None:
        raise InvalidRefsError("a passada de âncoras não pode usar φ_lc")
    return fusion(_required(refs, ("phi_m", "phi_ch", "phi_z")), group)


def predict_params_nonanchor(refs: ReferenceBundle, group: int, fusion: ParamFusion) -> EntropyParams:
    """Parâmetros da passada de não-âncoras, condicionada às âncoras via φ_lc.

    Raises:
        InvalidRefsError: alguma das quatro referências ausente.
    """
    return fusion(_required(refs, ("phi_m", "phi_ch", "phi_z", "phi_lc")), group)


# ---------------------------------------------------------------------
# Janela de mapas
# ---------------------------------------------------------------------
def window_indices(t: int, n_groups: int) -> List[int]:
    """t_p ∪ {t} com t_p = [t − (t mod n_groups), ..., t − 1]."""
    start = t - (t % n_groups)
    return list(range(start, t + 1))


@dataclass
class MapHistory:
    """Mapas de correlação indexados pelo contador global de quadros.

    ``period`` é N_s/m_h contado em quadros: com vários símbolos OFDM por
    quadro a janela abrange ``symbols_per_frame`` vezes mais símbolos de canal.
    """

    period: int
    maps: Dict[int, np.ndarray] = field(default_factory=dict)

    def add(self, t: int, values: np.ndarray) -> None:
        self.maps[t] = np.asarray(values, dtype=float)
        # só a janela corrente é necessária
        start = t - (t % self.period)
        for old in [k for k in self.maps if k < start]:
            del self.maps[old]


def build_reference_window(
    history: MapHistory,
    t: int,
    n_groups: int,
    mode: ReferenceMode = "temporal",
) -> MapWindow:
    """Concatena os mapas de t_p disponíveis com m_t.

    ``mode="current"`` usa apenas m_t. Índices ausentes (aquecimento) são
    pulados e contados em ``n_missing``.

    Raises:
        InvalidRefsError: m_t ausente do histórico.
    """
    if t not in history.maps:
        raise InvalidRefsError(f"mapa do quadro {t} ausente")
    wanted = [t] if mode == "current" else window_indices(t, n_groups)
    present = [k for k in wanted if k in history.maps]
    missing = len(wanted) - len(present)
    if missing:
        logger.debug("janela de mapas em t=%d: %d mapas ausentes", t, missing)
    return MapWindow(
        maps=tuple(history.maps[k] for k in present),
        indices=tuple(present),
        n_missing=missing,
    )


# ---------------------------------------------------------------------
# Taxa
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class RateReport:
    k_c: float
    k_v: float
    k_cz: float
    k_vz: float
    k_t: float
    eta: Tuple[float, ...]
    cbr: float


def eta_from_map(map_values: np.ndarray, policy: EtaPolicy = "map") -> np.ndarray:
    """η_i = 1 + max da linha i do mapa (``"map"``) ou 1 (``"unit"``)."""
    values = np.asarray(map_values, dtype=float)
    if policy == "unit":
        return np.ones(values.shape[0])
    if policy == "map":
        return 1.0 + values.max(axis=1)
    raise InvalidInputError(f"política de η desconhecida: {policy!r}")


def information_bits(probs) -> float:
    """Σ −log2 P (probabilidades já com piso)."""
    p = np.asarray(probs, dtype=float).reshape(-1)
    if p.size == 0:
        return 0.0
    if np.any(p <= 0) or np.any(p > 1):
        raise InternalError("probabilidade fora de (0, 1] após o piso")
    return float(-np.sum(np.log2(p)))


def group_rate(anchor_probs, non_anchor_probs, eta: float) -> float:
    """k_{t,i} = −η·(Σ log2 P das âncoras + Σ log2 P das não-âncoras)."""
    if eta < 0:
        raise InvalidInputError("η deve ser >= 0")
    bits = information_bits(anchor_probs) + information_bits(non_anchor_probs)
    return eta * bits


def total_rate(group_rates: Sequence[float]) -> float:
    rates = [float(r) for r in group_rates]
    if any(r < 0 for r in rates):
        raise InvalidInputError("taxa de grupo negativa")
    return math.fsum(rates)


def transmission_cost(k_c: float, k_v: float, k_cz: float, k_vz: float) -> float:
    """k_t = k_c + k_v + k_cz + k_vz."""
    parts = (k_c, k_v, k_cz, k_vz)
    if any(p < 0 for p in parts):
        raise InvalidInputError("componente de custo negativa")
    return math.fsum(parts)


def cbr(costs: Sequence[float], n_frames: int, height: int, width: int) -> float:
    """Razão de banda (Σ_t k_t)/(T·H·W·3).

    Raises:
        InvalidInputError: denominador nulo ou custo negativo.
    """
    if n_frames < 1 or height < 1 or width < 1:
        raise InvalidInputError("T, H e W devem ser >= 1")
    values = [float(c) for c in costs]
    if any(c < 0 for c in values):
        raise InvalidInputError("custo negativo")
    return math.fsum(values) / (n_frames * height * width * 3)


def diagnostic_loss(
    k_t: float,
    lam: float,
    frame: np.ndarray,
    decoded: np.ndarray,
    encoder_side: np.ndarray,
) -> float:
    """k_t + λ·(D(x, x̂) + D(x, x̄)) com D = MSE; apenas para relatório."""
    d_hat = float(np.mean((np.asarray(frame) - decoded) ** 2))
    d_bar = float(np.mean((np.asarray(frame) - encoder_side) ** 2))
    return k_t + lam * (d_hat + d_bar)
