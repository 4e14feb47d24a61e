"""
Transmissão quadro a quadro de um GoP pelo enlace MIMO-OFDM.

Ordem de um quadro:
  análise semântica → divisão movimento/contexto → mapa de correlação →
  codificação de entropia com a janela m_s → QAM → precodificação SVD por
  subportadora com o CSI do representante do grupo → canal e ruído →
  equalização → demodulação → decodificação de entropia → combinação → síntese.

O canal avança ``symbols_per_frame`` símbolos OFDM por quadro. O mapa de
correlação de um quadro usa o CSI amostrado no primeiro desses símbolos, e o
``MapHistory`` é indexado pelo índice do quadro: a janela m_s cobre
``N_s/m_h`` quadros, não símbolos. Com G2 (4 símbolos por quadro) a janela
abrange portanto 4·N_s/m_h símbolos de canal. Um quadro com
qualquer bit errado (comparação com os bits enviados) é marcado com erro e
substituído pela última reconstrução do decodificador (cinza médio no
primeiro quadro).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from codec.correlation_map import MapEmbedders, build_map
from codec.entropy import (
    MapHistory,
    build_reference_window,
    cbr,
    diagnostic_loss,
    eta_from_map,
    quantize,
    transmission_cost,
)
from codec.latent_codec import (
    LatentEntropyModel,
    StreamKind,
    decode_latent,
    encode_latent,
    pack_packet,
    unpack_packet,
)
from config import ExperimentConfig
from phy.channel_sim import ChannelRealization, ChannelState, TraceChannel
from phy.precoding import NoiseConfig, SvdTriple, svd_decompose, transmit_equalize, waterfilling
from phy.qam import bits_per_symbol, qam_demap, qam_map
from phy.sampling import (
    CsiAssembly,
    CsiHistory,
    SampledCsi,
    SamplingSchedule,
    latest_csi_per_subcarrier,
    push_and_assemble,
    sample,
)
from semantic import Gop, ToySemanticTransform, synthetic_gop
from utils.errors import CapacityError, InvalidInputError, McvstError
from utils.seeding import StreamId, child_rng, child_seed

logger = logging.getLogger(__name__)

MID_GRAY = 0.5


# ---------------------------------------------------------------------
# Tipos
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class Codeword:
    """Símbolos QAM de um quadro.

    ``l_context`` e ``l_motion`` são os números de símbolos atribuídos aos
    fluxos de contexto e de movimento (incluindo os respectivos hiperlatentes).
    """

    symbols: np.ndarray
    n_bits: int
    l_context: int = 0
    l_motion: int = 0
    snr_db: Optional[float] = None
    q: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.symbols.size)


@dataclass(frozen=True)
class FrameMetrics:
    frame: int
    mse: float
    psnr_db: float
    k_c: float
    k_v: float
    k_cz: float
    k_vz: float
    k_t: float
    cbr: float
    frame_error: bool
    losses: Tuple[float, ...] = ()
    bit_errors: int = 0
    n_bits: int = 0
    channel_uses: int = 0
    n_svd: int = 0
    window_missing: int = 0


def psnr_db(mse: float) -> float:
    """PSNR para sinais de pico 1 (``inf`` quando mse = 0)."""
    return math.inf if mse <= 0 else 10.0 * math.log10(1.0 / mse)


# ---------------------------------------------------------------------
# Movimento / contexto
# ---------------------------------------------------------------------
def motion_context_split(f_t: np.ndarray, f_ref: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """v_t = f_t − f_ref e c_t = f_ref.

    Raises:
        InvalidInputError: formas diferentes.
    """
    f_t = np.asarray(f_t, dtype=float)
    f_ref = np.asarray(f_ref, dtype=float)
    if f_t.shape != f_ref.shape:
        raise InvalidInputError(f"formas incompatíveis: {f_t.shape} e {f_ref.shape}")
    return f_t - f_ref, f_ref.copy()


def combine(v: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Combinador: f̂_t = ṽ_t + c̃_t."""
    return np.asarray(v, dtype=float) + np.asarray(c, dtype=float)


# ---------------------------------------------------------------------
# Modulação
# ---------------------------------------------------------------------
def modulate(bits: np.ndarray, order: int, slots_per_re: Sequence[int]) -> Tuple[Codeword, np.ndarray]:
    """Bits em símbolos QAM distribuídos em rodízio pelos fluxos de cada RE.

    Os elementos de recurso (RE) vêm em ordem símbolo OFDM → subportadora; o
    símbolo k ocupa o fluxo seguinte livre. Com o mesmo número r de fluxos em
    todos os RE, isso equivale a fluxo k mod r, subportadora (k div r) mod N_s
    e símbolo OFDM k div (r·N_s).

    Args:
        bits: Bits a transmitir.
        order: Ordem QAM.
        slots_per_re: Fluxos utilizáveis em cada RE.

    Returns:
        ``(codeword, placement)`` com ``placement[k] = (índice do RE, fluxo)``.

    Raises:
        CapacityError: mais símbolos que fluxos disponíveis.
    """
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    k = bits_per_symbol(order)
    n_symbols = -(-bits.size // k)
    available = int(np.sum(slots_per_re))
    if n_symbols > available:
        raise CapacityError(required=n_symbols, available=available)
    padded = np.concatenate([bits, np.zeros(n_symbols * k - bits.size, dtype=np.uint8)])
    symbols = qam_map(padded, order) if n_symbols else np.zeros(0, dtype=np.complex128)
    re_index = np.repeat(np.arange(len(slots_per_re)), slots_per_re)[:n_symbols]
    starts = np.concatenate([[0], np.cumsum(slots_per_re)[:-1]]).astype(np.int64)
    stream = np.arange(n_symbols) - starts[re_index] if n_symbols else np.zeros(0, dtype=np.int64)
    placement = np.stack([re_index, stream], axis=1) if n_symbols else np.zeros((0, 2), dtype=np.int64)
    return Codeword(symbols=symbols, n_bits=int(bits.size)), placement


def demodulate(symbols: np.ndarray, order: int, n_bits: int) -> np.ndarray:
    """Decisão abrupta e remoção do enchimento."""
    if n_bits == 0:
        return np.zeros(0, dtype=np.uint8)
    return qam_demap(symbols, order)[:n_bits]


# ---------------------------------------------------------------------
# Plano de enlace (conhecido nos dois lados a partir do CSI realimentado)
# ---------------------------------------------------------------------
@dataclass
class _LinkPlan:
    svds: List[SvdTriple]
    powers: List[Optional[np.ndarray]]
    streams: List[int]
    n_svd: int


def _plan_symbol(
    sampled: SampledCsi,
    assembly: Optional[CsiAssembly],
    schedule: SamplingSchedule,
    n_streams: int,
    power_allocation: str,
    sigma2: float,
    cache: dict,
) -> Tuple[List[SvdTriple], List[Optional[np.ndarray]], List[int]]:
    svds, powers, streams = [], [], []
    own = latest_csi_per_subcarrier(assembly) if assembly is not None else None
    for n in range(schedule.n_subcarriers):
        g = schedule.group_of(n)
        if own is not None and own[1][n]:
            # amostra própria: reaproveitada enquanto o símbolo de origem não muda
            key = ("own", n, int(assembly.timestamps[n % schedule.group_size]))
            matrix = own[0][n]
        else:
            key = ("rep", sampled.t, g)
            matrix = sampled.entries[g]
        if key not in cache:
            cache[key] = svd_decompose(matrix)
        svd = cache[key]
        r = min(n_streams, svd.active_streams())
        p = None
        if r and power_allocation == "waterfilling" and sigma2 > 0:
            p_all = waterfilling(svd.s[:r] ** 2, float(r), sigma2)
            r = int(np.count_nonzero(p_all > 0))
            p = p_all[:r]
        svds.append(svd)
        powers.append(p)
        streams.append(r)
    return svds, powers, streams


# ---------------------------------------------------------------------
# Estado e modelos
# ---------------------------------------------------------------------
@dataclass
class SimulationModels:
    """Componentes fixos de um experimento (equivalentes a pesos treinados)."""

    transform: ToySemanticTransform
    embedders: MapEmbedders
    entropy: LatentEntropyModel

    @classmethod
    def build(cls, config: ExperimentConfig) -> "SimulationModels":
        root = config.sweep.seed
        map_cfg = config.map_config()
        return cls(
            transform=ToySemanticTransform(config.map.feature_channels, root),
            embedders=MapEmbedders.from_seed(root, map_cfg, config.mimo.n_rx, config.mimo.n_tx),
            entropy=LatentEntropyModel(
                config.map.feature_channels, config.map.m_c, config.n_subcarrier_groups, root,
                scale_floor=config.codec.scale_floor,
            ),
        )


@dataclass
class SimulationState:
    config: ExperimentConfig
    models: SimulationModels
    run_seed: int
    noise: NoiseConfig
    channel: Union[ChannelState, TraceChannel]
    schedule: SamplingSchedule
    csi_history: CsiHistory
    map_history: MapHistory
    noise_rng: np.random.Generator
    frame_index: int = 0
    encoder_ref: Optional[np.ndarray] = None
    decoder_prev: Optional[np.ndarray] = None
    n_svd_total: int = 0
    channel_uses_total: int = 0

    @property
    def channel_t(self) -> int:
        return self.channel.t


def init_state(
    config: ExperimentConfig,
    run_seed: int,
    snr_db: float,
    models: Optional[SimulationModels] = None,
    trace: Optional[np.ndarray] = None,
) -> SimulationState:
    """Estado inicial de uma execução (canal, históricos e geradores)."""
    models = models or SimulationModels.build(config)
    if trace is not None:
        expected = (config.mimo.n_subcarriers, config.mimo.n_rx, config.mimo.n_tx)
        if tuple(trace.shape[1:]) != expected:
            raise InvalidInputError(f"traço com forma {tuple(trace.shape[1:])}, esperado {expected}")
        channel: Union[ChannelState, TraceChannel] = TraceChannel(trace)
    else:
        channel = ChannelState(config.channel_config(run_seed))
    schedule = SamplingSchedule(config.mimo.n_subcarriers, config.sampling.m_h)
    return SimulationState(
        config=config,
        models=models,
        run_seed=run_seed,
        noise=NoiseConfig.from_snr_db(snr_db, seed=child_seed(run_seed, StreamId.NOISE)),
        channel=channel,
        schedule=schedule,
        csi_history=CsiHistory(schedule),
        map_history=MapHistory(period=schedule.n_groups),
        noise_rng=child_rng(run_seed, StreamId.NOISE),
    )


def _interleaver(state: SimulationState, n_bits: int) -> np.ndarray:
    rng = np.random.default_rng([child_seed(state.run_seed, StreamId.INTERLEAVER), state.frame_index])
    return rng.permutation(n_bits)


def _conceal(state: SimulationState, shape: Tuple[int, ...]) -> np.ndarray:
    if state.decoder_prev is not None:
        return state.decoder_prev.copy()
    return np.full(shape, MID_GRAY)


# ---------------------------------------------------------------------
# Quadro
# ---------------------------------------------------------------------
def run_frame(state: SimulationState, frame: np.ndarray) -> Tuple[np.ndarray, FrameMetrics]:
    """Transmite um quadro 3 x H x W e devolve a reconstrução e as métricas.

    Erros do lado do codificador (capacidade, suporte de tabela) são
    propagados; falhas de decodificação viram ``frame_error=True``.
    """
    cfg = state.config
    models = state.models
    frame = np.asarray(frame, dtype=float)
    height, width = frame.shape[1:]
    step = cfg.codec.quant_step
    t = state.frame_index

    # Lado do transmissor: features e latentes
    f_t = models.transform.encode(frame - MID_GRAY)
    f_ref = state.encoder_ref if state.encoder_ref is not None else np.zeros_like(f_t)
    v_t, c_t = motion_context_split(f_t, f_ref)
    y_v = quantize(v_t / step)
    y_c = quantize(c_t / step)
    f_bar = step * combine(y_v, y_c)
    x_bar = np.clip(models.transform.decode(f_bar, height, width) + MID_GRAY, 0.0, 1.0)

    # Canal deste quadro e CSI amostrado de cada símbolo OFDM
    realizations: List[ChannelRealization] = []
    sampled: List[SampledCsi] = []
    assemblies = []
    for _ in range(cfg.mimo.symbols_per_frame):
        real = state.channel.realization()
        csi = sample(real, state.schedule, real.t)
        assemblies.append(push_and_assemble(state.csi_history, csi))
        realizations.append(real)
        sampled.append(csi)
        state.channel.advance()

    # Mapa de correlação (CSI do primeiro símbolo) e janela indexada por quadro
    corr = build_map(c_t, sampled[0], cfg.map_config(), models.embedders)
    state.map_history.add(t, corr.values)
    window = build_reference_window(state.map_history, t, state.schedule.n_groups, cfg.codec.reference_mode)

    snr = state.noise.snr_db
    coded_c = encode_latent(y_c, window, models.entropy, StreamKind.CONTEXT, snr)
    coded_v = encode_latent(y_v, window, models.entropy, StreamKind.MOTION, snr)
    eta = eta_from_map(corr.values, cfg.codec.eta_policy)
    k_c, k_v = coded_c.rate(eta), coded_v.rate(eta)
    k_cz, k_vz = coded_c.hyper_bits, coded_v.hyper_bits
    k_t = transmission_cost(k_c, k_v, k_cz, k_vz)

    packet = pack_packet(coded_c, coded_v)
    bits = np.unpackbits(np.frombuffer(packet, dtype=np.uint8))
    perm = _interleaver(state, bits.size) if cfg.mimo.interleave else None
    tx_bits = bits[perm] if perm is not None else bits

    # Plano de precodificação por RE
    cache: dict = {}
    plan = _LinkPlan([], [], [], 0)
    for csi, assembly in zip(sampled, assemblies):
        recursive = assembly if cfg.sampling.csi_mode == "recursive" else None
        svds, powers, streams = _plan_symbol(
            csi, recursive, state.schedule, cfg.mimo.active_streams,
            cfg.mimo.power_allocation, state.noise.sigma2, cache,
        )
        plan.svds.extend(svds)
        plan.powers.extend(powers)
        plan.streams.extend(streams)
    plan.n_svd = len(cache)

    codeword, placement = modulate(tx_bits, cfg.codec.qam_order, plan.streams)
    k_bits = bits_per_symbol(cfg.codec.qam_order)
    context_bits = 8 * (16 + len(coded_c.payload) + len(coded_c.hyper_payload))
    l_context = -(-context_bits // k_bits)
    codeword = Codeword(
        symbols=codeword.symbols,
        n_bits=codeword.n_bits,
        l_context=min(l_context, len(codeword)),
        l_motion=len(codeword) - min(l_context, len(codeword)),
        snr_db=snr,
    )

    # Canal: cada RE usado carrega um vetor de r símbolos
    received = np.zeros(len(codeword), dtype=np.complex128)
    n_sc = state.schedule.n_subcarriers
    used_res = np.unique(placement[:, 0]) if len(codeword) else np.zeros(0, dtype=np.int64)
    for re in used_res.tolist():
        rows = np.flatnonzero(placement[:, 0] == re)
        r = plan.streams[re]
        x = np.zeros(r, dtype=np.complex128)
        x[placement[rows, 1]] = codeword.symbols[rows]
        h_true = realizations[re // n_sc].freq_response[re % n_sc]
        y = transmit_equalize(x, h_true, plan.svds[re], state.noise, state.noise_rng, plan.powers[re])
        received[rows] = y[placement[rows, 1]]

    rx_bits = demodulate(received, cfg.codec.qam_order, codeword.n_bits)
    if perm is not None:
        restored = np.empty_like(rx_bits)
        restored[perm] = rx_bits
        rx_bits = restored
    bit_errors = int(np.count_nonzero(rx_bits != bits))

    # Lado do receptor
    frame_error = bit_errors > 0
    x_hat = None
    if not frame_error:
        try:
            rx_packet = np.packbits(rx_bits).tobytes()
            p_c, p_v, p_cz, p_vz = unpack_packet(rx_packet)
            y_c_hat = decode_latent(p_c, p_cz, coded_c.shape, window, models.entropy, StreamKind.CONTEXT, snr)
            y_v_hat = decode_latent(p_v, p_vz, coded_v.shape, window, models.entropy, StreamKind.MOTION, snr)
            f_hat = step * combine(y_v_hat, y_c_hat)
            x_hat = np.clip(models.transform.decode(f_hat, height, width) + MID_GRAY, 0.0, 1.0)
        except McvstError as exc:
            logger.warning("falha ao decodificar o quadro %d: %s", t, exc)
            frame_error = True
    if x_hat is None:
        if bit_errors:
            logger.warning("quadro %d com %d bits errados; ocultado", t, bit_errors)
        x_hat = _conceal(state, frame.shape)

    mse = float(np.mean((frame - x_hat) ** 2))
    metrics = FrameMetrics(
        frame=t,
        mse=mse,
        psnr_db=psnr_db(mse),
        k_c=k_c,
        k_v=k_v,
        k_cz=k_cz,
        k_vz=k_vz,
        k_t=k_t,
        cbr=cbr([k_t], 1, height, width),
        frame_error=frame_error,
        losses=tuple(diagnostic_loss(k_t, lam, frame, x_hat, x_bar) for lam in cfg.codec.lambdas),
        bit_errors=bit_errors,
        n_bits=int(bits.size),
        channel_uses=len(codeword),
        n_svd=plan.n_svd,
        window_missing=window.n_missing,
    )
    logger.debug(
        "quadro %d: k_c=%.1f k_v=%.1f k_cz=%.1f k_vz=%.1f bits=%d usos=%d/%d",
        t, k_c, k_v, k_cz, k_vz, bits.size, len(codeword), int(np.sum(plan.streams)),
    )

    state.encoder_ref = f_t
    state.decoder_prev = x_hat
    state.frame_index += 1
    state.n_svd_total += plan.n_svd
    state.channel_uses_total += len(codeword)
    return x_hat, metrics


# ---------------------------------------------------------------------
# GoP
# ---------------------------------------------------------------------
def make_gop(config: ExperimentConfig, run_seed: int, models: SimulationModels) -> Gop:
    return synthetic_gop(
        config.sweep.frames,
        config.sweep.height,
        config.sweep.width,
        models.transform,
        child_rng(run_seed, StreamId.SOURCE),
        static=config.sweep.static_gop,
    )


def run_gop(
    config: ExperimentConfig,
    run_seed: int,
    snr_db: float,
    models: Optional[SimulationModels] = None,
    gop: Optional[Gop] = None,
    trace: Optional[np.ndarray] = None,
) -> List[FrameMetrics]:
    """Executa um GoP completo e devolve as métricas por quadro."""
    models = models or SimulationModels.build(config)
    gop = gop or make_gop(config, run_seed, models)
    state = init_state(config, run_seed, snr_db, models, trace)
    metrics = [run_frame(state, frame)[1] for frame in gop.frames]
    errors = sum(m.frame_error for m in metrics)
    logger.info(
        "seed=%d snr=%.1f dB quadros=%d mse médio=%.3e quadros com erro=%d",
        run_seed, snr_db, len(metrics), float(np.mean([m.mse for m in metrics])), errors,
    )
    return metrics
