"""
Execução de células (SNR, semente) e exportação dos resultados em CSV:
- tabela por quadro no esquema fixo de ``utils.columns``
- varredura SNR x semente (serial ou em paralelo com joblib)
- resumo por SNR para o relatório do CLI
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from config import ExperimentConfig
from phy.channel_sim import read_trace
from pipeline import FrameMetrics, SimulationModels, run_gop
from utils.columns import FRAME_COLUMNS, SNR_COL, SORT_KEYS, SUMMARY_COLUMNS, frame_columns

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------
# Tabelas
# ---------------------------------------------------------------------
def metrics_frame(metrics: Sequence[FrameMetrics], snr_db: float, seed: int) -> pd.DataFrame:
    """Converte as métricas de um GoP em linhas do CSV por quadro.

    Args:
        metrics: Métricas na ordem dos quadros.
        snr_db: SNR da célula.
        seed: Semente da execução.

    Returns:
        DataFrame com exatamente as colunas de ``FRAME_COLUMNS``.
    """
    rows = [
        {
            "snr_db": float(snr_db),
            "seed": int(seed),
            "frame": m.frame,
            "mse": m.mse,
            "psnr_db": m.psnr_db,
            "k_c": m.k_c,
            "k_v": m.k_v,
            "k_cz": m.k_cz,
            "k_vz": m.k_vz,
            "k_t": m.k_t,
            "cbr": m.cbr,
            "frame_error": int(m.frame_error),
        }
        for m in metrics
    ]
    return pd.DataFrame(rows, columns=frame_columns())


def sort_rows(df: pd.DataFrame) -> pd.DataFrame:
    """Ordenação determinística (snr_db, seed, frame) e índice reiniciado."""
    return df.sort_values(SORT_KEYS, kind="mergesort").reset_index(drop=True)


def write_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Grava o CSV por quadro (cabeçalho sempre presente, mesmo sem linhas)."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    out = sort_rows(df.reindex(columns=FRAME_COLUMNS)) if len(df) else pd.DataFrame(columns=FRAME_COLUMNS)
    out.to_csv(path, index=False, lineterminator="\n", float_format="%.12g")
    logger.info("%d linhas gravadas em %s", len(out), path)
    return path


def summarize(df: pd.DataFrame) -> pd.DataFrame:
    """Médias por SNR sobre sementes e quadros.

    A PSNR média é calculada a partir do MSE médio (e não como média das PSNRs).
    """
    if df.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    grouped = df.groupby(SNR_COL, sort=True)
    out = pd.DataFrame({
        "n_rows": grouped.size(),
        "mse": grouped["mse"].mean(),
        "k_t": grouped["k_t"].mean(),
        "cbr": grouped["cbr"].mean(),
        "frame_error_rate": grouped["frame_error"].mean(),
    }).reset_index()
    with np.errstate(divide="ignore"):
        out["psnr_db"] = np.where(out["mse"] > 0, 10.0 * np.log10(1.0 / out["mse"].clip(lower=1e-300)), np.inf)
    return out[SUMMARY_COLUMNS]


# ---------------------------------------------------------------------
# Execução
# ---------------------------------------------------------------------
def _load_trace(config: ExperimentConfig) -> Optional[np.ndarray]:
    if config.io.trace_path is None:
        return None
    trace = read_trace(config.io.trace_path)
    logger.info("traço de canal %s: %d símbolos", config.io.trace_path, trace.shape[0])
    return trace


def run_cell(
    config: ExperimentConfig,
    snr_db: float,
    seed: int,
    models: Optional[SimulationModels] = None,
    trace: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """Um GoP para um par (SNR, semente)."""
    metrics = run_gop(config, seed, snr_db, models=models, trace=trace)
    for m in metrics:
        if m.losses:
            logger.debug(
                "seed=%d snr=%.1f quadro %d: perdas %s",
                seed, snr_db, m.frame, ", ".join(f"{lam:g}:{v:.1f}" for lam, v in zip(config.codec.lambdas, m.losses)),
            )
    return metrics_frame(metrics, snr_db, seed)


def simulate(config: ExperimentConfig, snr_db: Optional[float] = None) -> pd.DataFrame:
    """Um GoP com a semente raiz e a primeira SNR da configuração (ou ``snr_db``)."""
    snr = config.sweep.snr_db[0] if snr_db is None else snr_db
    return sort_rows(run_cell(config, snr, config.sweep.seed, trace=_load_trace(config)))


def _cells(config: ExperimentConfig, snr_values: Iterable[float]) -> List[tuple]:
    return [(float(snr), seed) for snr in snr_values for seed in config.run_seeds()]


def run_sweep(
    config: ExperimentConfig,
    snr_values: Optional[Sequence[float]] = None,
    workers: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """Varre SNR x semente e devolve as linhas ordenadas.

    Os modelos vêm da semente raiz e são compartilhados por todas as células;
    o canal, o ruído e a fonte de cada célula vêm da semente da execução, de
    modo que SNRs diferentes veem as mesmas realizações.

    Args:
        config: Configuração validada.
        snr_values: SNRs a varrer (padrão: ``sweep.snr_db``).
        workers: Processos do joblib (1 = serial).
        progress: Exibe barra de progresso (tqdm).
    """
    snr_values = list(config.sweep.snr_db if snr_values is None else snr_values)
    cells = _cells(config, snr_values)
    models = SimulationModels.build(config)
    trace = _load_trace(config)
    iterator = tqdm(cells, desc="sweep", unit="célula", disable=not progress)
    if workers > 1:
        tables = Parallel(n_jobs=workers)(
            delayed(run_cell)(config, snr, seed, models, trace) for snr, seed in iterator
        )
    else:
        tables = [run_cell(config, snr, seed, models, trace) for snr, seed in iterator]
    logger.info("sweep concluído: %d células, %d SNRs", len(cells), len(snr_values))
    if not tables:
        return pd.DataFrame(columns=FRAME_COLUMNS)
    return sort_rows(pd.concat(tables, ignore_index=True))
