"""
Esquema das tabelas de resultados (CSV).

Centraliza os nomes e a ordem das colunas para que o exportador, o comando
``sweep`` e os testes usem exatamente a mesma lista. Evite repetir nomes de
colunas fora deste módulo.

As funções principais são:
  - `frame_columns`: colunas do CSV por quadro, na ordem fixa.
  - `sort_columns`: chave de ordenação das linhas (snr_db, seed, frame).
  - `missing_columns`: colunas obrigatórias ausentes em um DataFrame lido de volta.
"""

from __future__ import annotations

from typing import List, Sequence

import pandas as pd

SNR_COL = "snr_db"
SEED_COL = "seed"
FRAME_COL = "frame"

FRAME_COLUMNS = [
    SNR_COL,
    SEED_COL,
    FRAME_COL,
    "mse",
    "psnr_db",
    "k_c",
    "k_v",
    "k_cz",
    "k_vz",
    "k_t",
    "cbr",
    "frame_error",
]

SORT_KEYS = [SNR_COL, SEED_COL, FRAME_COL]

# Colunas do resumo por SNR produzido pelo sweep (média sobre sementes e quadros).
SUMMARY_COLUMNS = [
    SNR_COL,
    "n_rows",
    "mse",
    "psnr_db",
    "k_t",
    "cbr",
    "frame_error_rate",
]


def frame_columns() -> List[str]:
    """Cópia da lista de colunas do CSV por quadro."""
    return list(FRAME_COLUMNS)


def sort_columns() -> List[str]:
    return list(SORT_KEYS)


def missing_columns(df: pd.DataFrame, required: Sequence[str] = FRAME_COLUMNS) -> List[str]:
    """Retorna as colunas obrigatórias que não aparecem em ``df`` (na ordem do esquema)."""
    present = {str(c).strip().lower() for c in df.columns}
    return [c for c in required if c not in present]
