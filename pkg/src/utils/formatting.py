"""
Funções utilitárias de formatação numérica para a saída do CLI.
"""

import math
from typing import Any


def safe_format_db(value: Any) -> str:
    """
    Formata um valor em dB com duas casas ("inf dB" para valores infinitos).
    """
    try:
        v = float(value)
        if math.isinf(v):
            return "inf dB" if v > 0 else "-inf dB"
        if math.isnan(v):
            return "n/d"
        return f"{v:.2f} dB"
    except Exception:
        return "n/d"


def safe_format_bits(value: Any) -> str:
    """
    Formata uma contagem de bits em estilo compacto (kbit, Mbit).
    """
    try:
        v = float(value)
        if math.isnan(v):
            return "n/d"
        if abs(v) >= 1_000_000:
            return f"{v / 1_000_000:.2f} Mbit"
        elif abs(v) >= 1_000:
            return f"{v / 1_000:.2f} kbit"
        else:
            return f"{v:.0f} bit"
    except Exception:
        return "n/d"


def safe_format_ratio(value: Any) -> str:
    """
    Formata razões pequenas (CBR) com quatro algarismos significativos.
    """
    try:
        return f"{float(value):.4g}"
    except Exception:
        return "n/d"
