"""
Hierarquia de exceções do simulador.

Cada tipo corresponde a uma categoria de erro usada pelos módulos de canal,
precodificação, amostragem, mapa de correlação e codec. Os tipos que indicam
valor inválido também herdam de ``ValueError`` para que chamadores genéricos
continuem funcionando com ``except ValueError``.

A CLI converte qualquer ``McvstError`` em uma linha legível por máquina usando
``error_kind``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional


class McvstError(Exception):
    """Erro base do simulador."""


class InvalidConfigError(McvstError, ValueError):
    """Configuração fora dos invariantes (canal, agenda, QAM, etc.)."""


class InvalidInputError(McvstError, ValueError):
    """Entrada numérica inválida (não finita, dimensão incompatível)."""


class InvalidParamsError(McvstError, ValueError):
    """Parâmetros de modelo de entropia inválidos (escala abaixo do piso, ψ inválido)."""


class InvalidRefsError(McvstError, ValueError):
    """Referências ausentes ao prever parâmetros de entropia."""


class OrderingError(McvstError, ValueError):
    """Índices de símbolo fora de ordem no histórico de CSI."""


class EncodingError(McvstError):
    """Símbolo fora do suporte da tabela durante a codificação."""


class InternalError(McvstError):
    """Estado que deveria ser inalcançável."""


class RankDeficiencyError(McvstError, ValueError):
    """Valor singular de um fluxo ativo abaixo do limiar de posto."""

    def __init__(self, stream: int, singular_value: float, threshold: float) -> None:
        self.stream = stream
        self.singular_value = singular_value
        self.threshold = threshold
        super().__init__(
            f"fluxo {stream} com valor singular {singular_value:.3e} <= limiar {threshold:.3e}"
        )


class CapacityError(McvstError):
    """Codeword não cabe nos recursos do quadro."""

    def __init__(self, required: int, available: int) -> None:
        self.required = required
        self.available = available
        super().__init__(
            f"capacidade excedida: {required} símbolos necessários, {available} disponíveis"
        )


@dataclass(frozen=True)
class ConfigIssue:
    line: Optional[int]
    key: str
    message: str

    def __str__(self) -> str:
        where = f"linha {self.line}" if self.line is not None else "padrão"
        return f"{where}: {self.key}: {self.message}"


class ConfigError(McvstError):
    """Conjunto de todos os problemas encontrados ao interpretar uma configuração."""

    def __init__(self, issues: List[ConfigIssue]) -> None:
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


def error_kind(exc: BaseException) -> str:
    """Nome em snake_case da classe de erro (``CapacityError`` -> ``capacity``)."""
    name = type(exc).__name__
    if name.endswith("Error") and name != "Error":
        name = name[: -len("Error")]
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()
