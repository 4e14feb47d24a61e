"""
CLI do simulador de enlace MIMO-OFDM com codec entrópico.

Comandos:
- simulate        um GoP, CSV por quadro
- sweep           SNR x semente, CSV por quadro de todas as células
- coverage        auditoria da amostragem recursiva de subportadoras
- codec-selftest  ida e volta e consistência de taxa do codec
- export-trace    grava um traço de canal gerado ao vivo

Uso: ``python src/main_app.py sweep --config exp.cfg --out results.csv``
"""

from __future__ import annotations

import functools
import logging
import os
import sys
from pathlib import Path
from typing import Callable, List, Optional

import click
import numpy as np

# --- bootstrap de imports: garante que a pasta do arquivo (src) está no sys.path
_SRC = Path(__file__).resolve().parent
if str(_SRC) not in sys.path:
    sys.path.insert(0, str(_SRC))

from dotenv import find_dotenv, load_dotenv

# Procura o .env subindo diretórios a partir do diretório corrente
load_dotenv(find_dotenv(usecwd=True))

from codec.latent_codec import run_selftest
from config import ExperimentConfig, load_config, resolve_seed
from export import run_sweep, simulate, summarize, write_csv
from phy.channel_sim import ChannelState, write_trace
from phy.sampling import SamplingSchedule, coverage_audit
from utils.errors import ConfigError, InvalidConfigError, McvstError, error_kind
from utils.formatting import safe_format_bits, safe_format_db, safe_format_ratio

logger = logging.getLogger("mcvst")

LOG_LEVEL_ENV_VAR = "MCVST_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


# ---------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------
def _configure_logging(verbose: bool) -> None:
    level_name = os.getenv(LOG_LEVEL_ENV_VAR, "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)
    if verbose:
        level = min(level, logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _quote(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")


def _error_lines(exc: McvstError) -> List[str]:
    """Linhas legíveis por máquina para o stderr (uma por problema de configuração)."""
    if isinstance(exc, ConfigError):
        return [
            f'mcvst-error kind=config line={issue.line if issue.line is not None else "-"} '
            f'key={issue.key} message="{_quote(issue.message)}"'
            for issue in exc.issues
        ]
    return [f'mcvst-error kind={error_kind(exc)} message="{_quote(str(exc))}"']


def _exit_code(exc: BaseException) -> int:
    return 2 if isinstance(exc, (ConfigError, InvalidConfigError)) else 1


def handle_errors(func: Callable) -> Callable:
    """Converte erros do simulador em linhas ``mcvst-error`` e código de saída."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except McvstError as exc:
            for line in _error_lines(exc):
                click.echo(line, err=True)
            sys.exit(_exit_code(exc))
        except OSError as exc:
            click.echo(f'mcvst-error kind=io message="{_quote(str(exc))}"', err=True)
            sys.exit(1)

    return wrapper


def _load(config_path: Optional[Path], seed: Optional[int], frames: Optional[int] = None) -> ExperimentConfig:
    cfg = resolve_seed(load_config(config_path), seed)
    logger.info("configuração: %s, semente %d", config_path or "padrões", cfg.sweep.seed)
    if frames is not None:
        if frames < 1:
            raise InvalidConfigError("--frames deve ser >= 1")
        cfg = cfg.model_copy(update={"sweep": cfg.sweep.model_copy(update={"frames": frames})})
    return cfg


def _parse_snr_list(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        values = [float(v) for v in text.replace("[", "").replace("]", "").split(",") if v.strip()]
    except ValueError:
        raise InvalidConfigError(f"--snr-db inválido: {text!r}") from None
    if not values:
        raise InvalidConfigError("--snr-db vazio")
    return values


def _echo_summary(df) -> None:
    for row in summarize(df).itertuples(index=False):
        click.echo(
            f"snr={row.snr_db:g} dB  quadros={row.n_rows}  psnr={safe_format_db(row.psnr_db)}  "
            f"k_t={safe_format_bits(row.k_t)}  cbr={safe_format_ratio(row.cbr)}  "
            f"fer={row.frame_error_rate:.3f}"
        )


# ---------------------------------------------------------------------
# Comandos
# ---------------------------------------------------------------------
config_option = click.option(
    "--config", "config_path", type=click.Path(path_type=Path, dir_okay=False), default=None,
    help="Arquivo de configuração (secao.chave = valor).",
)
seed_option = click.option("--seed", type=int, default=None, help="Semente raiz (sobrepõe MCVST_SEED).")
out_option = click.option("--out", "out_path", type=click.Path(path_type=Path, dir_okay=False), default=None,
                          help="CSV de saída (padrão: io.output_path).")


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log em nível INFO.")
def cli(verbose: bool) -> None:
    """Simulador de enlace MIMO-OFDM com codec entrópico guiado por CSI."""
    _configure_logging(verbose)


@cli.command("simulate")
@config_option
@seed_option
@out_option
@click.option("--snr-db", "snr_db", type=float, default=None, help="SNR em dB (padrão: primeira de sweep.snr_db).")
@click.option("--frames", type=int, default=None, help="Quadros do GoP.")
@handle_errors
def cmd_simulate(config_path, seed, out_path, snr_db, frames) -> None:
    """Transmite um GoP e grava o CSV por quadro."""
    cfg = _load(config_path, seed, frames)
    df = simulate(cfg, snr_db)
    path = write_csv(df, out_path or cfg.io.output_path)
    _echo_summary(df)
    click.echo(f"csv: {path}")


@cli.command("sweep")
@config_option
@seed_option
@out_option
@click.option("--snr-db", "snr_list", type=str, default=None, help="Lista de SNRs, p.ex. 0,4,8,12.")
@click.option("--frames", type=int, default=None, help="Quadros por GoP.")
@click.option("--workers", type=int, default=1, show_default=True, help="Processos paralelos (joblib).")
@click.option("--progress", is_flag=True, help="Barra de progresso.")
@handle_errors
def cmd_sweep(config_path, seed, out_path, snr_list, frames, workers, progress) -> None:
    """Varre SNR x semente e grava todas as linhas em um CSV."""
    cfg = _load(config_path, seed, frames)
    if workers < 1:
        raise InvalidConfigError("--workers deve ser >= 1")
    df = run_sweep(cfg, _parse_snr_list(snr_list), workers=workers, progress=progress)
    path = write_csv(df, out_path or cfg.io.output_path)
    _echo_summary(df)
    click.echo(f"csv: {path}")


@cli.command("coverage")
@config_option
@click.option("--t0", type=int, default=0, show_default=True, help="Símbolo inicial do ciclo.")
@handle_errors
def cmd_coverage(config_path, t0) -> None:
    """Imprime os índices amostrados em m_h símbolos consecutivos."""
    cfg = load_config(config_path)
    audit = coverage_audit(SamplingSchedule(cfg.mimo.n_subcarriers, cfg.sampling.m_h), t0)
    for t, indices in audit.rows:
        click.echo(f"t={t}: " + " ".join(str(i) for i in indices))
    verdict = "ok" if audit.partition_ok else "falhou"
    click.echo(f"partição de 0..{audit.n_subcarriers - 1}: {verdict}")
    if not audit.partition_ok:
        sys.exit(1)


@cli.command("codec-selftest")
@seed_option
@click.option("--trials", type=int, default=4, show_default=True)
@handle_errors
def cmd_codec_selftest(seed, trials) -> None:
    """Ida e volta e consistência de taxa; código de saída != 0 em falha."""
    cfg = resolve_seed(load_config(None), seed)
    result = run_selftest(cfg.sweep.seed, trials=trials)
    for failure in result.failures:
        click.echo(f"falha: {failure}", err=True)
    click.echo(f"ensaios={result.trials} maior_desvio={result.max_rate_gap:.2f} bits digest={result.digest}")
    click.echo("selftest: " + ("ok" if result.ok else "falhou"))
    if not result.ok:
        sys.exit(1)


@cli.command("export-trace")
@config_option
@seed_option
@click.option("--symbols", type=int, default=64, show_default=True, help="Símbolos OFDM no traço.")
@click.option("--out", "out_path", type=click.Path(path_type=Path, dir_okay=False), required=True)
@handle_errors
def cmd_export_trace(config_path, seed, symbols, out_path) -> None:
    """Gera o canal ao vivo e grava o traço binário."""
    cfg = _load(config_path, seed)
    if symbols < 1:
        raise InvalidConfigError("--symbols deve ser >= 1")
    state = ChannelState(cfg.channel_config(cfg.sweep.seed))
    responses = []
    for _ in range(symbols):
        responses.append(state.realization().freq_response)
        state.advance()
    path = write_trace(out_path, np.stack(responses))
    click.echo(f"traço: {path} ({symbols} símbolos)")


if __name__ == "__main__":
    cli()
