import numpy as np
import pytest

from codec.entropy import information_bits, laplace_box_prob
from codec.range_coder import FREQ_TOTAL, LaplaceTable, PmfTable, range_decode, range_encode
from utils.errors import EncodingError, InvalidParamsError


def test_pmf_round_trip(rng):
    table = PmfTable([0.5, 0.25, 0.125, 0.125], lo=-1)
    symbols = rng.choice([-1, 0, 1, 2], size=500, p=[0.5, 0.25, 0.125, 0.125]).tolist()
    payload, n_bits = range_encode(symbols, [table] * len(symbols))
    assert range_decode(payload, [table] * len(symbols), n_bits) == symbols
    assert n_bits <= information_bits([[0.5, 0.25, 0.125, 0.125][s + 1] for s in symbols]) + 64


def test_laplace_round_trip_with_varying_tables(rng):
    mus = rng.uniform(-3, 3, size=300)
    bs = rng.uniform(0.2, 5, size=300)
    tables = [LaplaceTable(m, b) for m, b in zip(mus, bs)]
    symbols = [int(np.rint(rng.laplace(m, b))) for m, b in zip(mus, bs)]
    payload, _ = range_encode(symbols, tables)
    assert range_decode(payload, tables) == symbols


def test_table_cumulative_bounds():
    table = LaplaceTable(0.3, 1.0)
    assert table.cum(table.lo) == 0 and table.cum(table.hi + 1) == FREQ_TOTAL
    assert all(table.cum(k + 1) > table.cum(k) for k in range(table.lo, table.hi + 1))


def test_empty_sequence():
    assert range_encode([], []) == (b"", 0)
    assert range_decode(b"", []) == []


def test_out_of_support_symbol():
    table = LaplaceTable(0.0, 1.0)
    with pytest.raises(EncodingError):
        range_encode([table.hi + 1], [table])
    with pytest.raises(EncodingError):
        range_encode([0, 1], [table])


def test_invalid_tables():
    with pytest.raises(InvalidParamsError):
        PmfTable([0.0, 0.0])
    with pytest.raises(InvalidParamsError):
        LaplaceTable(0.0, 0.0)


@pytest.mark.slow
def test_rate_matches_information_content():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        mu = float(rng.uniform(-10, 10))
        b = float(rng.uniform(0.3, 10.0))
        table = LaplaceTable(mu, b)
        symbols = np.clip(np.rint(rng.laplace(mu, b, size=10_000)), table.lo, table.hi).astype(int)
        payload, n_bits = range_encode(symbols.tolist(), [table] * symbols.size)
        estimate = information_bits(laplace_box_prob(symbols, mu, b))
        assert abs(n_bits - estimate) <= 64 + 1e-3 * estimate
        assert range_decode(payload, [table] * symbols.size, n_bits) == symbols.tolist()
