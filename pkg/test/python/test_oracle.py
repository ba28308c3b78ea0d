#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.oracle import OracleConfig, oracle_compare, oracle_solve, oracle_to_book, write_oracle_csv
from screenbook.errors import ParameterError
from screenbook.book import RegionLabel, label_mask
from screenbook.benchmark import solve_benchmark
from screenbook.families import PricePair
from conftest import BOOK_CFG, mussa_rosen
import numpy as np
import pytest

SMALL = OracleConfig(n_grid=201)


@pytest.fixture(scope="module")
def mussa_rosen_oracle():
    return oracle_solve(mussa_rosen(), PricePair(), SMALL)


def test_oracle_mussa_rosen(mussa_rosen_oracle):
    ora = mussa_rosen_oracle
    assert ora.grid.size == 201 and ora.grid[100] == 0.0
    assert ora.v[100] == 0.0
    assert np.all(ora.v >= -1e-12)
    assert np.all(np.diff(ora.cell_q[:100]) >= -1e-12)
    assert ora.objective == pytest.approx(1.0 / 12.0, abs=2e-3)
    assert ora.max_violation == 0.0
    assert [s["penalty"] for s in ora.stages] == list(SMALL.penalties)


def test_oracle_labels(mussa_rosen_oracle):
    ora = mussa_rosen_oracle
    reserved = ora.grid[label_mask(ora.labels, RegionLabel.RESERVED)]
    assert reserved.min() == pytest.approx(-0.5, abs=0.02)
    assert reserved.max() == pytest.approx(0.5, abs=0.02)
    assert RegionLabel.EXCLUDED.value not in set(ora.labels)


def test_oracle_agrees_with_closed_form(mussa_rosen_oracle):
    book = solve_benchmark(mussa_rosen(), BOOK_CFG.benchmark)
    comparison = oracle_compare(book, mussa_rosen_oracle)
    assert comparison.passed, comparison.to_dict()
    assert comparison.v_sup < 5e-3
    assert comparison.relative_gap < 5e-2


def test_oracle_to_book(mussa_rosen_oracle):
    book = oracle_to_book(mussa_rosen_oracle)
    assert book.flags["oracle"]
    assert np.all(book.gamma_reporting_only)
    assert np.all(np.isnan(book.gamma))
    assert book.spread.t_plus == pytest.approx(1.0, abs=5e-2)
    lo0, hi0 = book.reserved_interval()
    assert lo0 < 0 < hi0


def test_oracle_is_cached():
    first = oracle_solve(mussa_rosen(), PricePair(), SMALL)
    assert oracle_solve(mussa_rosen(), PricePair(), SMALL) is first


def test_write_oracle_csv(tmp_path, mussa_rosen_oracle):
    path = tmp_path / "oracle.csv"
    write_oracle_csv(mussa_rosen_oracle, str(path))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("theta,q,tau,v")
    assert len(lines) == 202


@pytest.mark.slow
def test_oracle_affine_outside(affine_spec, affine_book):
    ora = oracle_solve(affine_spec, PricePair(), OracleConfig(n_grid=1001))
    comparison = oracle_compare(affine_book, ora)
    assert comparison.passed, comparison.to_dict()
    assert RegionLabel.EXCLUDED.value not in set(ora.labels)


@pytest.mark.parametrize(
    "kwargs", [{"n_grid": 100}, {"n_grid": 51}, {"penalties": ()}, {"penalties": (1.0, -1.0)}, {"max_sweeps": 0}]
)
def test_oracle_config_validation(kwargs):
    with pytest.raises(ParameterError):
        OracleConfig(**kwargs)
