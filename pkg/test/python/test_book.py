#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.book import (
    Partition,
    RegionLabel,
    SupportLine,
    build_grid,
    label_array,
    label_mask,
    region_profit,
    resample,
    support_lines_value,
    welfare_compare,
    write_book_csv,
    write_json,
)
from screenbook.benchmark import solve_benchmark
from screenbook.errors import GridError, ParameterError
from conftest import BOOK_CFG, mussa_rosen
from dataclasses import replace
import numpy as np
import pytest
import json
import csv


@pytest.fixture
def mussa_rosen_book():
    return solve_benchmark(mussa_rosen(), BOOK_CFG.benchmark)


def test_build_grid_keeps_mandatory_nodes():
    grid = build_grid(-1.0, 1.0, 21, [0.123, 0.5 + 1e-12, 3.0])
    assert grid[0] == -1.0 and grid[-1] == 1.0
    assert 0.123 in grid and 0.0 in grid
    assert 3.0 not in grid
    assert np.all(np.diff(grid) > 0)
    assert np.sum(np.abs(grid - 0.5) < 1e-9) == 1


def test_build_grid_too_small():
    with pytest.raises(ParameterError):
        build_grid(-1.0, 1.0, 2)


def test_partition_merges_neighbours():
    partition = Partition.from_pieces(
        [
            (-1.0, -0.5, RegionLabel.FULL_SERVICE),
            (-0.5, 0.5, RegionLabel.RESERVED),
            (0.5, 0.7, RegionLabel.FULL_SERVICE),
            (0.7, 1.0, RegionLabel.FULL_SERVICE),
        ]
    )
    assert len(partition.intervals) == 3
    assert partition.of(RegionLabel.FULL_SERVICE) == [(-1.0, -0.5), (0.5, 1.0)]
    assert partition.label_at(0.5) == RegionLabel.RESERVED
    assert partition.label_at(0.9) == RegionLabel.FULL_SERVICE
    assert partition.to_dict()[1] == {"lo": -0.5, "hi": 0.5, "region": "reserved"}
    with pytest.raises(ParameterError):
        partition.label_at(2.0)


def test_partition_rejects_gaps():
    with pytest.raises(ParameterError, match="share endpoints"):
        Partition(((-1.0, 0.0, RegionLabel.RESERVED), (0.1, 1.0, RegionLabel.FULL_SERVICE)))


def test_partition_accepts_rounded_endpoints():
    joint = 0.1 + 0.2
    partition = Partition(((-1.0, 0.3, RegionLabel.RESERVED), (joint, 1.0, RegionLabel.FULL_SERVICE)))
    assert partition.label_at(0.5) == RegionLabel.FULL_SERVICE
    merged = Partition.from_pieces(
        [(-1.0, joint, RegionLabel.RESERVED), (0.3, 0.6, RegionLabel.FULL_SERVICE), (0.6, 1.0, RegionLabel.FULL_SERVICE)]
    )
    assert merged.intervals[1] == (joint, 1.0, RegionLabel.FULL_SERVICE)


def test_label_arrays():
    labels = label_array([RegionLabel.RESERVED, "excluded", RegionLabel.MATCHED])
    assert list(labels) == ["reserved", "excluded", "matched"]
    np.testing.assert_array_equal(label_mask(labels, RegionLabel.EXCLUDED), [False, True, False])
    with pytest.raises(ValueError):
        label_array(["nowhere"])


def test_support_lines_envelope():
    lines = [SupportLine(0.0, 0.0, -1.0), SupportLine(1.0, 0.0, 1.0)]
    values, slopes = support_lines_value(lines, np.array([0.0, 0.4, 0.6, 1.0]))
    np.testing.assert_allclose(values, [0.0, -0.4, -0.4, 0.0])
    np.testing.assert_allclose(slopes, [-1.0, -1.0, 1.0, 1.0])


def test_region_profit_mussa_rosen():
    # half of the dealer profit comes from each side
    assert region_profit(mussa_rosen(), 0.5, 1.0, 1.0, 0.0) == pytest.approx(1.0 / 24.0, abs=1e-12)
    assert region_profit(mussa_rosen(), -0.5, -1.0, 0.0, 0.0) == pytest.approx(1.0 / 24.0, abs=1e-12)
    assert region_profit(mussa_rosen(), 0.5, 0.5, 1.0, 0.0) == 0.0


def test_mussa_rosen_book(mussa_rosen_book):
    sol = mussa_rosen_book
    assert sol.spread.width == pytest.approx(2.0, abs=1e-8)
    assert sol.summary()["theta_hi0"] == pytest.approx(0.5)
    assert sol.summary()["gamma_plus"] == 1.0
    np.testing.assert_allclose(sol.welfare(), sol.v)
    assert sol.check_invariants().ok


def test_broken_book_fails_invariants(mussa_rosen_book):
    broken = replace(mussa_rosen_book, v=mussa_rosen_book.v - 0.1)
    report = broken.check_invariants()
    failed = {c.name for c in report.failures}
    assert {"v_nonnegative", "v_zero_at_origin", "transfer_identity"} <= failed
    decreasing = replace(mussa_rosen_book, q=mussa_rosen_book.q[::-1].copy())
    assert "q_monotone" in {c.name for c in decreasing.check_invariants().failures}


def test_resample(mussa_rosen_book):
    assert resample(mussa_rosen_book, mussa_rosen_book.grid) is mussa_rosen_book
    grid = np.linspace(-1.0, 1.0, 41)
    coarse = resample(mussa_rosen_book, grid)
    assert coarse.flags["resampled"]
    right = grid > 0.5
    np.testing.assert_allclose(coarse.v[right], (grid[right] - 0.5) ** 2, atol=1e-5)
    assert coarse.labels[20] == RegionLabel.RESERVED.value
    with pytest.raises(GridError):
        resample(mussa_rosen_book, np.linspace(-2.0, 1.0, 5))


def test_crossing_network_dominates_benchmark(tapered_book, affine_book):
    report = welfare_compare(tapered_book, affine_book)
    assert report.all_hold, report.to_dict()
    assert report.spread.violation == 0.0


def test_benchmark_does_not_dominate_crossing_network(tapered_book, affine_book):
    report = welfare_compare(affine_book, tapered_book)
    assert not report.welfare.holds
    assert not report.spread.holds
    assert report.to_dict()["welfare"]["violation"] > 0


def test_welfare_compare_needs_common_type_space(tapered_book):
    with pytest.raises(GridError):
        welfare_compare(tapered_book, solve_benchmark(mussa_rosen(2.0), BOOK_CFG.benchmark))


def test_write_book_csv(tmp_path, mussa_rosen_book):
    path = tmp_path / "book.csv"
    write_book_csv(mussa_rosen_book, str(path))
    with open(path) as fp:
        rows = list(csv.reader(fp))
    assert rows[0] == ["theta", "q", "tau", "v", "gamma", "u0", "region", "per_type_profit"]
    assert len(rows) == mussa_rosen_book.grid.size + 1
    assert rows[1][0] == "-1" and rows[1][6] == "full_service"


def test_write_json(tmp_path, mussa_rosen_book):
    path = tmp_path / "spread.json"
    write_json({"spread": mussa_rosen_book.spread.to_dict(), "n": np.int64(3), "a": np.arange(2)}, str(path))
    text = path.read_text()
    data = json.loads(text)
    assert list(data) == ["a", "n", "spread"]
    assert data["n"] == 3 and data["a"] == [0, 1]
    assert data["spread"]["t_plus"] == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(TypeError):
        write_json({"bad": object()}, str(tmp_path / "bad.json"))
