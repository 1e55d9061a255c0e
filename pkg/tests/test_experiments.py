"""Sweep and probe drivers: warm starts, burn-in clipping, continuity
summaries, derivative probes, and the CSV emitters."""

import csv
import math

import numpy as np
import pytest

from billiard_lab import EclipseError, Word, find_orbit_segment
from billiard_lab.config import ConfigError, load_config
from billiard_lab.experiments import (BOUNDS_HEADER, SWEEP_HEADER,
                                      analyze_orbit, effective_burn_in,
                                      emit_outputs, run_check, run_derivative,
                                      run_sweep, solve_word, write_bounds_csv,
                                      write_sweep_csv)

SQRT2 = math.sqrt(2.0)

SMALL = """
mode = "period2"
alpha_max = 0.5
alpha_grid = [0.0, 0.4, 5]
words = ["1,2", "1,2,1,2"]
obstacle1.kind = "circle"
obstacle1.center_x = 0.0
obstacle1.center_y = 0.0
obstacle1.radius = 1.0
obstacle2.kind = "circle"
obstacle2.center_x = [4.0, 1.0]
obstacle2.center_y = 0.0
obstacle2.radius = 1.0
"""


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.cfg"
    p.write_text(SMALL)
    return load_config(p)


def _write_cfg(tmp_path, text):
    p = tmp_path / "t.cfg"
    p.write_text(text)
    return p


def test_solve_word_dispatch(small_cfg):
    cyc = solve_word(small_cfg, Word((1, 2)), 0.0)
    assert cyc.kind == "periodic"
    seg = solve_word(small_cfg, Word((1, 2, 1, 2), cyclic=False), 0.0)
    assert seg.kind == "segment"
    assert len(seg.records) == 4


def test_solve_word_trims_deep_warm_start(small_cfg):
    word = Word((1, 2, 1, 2, 1, 2), cyclic=False)
    deep = find_orbit_segment(word, small_cfg.family, 0.1,
                              padding=small_cfg.padding + 4)
    warm = solve_word(small_cfg, word, 0.1, init=np.asarray(deep.chain_us))
    cold = solve_word(small_cfg, word, 0.1)
    assert warm.core_start == cold.core_start
    np.testing.assert_allclose(
        [r.u for r in warm.records], [r.u for r in cold.records], atol=1e-9)


def test_effective_burn_in_clips(small_cfg):
    cyc = solve_word(small_cfg, Word((1, 2)), 0.0)
    assert effective_burn_in(cyc, small_cfg) == 0
    seg = solve_word(small_cfg, Word((1, 2, 1, 2), cyclic=False), 0.0)
    # configured burn_in (10) would eat the whole 4-flight window
    assert effective_burn_in(seg, small_cfg) == 3


def test_analyze_orbit_translate_values(small_cfg):
    orbit = solve_word(small_cfg, Word((1, 2)), 0.0)
    res = analyze_orbit(small_cfg, orbit)
    assert res["report"].m == 2
    assert res["report"].lambda_m == pytest.approx(math.log(3 + 2 * SQRT2),
                                                   abs=1e-12)
    assert res["F_m"] == pytest.approx(SQRT2 / 4.0, abs=1e-10)
    assert res["burn_in"] == 0
    assert set(res) == {"report", "derivs", "trace", "kdot", "F_m", "f_dot",
                        "burn_in"}


def test_run_sweep_layout_and_continuity(small_cfg):
    result = run_sweep(small_cfg)
    grid = small_cfg.alpha_grid
    assert not result.failures
    assert len(result.bounds) == len(grid)
    assert len(result.rows) == 2 * len(grid)
    # sorted by word then alpha
    keys = [(r.word_id, r.alpha) for r in result.rows]
    assert keys == sorted(keys)
    assert result.summary["continuity_ok"]
    assert result.summary["n_failures"] == 0
    for ident in ("1-2", "1-2-1-2"):
        ws = result.summary["words"][ident]
        assert ws["solved"] == len(grid)
        assert ws["continuity_ok"]
        assert ws["max_continuity_defect"] <= 1e-10


def test_run_sweep_fd_slope_endpoints(small_cfg):
    result = run_sweep(small_cfg)
    rows = [r for r in result.rows if r.word_id == "1-2"]
    assert rows[0].fd_slope == rows[0].F_m
    assert rows[-1].fd_slope == rows[-1].F_m
    mid = rows[2]
    expect = (rows[3].lambda_m - rows[1].lambda_m) \
        / (rows[3].alpha - rows[1].alpha)
    assert mid.fd_slope == pytest.approx(expect, abs=1e-15)
    # grid is coarse so the secant only roughly tracks the derivative
    assert mid.fd_slope == pytest.approx(mid.F_m, rel=5e-2)


def test_run_sweep_rows_inside_bracket(small_cfg):
    result = run_sweep(small_cfg)
    for r in result.rows:
        assert r.lower - 1e-12 <= r.lambda_m <= r.upper + 1e-12


def test_run_sweep_threaded_matches_serial(small_cfg, monkeypatch):
    serial = run_sweep(small_cfg)
    monkeypatch.setenv("BILLIARD_LAB_THREADS", "2")
    threaded = run_sweep(small_cfg)
    assert serial.rows == threaded.rows
    assert serial.summary == threaded.summary


def test_bad_thread_env_rejected(small_cfg, monkeypatch):
    monkeypatch.setenv("BILLIARD_LAB_THREADS", "two")
    with pytest.raises(ConfigError, match="BILLIARD_LAB_THREADS"):
        run_sweep(small_cfg)


def test_run_sweep_requires_c4_table(tmp_path):
    cfg = load_config(_write_cfg(tmp_path, SMALL + "\nsmoothness = [3, 2]\n"))
    with pytest.raises(ConfigError, match="smoothness"):
        run_sweep(cfg)


def test_run_derivative_requires_c5_table(tmp_path):
    cfg = load_config(_write_cfg(tmp_path, SMALL + "\nsmoothness = [4, 2]\n"))
    run_sweep(cfg)   # C^4 is enough for the sweep
    with pytest.raises(ConfigError, match="smoothness"):
        run_derivative(cfg, "1-2")


def test_run_derivative_translate(small_cfg):
    rows, summary = run_derivative(small_cfg, "1-2")
    assert summary["ok"]
    assert summary["F0"] == pytest.approx(SQRT2 / 4.0, abs=1e-10)
    assert rows[0].alpha == 0.0 and rows[0].defect == 0.0
    assert len(rows) == 6
    alphas = [r.alpha for r in rows[1:]]
    assert alphas == sorted(alphas)
    assert math.isfinite(summary["k_fit"])
    # defect shrinks with the probe: largest probe has the largest defect
    assert rows[-1].defect == max(r.defect for r in rows[1:])


def test_run_derivative_unknown_word(small_cfg):
    with pytest.raises(ConfigError, match="not in the configuration"):
        run_derivative(small_cfg, "2-1")


def test_run_check_rows(small_cfg):
    rows = run_check(small_cfg)
    assert len(rows) == len(small_cfg.alpha_grid)
    assert [r.alpha for r in rows] == [pytest.approx(a)
                                       for a in small_cfg.alpha_grid]
    for r in rows:
        assert 0.0 < r.lower < r.upper
        assert r.d_min == pytest.approx(2.0 + r.alpha, abs=1e-12)


def test_eclipse_table_fails_in_bounds(tmp_path):
    text = """
mode = "general"
alpha_max = 0.1
alpha_grid = [0.0, 0.1, 2]
words = ["1,2,3"]
obstacle1.kind = "circle"
obstacle1.center_x = 0.0
obstacle1.center_y = 0.0
obstacle1.radius = 1.0
obstacle2.kind = "circle"
obstacle2.center_x = 6.0
obstacle2.center_y = 0.0
obstacle2.radius = 1.0
obstacle3.kind = "circle"
obstacle3.center_x = 12.0
obstacle3.center_y = 0.0
obstacle3.radius = 1.0
"""
    cfg = load_config(_write_cfg(tmp_path, text), validate=False)
    with pytest.raises(EclipseError):
        run_sweep(cfg)


def test_csv_headers_and_determinism(small_cfg, tmp_path):
    result = run_sweep(small_cfg)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_sweep_csv(a, result.rows)
    write_sweep_csv(b, result.rows)
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == SWEEP_HEADER
    assert len(lines) == 1 + len(result.rows)
    with open(a, newline="") as fh:
        rec = next(iter(list(csv.DictReader(fh))))
    assert float(rec["lambda_m"]) == pytest.approx(result.rows[0].lambda_m,
                                                   rel=1e-12)
    assert rec["word_id"] == result.rows[0].word_id
    assert rec["m"] == str(result.rows[0].m)

    bounds = tmp_path / "bounds.csv"
    write_bounds_csv(bounds, result.bounds)
    blines = bounds.read_text().splitlines()
    assert blines[0] == BOUNDS_HEADER
    assert len(blines) == 1 + len(result.bounds)


def test_emit_outputs_files(small_cfg, tmp_path):
    result = run_sweep(small_cfg)
    paths = emit_outputs(tmp_path / "out", result)
    assert [p.name for p in paths] == ["sweep.csv", "bounds.csv", "plot.gp"]
    for p in paths:
        assert p.exists() and p.stat().st_size > 0
    gp = (tmp_path / "out" / "plot.gp").read_text()
    assert "sweep.csv" in gp and "bounds.csv" in gp
