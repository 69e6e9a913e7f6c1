import math

import numpy as np
import pytest

from eigensupport.exceptions import InvalidArgument
from eigensupport.experiments import (kite5_study, model_matrices, phase_study, recovery_study,
                                      rows_to_csv, rows_to_markdown, spectrum_csv, spectrum_table,
                                      summarize)
from eigensupport.graph_core import fifteen_vertex_benchmark, make_kite
from eigensupport.spectral_ops import SpectralFunction


def test_summarize_and_tables():
    rows = summarize({"l0": [0, 0, 2, 1], "l2": [0, 0, 0, 0]})
    assert rows[0].exact_rate == 0.5 and rows[0].mean_error == 0.75 and rows[1].exact_rate == 1.0
    csv_text = rows_to_csv(rows, {"n": 500})
    assert csv_text.splitlines() == ["n,algorithm,exact_rate,mean_error,replications",
                                     "500,l0,0.5000,0.7500,4", "500,l2,1.0000,0.0000,4"]
    md = rows_to_markdown(rows, "demo")
    assert md.startswith("### demo") and "| l0 | 50.0% | 0.750 | 4 |" in md


def test_normalizations():
    s = make_kite(5)
    w, k = model_matrices(s, SpectralFunction.exp())
    assert np.isclose(np.linalg.norm(w), 1.0)
    w1, _ = model_matrices(s, SpectralFunction.exp(), normalization="sum")
    assert np.isclose(w1.sum(), 1.0)
    assert np.allclose(w @ k, k @ w)


def test_study_is_deterministic_and_schedule_free():
    a = kite5_study(replications=3, seed=5, m_runs=4)
    b = kite5_study(replications=3, seed=5, m_runs=4, jobs=2)
    assert a[1] == b[1]
    assert [r.algorithm for r in a[0]] == ["l0", "l2", "backward", "bagging"]


def test_unknown_algorithm():
    with pytest.raises(InvalidArgument):
        recovery_study(make_kite(5), SpectralFunction.exp(), 100, 1, algorithms=("lasso",))


def test_large_sample_recovers_kite():
    _, errors, _ = kite5_study(replications=3, seed=1, n=100_000, algorithms=("l0", "l2", "backward"))
    assert all(e == 0 for errs in errors.values() for e in errs)


def test_spectrum():
    table, gaps = spectrum_table()
    assert table.shape == (15, 3)
    assert gaps["inv_square"] > gaps["exp"]
    text, _ = spectrum_csv()
    assert text.splitlines()[0] == "eigenvalue,exp,inv_square" and len(text.splitlines()) == 16
    assert fifteen_vertex_benchmark().n_vertices == 15


def test_phase_curve_rises():
    rep = phase_study(60, multipliers=(0.3, 1.0, 2.0, 3.0), trials=40, seed=0)
    freq = rep.di_frequency
    assert freq[0] <= 0.2 and freq[-1] >= 0.9
    assert all(b >= a - 0.15 for a, b in zip(freq, freq[1:]))
    assert math.isclose(rep.p_grid[1], math.log(60) / 60)
