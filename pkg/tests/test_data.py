import numpy as np
import pytest

from tripledd.data import (
    PanelDataset,
    RcDataset,
    cell_counts_panel,
    cell_counts_rc,
    load_panel_csv,
    load_rc_csv,
    write_panel_csv,
    write_rc_csv,
)
from tripledd.errors import (
    EmptyFile,
    MissingColumn,
    NonBinaryIndicator,
    NonFiniteValue,
    ValidationError,
)

PANEL_MAP = {"g": "g", "d": "d", "y0": "y0", "y1": "y1"}
RC_MAP = {"g": "g", "d": "d", "t": "t", "y": "y"}


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_panel_basic(tmp_path):
    path = write(
        tmp_path,
        "x1,g,d,y0,y1\n0.1,0,0,1.0,2.0\n0.2,0,1,1.5,2.5\n0.3,1,0,0.5,1.0\n0.4,1,1,2.0,4.0\n",
    )
    data = load_panel_csv(path, PANEL_MAP)
    assert data.n == 4
    assert data.k == 1
    assert data.x[2, 0] == 0.3
    assert list(data.g) == [0, 0, 1, 1]


def test_load_panel_nonbinary_row_index(tmp_path):
    path = write(
        tmp_path,
        "x1,g,d,y0,y1\n0.1,0,1,1.0,2.0\n0.2,1,1,1.5,2.5\n0.3,2,0,0.5,1.0\n",
    )
    with pytest.raises(NonBinaryIndicator) as err:
        load_panel_csv(path, PANEL_MAP)
    assert err.value.row == 3


def test_load_panel_requires_treated_cell(tmp_path):
    path = write(tmp_path, "x1,g,d,y0,y1\n0.1,0,1,1.0,2.0\n0.2,1,0,1.5,2.5\n")
    with pytest.raises(ValidationError, match="positivity"):
        load_panel_csv(path, PANEL_MAP)


def test_load_panel_missing_column(tmp_path):
    path = write(tmp_path, "x1,g,d,y0\n0.1,0,1,1.0\n")
    with pytest.raises(MissingColumn):
        load_panel_csv(path, PANEL_MAP)


def test_load_panel_non_finite(tmp_path):
    path = write(tmp_path, "x1,g,d,y0,y1\nnan,1,1,1.0,2.0\n")
    with pytest.raises(NonFiniteValue) as err:
        load_panel_csv(path, PANEL_MAP)
    assert err.value.row == 1


def test_load_panel_empty(tmp_path):
    with pytest.raises(EmptyFile):
        load_panel_csv(write(tmp_path, ""), PANEL_MAP)
    with pytest.raises(EmptyFile):
        load_panel_csv(write(tmp_path, "x1,g,d,y0,y1\n", name="h.csv"), PANEL_MAP)


def test_load_panel_explicit_covariates(tmp_path):
    path = write(
        tmp_path,
        "a,b,g,d,y0,y1\n0.1,9,1,1,1.0,2.0\n0.2,8,0,0,1.0,2.0\n",
    )
    data = load_panel_csv(path, dict(PANEL_MAP, x=["a"]))
    assert data.k == 1
    assert data.x[0, 0] == 0.1


def test_load_rc_covers_cells(tmp_path):
    rows = ["x1,g,d,t,y"]
    for g in (0, 1):
        for d in (0, 1):
            for t in (0, 1):
                rows.append(f"0.5,{g},{d},{t},{g + d + t}")
    data = load_rc_csv(write(tmp_path, "\n".join(rows) + "\n"), RC_MAP)
    assert data.n == 8
    assert cell_counts_rc(data).has_empty is False


def test_load_rc_missing_t(tmp_path):
    path = write(tmp_path, "x1,g,d,y\n0.1,1,1,2.0\n")
    with pytest.raises(MissingColumn) as err:
        load_rc_csv(path, RC_MAP)
    assert err.value.column == "t"


def test_load_rc_negative_indicator(tmp_path):
    path = write(tmp_path, "x1,g,d,t,y\n0.1,1,1,-1,2.0\n")
    with pytest.raises(NonBinaryIndicator):
        load_rc_csv(path, RC_MAP)


def test_cell_counts_panel_one_per_cell():
    data = PanelDataset(
        x=np.zeros((4, 1)),
        g=[0, 0, 1, 1],
        d=[0, 1, 0, 1],
        y0=np.zeros(4),
        y1=np.ones(4),
    )
    counts = cell_counts_panel(data)
    assert all(c == 1 for c in counts.counts.values())
    assert counts.n == 4
    assert not counts.has_empty


def test_cell_counts_all_treated_flags_empty():
    data = PanelDataset(
        x=np.zeros((3, 1)),
        g=[1, 1, 1],
        d=[1, 1, 1],
        y0=np.zeros(3),
        y1=np.ones(3),
    )
    counts = cell_counts_panel(data)
    assert counts.counts[(1, 1)] == 3
    assert counts.counts[(0, 0)] == 0
    assert counts.has_empty
    assert (0, 0) in counts.empty_cells


def test_datasets_are_immutable():
    data = PanelDataset(
        x=np.zeros((2, 1)), g=[0, 1], d=[1, 1], y0=[0.0, 0.0], y1=[1.0, 1.0]
    )
    with pytest.raises(ValueError):
        data.g[0] = 1


def test_panel_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(3)
    n = 37
    data = PanelDataset(
        x=rng.standard_normal((n, 3)),
        g=rng.integers(0, 2, n),
        d=np.ones(n, dtype=int),
        y0=rng.standard_normal(n) * 1e3,
        y1=rng.standard_normal(n) * 1e-3,
    )
    path = tmp_path / "round.csv"
    write_panel_csv(data, path)
    back = load_panel_csv(path, PANEL_MAP)
    assert np.array_equal(back.g, data.g)
    assert np.array_equal(back.d, data.d)
    np.testing.assert_allclose(back.x, data.x, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.y0, data.y0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.y1, data.y1, rtol=0, atol=1e-12)


def test_rc_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(4)
    n = 24
    t = rng.integers(0, 2, n)
    g = rng.integers(0, 2, n)
    d = np.ones(n, dtype=int)
    g[0] = d[0] = t[0] = 1
    data = RcDataset(x=rng.standard_normal((n, 2)), g=g, d=d, t=t, y=rng.standard_normal(n))
    path = tmp_path / "round.csv"
    write_rc_csv(data, path)
    back = load_rc_csv(path, RC_MAP)
    assert np.array_equal(back.t, data.t)
    np.testing.assert_allclose(back.y, data.y, rtol=0, atol=1e-12)


def test_cell_counts_total_matches_n():
    rng = np.random.default_rng(9)
    n = 55
    g = rng.integers(0, 2, n)
    d = rng.integers(0, 2, n)
    g[0] = d[0] = 1
    data = PanelDataset(x=np.zeros((n, 1)), g=g, d=d, y0=np.zeros(n), y1=np.ones(n))
    assert cell_counts_panel(data).n == n
