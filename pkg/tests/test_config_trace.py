import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vqpd.cli import RunConfig
from vqpd.config import ConfigError, load_problem, problem_from_dict, problem_to_dict, save_problem
from vqpd.instances import gen_ball1, gen_constrained_lasso, gen_gmv_l1, gen_gmv_l2, gen_qp1
from vqpd.solvers import TRACE_COLUMNS, IterationRecord, SolverConfig, run
from vqpd.trace import format_trace, parse_trace, read_trace, write_trace

SPECS = [
    lambda: gen_qp1()[0],
    lambda: gen_ball1(n=3, seed=1)[0],
    lambda: gen_gmv_l2(5, 2, equality=True),
    lambda: gen_gmv_l1(5, 2, b=2.0),
    lambda: gen_constrained_lasso(9, 4, 1),
    lambda: gen_constrained_lasso(9, 4, 1, bound=None),
]


def same_problem(a, b, points=20):
    assert a.n == b.n and a.m == b.m
    assert a.box.lower.tobytes() == b.box.lower.tobytes()
    assert a.box.upper.tobytes() == b.box.upper.tobytes()
    assert (a.beta, a.C, a.R) == (b.beta, b.C, b.R)
    np.testing.assert_array_equal(a.equality_mask, b.equality_mask)
    np.testing.assert_array_equal(a.L_g, b.L_g)
    assert a.L_f == b.L_f
    rng = np.random.default_rng(1)
    lo, hi = np.maximum(a.box.lower, -2), np.minimum(a.box.upper, 2)
    for _ in range(points):
        x = lo + (hi - lo) * rng.random(a.n)
        assert a.F(x) == b.F(x)
        assert a.G(x).tobytes() == b.G(x).tobytes()


@pytest.mark.parametrize("make", SPECS)
@pytest.mark.parametrize("csv", [True, False])
def test_problem_roundtrip(make, csv, tmp_path):
    spec = make()
    path = tmp_path / "p.json"
    save_problem(spec, path, csv=csv)
    back = load_problem(path)
    same_problem(spec, back)
    wrote_csv = any(p.suffix == ".csv" for p in tmp_path.iterdir())
    assert wrote_csv == ('"csv"' in path.read_text())
    if not csv:
        assert not wrote_csv


def test_inline_dict_example():
    d = {
        "n": 2, "box": {"lower": -1, "upper": [1, 2]}, "beta": 1.5,
        "objective": {"kind": "quadratic-form", "matrix": [[1, 0], [0, 1]], "l1": 0.1},
        "constraints": [
            {"kind": "linear", "a": [-1, -1], "offset": 1},
            {"kind": "l2-ball", "bound": 0.5},
            {"kind": "l1", "weight": 1.0, "bound": 2.0},
        ],
    }
    spec = problem_from_dict(d)
    x = np.array([0.3, -0.4])
    # 0.5 x'Px convention is not assumed: check against the documented forms directly
    assert spec.F(x) == pytest.approx(x @ x + 0.1 * np.abs(x).sum())
    np.testing.assert_allclose(spec.G(x), [-x.sum() + 1, x @ x - 0.5, np.abs(x).sum() - 2.0])
    np.testing.assert_array_equal(spec.box.upper, [1, 2])
    assert (spec.C, spec.R) == (None, None)


@pytest.mark.parametrize("bad", [
    "[1, 2]",
    "{not json",
    json.dumps({"box": {}, "beta": 1, "objective": {"kind": "linear", "a": [1]}}),
    json.dumps({"n": 1, "beta": 1, "objective": {"kind": "cubic"}}),
    json.dumps({"n": 1, "beta": 1, "objective": {"kind": "linear", "a": [1]}, "constraints": [{"kind": "ring"}]}),
    json.dumps({"n": 1, "beta": 1, "objective": {"kind": "quadratic-form", "matrix": {"csv": "nope.csv"}}}),
    json.dumps({"n": 1, "beta": 1, "objective": {"kind": "linear", "a": ["x"]}}),
])
def test_bad_problem_configs(bad, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(bad)
    with pytest.raises(ConfigError):
        load_problem(p)


def test_missing_problem_file(tmp_path):
    with pytest.raises(ConfigError):
        load_problem(tmp_path / "absent.json")


# ---------------------------------------------------------------------------
# run configs


@given(
    alg=st.sampled_from(["new-constant", "new-adaptive", "yu-neely", "pd-subgradient"]),
    alpha=st.one_of(st.none(), st.floats(0.1, 1e6)),
    iters=st.integers(1, 10**7), stride=st.integers(1, 1000),
    diag=st.booleans(), seed=st.one_of(st.none(), st.integers(0, 2**63 - 1)),
)
def test_run_config_roundtrip(alg, alpha, iters, stride, diag, seed):
    c = RunConfig("gmv-l2:n=5", alg, alpha, iters, stride, diag, seed, "out", False, None, 3.5)
    assert RunConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c


def test_run_config_file(tmp_path):
    c = RunConfig("qp1", "new-adaptive", iters=50)
    p = tmp_path / "run.json"
    p.write_text(json.dumps(c.to_dict()))
    assert RunConfig.load(p) == c


@pytest.mark.parametrize("d", [
    {"instance": "qp1", "algorithm": "newton"},
    {"instance": "qp1", "iters": 0},
    {"instance": "qp1", "stride": 0},
    {"instance": "qp1", "colour": "red"},
    {"algorithm": "new-constant"},
    [],
])
def test_run_config_rejects(d):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d)


def test_solver_config_rejects_unknown():
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"max_iters": 3, "speed": "fast"})
    c = SolverConfig(max_iters=7, alpha=3.0)
    assert SolverConfig.from_dict(c.to_dict()) == c


# ---------------------------------------------------------------------------
# traces


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(st.integers(0, 10**9), finite, finite, finite, finite, finite, finite,
                          st.integers(0, 2**62)), max_size=30))
def test_trace_roundtrip_exact(rows):
    recs = [IterationRecord(*r) for r in rows]
    text = format_trace(recs)
    back = parse_trace(text)
    assert len(back) == len(recs)
    for a, b in zip(recs, back):
        assert a.as_row() == b.as_row()
        for u, v in zip(a.as_row(), b.as_row()):
            assert np.float64(u).tobytes() == np.float64(v).tobytes() or u == v
    assert format_trace(back) == text


def test_trace_header_and_line_endings(tmp_path):
    spec, _ = gen_qp1()
    r = run(spec, "new-constant", SolverConfig(max_iters=20, stride=5))
    p = tmp_path / "t.csv"
    write_trace(p, r.trace)
    raw = p.read_bytes()
    assert b"\r" not in raw
    assert raw.split(b"\n", 1)[0].decode() == ",".join(TRACE_COLUMNS)
    assert TRACE_COLUMNS == ("t", "F_x", "F_xbar", "max_violation_xbar", "queue_norm", "alpha_t", "drift", "wall_time_ns")
    assert read_trace(p) == list(r.trace)


def test_stride_row_count():
    spec, _ = gen_qp1()
    r = run(spec, "new-constant", SolverConfig(max_iters=10_000, stride=100))
    ts = [rec.t for rec in r.trace]
    assert len(ts) == 101
    assert ts == list(range(0, 10_001, 100))


def test_partial_last_stride_is_recorded():
    spec, _ = gen_qp1()
    r = run(spec, "new-constant", SolverConfig(max_iters=250, stride=100))
    assert [rec.t for rec in r.trace][-1] == 250


@pytest.mark.parametrize("text", ["", "a,b\n1,2\n", ",".join(TRACE_COLUMNS) + "\n1,2\n"])
def test_bad_traces(text):
    with pytest.raises(ValueError):
        parse_trace(text)
