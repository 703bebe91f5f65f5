import math

import numpy as np
import pytest

from old3s.nn import ContractViolation
from old3s.stream import (
    DoublyStream,
    EvolutionMap,
    Instance,
    evolve_features,
    generate_blobs,
    load_csv,
    make_schedule,
    normalize_features,
    write_fixture_csv,
)


def test_load_csv_parses_fixture_exactly(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("a,b,label\n1.5,2.0,0\n-3.0,0.25,1\n0.0,1.0,0\n")
    X, y = load_csv(path, "label")
    assert np.array_equal(X, [[1.5, 2.0], [-3.0, 0.25], [0.0, 1.0]])
    assert np.array_equal(y, [0, 1, 0])


def test_load_csv_label_column_anywhere(tmp_path):
    path = tmp_path / "mid.csv"
    path.write_text("a,cls,b\n1.0,g,2.0\n3.0,h,4.0\n")
    X, y = load_csv(path, "cls")
    assert np.array_equal(X, [[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(y, [0, 1])  # sorted unique mapping g->0, h->1


def test_load_csv_gap_labels_are_compacted(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("a,label\n1.0,0\n2.0,2\n3.0,2\n")
    _, y = load_csv(path, "label")
    assert np.array_equal(y, [0, 1, 1])


def test_load_csv_errors(tmp_path):
    with pytest.raises(ContractViolation):
        load_csv(tmp_path / "missing.csv", "label")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,label\nx,0\n")
    with pytest.raises(ContractViolation):
        load_csv(bad, "label")
    nolabel = tmp_path / "nolabel.csv"
    nolabel.write_text("a,b\n1.0,2.0\n")
    with pytest.raises(ContractViolation):
        load_csv(nolabel, "label")


def test_normalize_constant_column_is_zeroed():
    X = np.array([[1.0, 5.0], [1.0, 7.0], [1.0, 9.0], [1.0, 11.0]])
    Xn, _, _ = normalize_features(X, 4)
    assert np.array_equal(Xn[:, 0], np.zeros(4))
    assert abs(Xn[:, 1].mean()) < 1e-12


def test_normalize_uses_head_rows_only():
    X = np.vstack([np.arange(10.0).reshape(5, 2), np.full((5, 2), 1e6)])
    a, mean_a, var_a = normalize_features(X, 5)
    X2 = X.copy()
    X2[5:] = -1e6  # changes outside the stat span must not change the stats
    b, mean_b, var_b = normalize_features(X2, 5)
    assert np.array_equal(mean_a, mean_b)
    assert np.array_equal(var_a, var_b)
    assert np.array_equal(a[:5], b[:5])


def test_evolve_zero_map_gives_half():
    emap = EvolutionMap(np.zeros((3, 4)), seed=0)
    assert np.array_equal(evolve_features(np.ones(3), emap), np.full(4, 0.5))


def test_evolve_hand_values():
    emap = EvolutionMap(np.array([[1.0]]), seed=0)
    assert evolve_features(np.array([0.0]), emap)[0] == 0.5
    out = evolve_features(np.array([math.log(3.0)]), emap)[0]
    assert math.isclose(out, 0.75, rel_tol=1e-12)


def test_evolve_output_dims_and_range():
    emap = EvolutionMap.generate(10, 30, seed=3)
    x2 = evolve_features(np.random.default_rng(0).standard_normal(10), emap)
    assert x2.shape == (30,)
    assert ((x2 > 0) & (x2 < 1)).all()


def test_make_schedule_arithmetic():
    s = make_schedule(100, (0.45, 0.10, 0.45))
    assert (s.t1_end, s.tb_end) == (45, 55)


def test_make_schedule_rejects_dominant_overlap():
    with pytest.raises(ContractViolation):
        make_schedule(10, (0.1, 0.8, 0.1))


def test_make_schedule_warns_on_large_overlap():
    with pytest.warns(UserWarning):
        make_schedule(100, (0.4, 0.25, 0.35))


def test_make_schedule_window_default_capped():
    assert make_schedule(100000).window == 1000
    assert make_schedule(500).window == 50


def test_make_schedule_rejects_bad_fractions():
    with pytest.raises(ContractViolation):
        make_schedule(100, (0.5, 0.5, 0.5))


def test_instance_field_presence_enforced():
    with pytest.raises(ContractViolation):
        Instance(t=1, phase="T1", y=0, x_s1=None, x_s2=None)
    with pytest.raises(ContractViolation):
        Instance(t=1, phase="T1", y=0, x_s1=np.zeros(2), x_s2=np.zeros(3))
    with pytest.raises(ContractViolation):
        Instance(t=1, phase="T2", y=0, x_s1=np.zeros(2), x_s2=np.zeros(3))
    Instance(t=1, phase="Tb", y=0, x_s1=np.zeros(2), x_s2=np.zeros(3))


def make_stream(n=200, seed=0, shuffle=True):
    X, y = generate_blobs(n, 4, 2, margin=2.0, seed=7)
    schedule = make_schedule(n, (0.45, 0.10, 0.45), window=20)
    return DoublyStream(X, y, schedule, d2=6, seed=seed, shuffle=shuffle)


def test_stream_phase_field_presence_everywhere():
    stream = make_stream()
    s = stream.schedule
    count = 0
    for inst in stream:
        count += 1
        if inst.t <= s.t1_end:
            assert inst.phase == "T1" and inst.x_s1 is not None and inst.x_s2 is None
        elif inst.t <= s.tb_end:
            assert inst.phase == "Tb" and inst.x_s1 is not None and inst.x_s2 is not None
        else:
            assert inst.phase == "T2" and inst.x_s1 is None and inst.x_s2 is not None
    assert count == s.n_total


def test_stream_boundary_rounds():
    stream = make_stream()
    s = stream.schedule
    by_t = {inst.t: inst for inst in stream}
    assert by_t[s.t1_end + 1].x_s1 is not None and by_t[s.t1_end + 1].x_s2 is not None
    assert by_t[s.tb_end + 1].x_s1 is None


def test_stream_regenerates_identically_from_seed():
    a, b = make_stream(seed=5), make_stream(seed=5)
    for ia, ib in zip(a, b):
        assert ia.t == ib.t and ia.y == ib.y and ia.phase == ib.phase
        if ia.x_s1 is not None:
            assert np.array_equal(ia.x_s1, ib.x_s1)
        if ia.x_s2 is not None:
            assert np.array_equal(ia.x_s2, ib.x_s2)


def test_stream_shuffle_depends_on_seed():
    a, b = make_stream(seed=1), make_stream(seed=2)
    assert not np.array_equal(a.labels, b.labels)


def test_stream_emitted_s2_matches_evolution_of_s1():
    stream = make_stream()
    for inst in stream:
        if inst.phase == "Tb":
            assert np.array_equal(inst.x_s2, evolve_features(inst.x_s1, stream.emap))


def test_stream_true_pair_matches_emission():
    stream = make_stream()
    for inst in stream:
        if inst.phase == "T2":
            x1, x2 = stream.true_pair(inst.t)
            assert np.array_equal(inst.x_s2, x2)
            assert x1.shape == (stream.d1,)


def test_generate_blobs_deterministic_and_separable():
    Xa, ya = generate_blobs(500, 3, 2, margin=8.0, seed=4)
    Xb, yb = generate_blobs(500, 3, 2, margin=8.0, seed=4)
    assert np.array_equal(Xa, Xb) and np.array_equal(ya, yb)
    # With an 8-sigma margin the blobs are essentially disjoint.
    mid = Xa[ya == 0].mean(axis=0) - Xa[ya == 1].mean(axis=0)
    assert np.linalg.norm(mid) > 6.0


def test_fixture_round_trip(tmp_path):
    X, y = generate_blobs(50, 4, 3, margin=2.0, seed=9)
    path = tmp_path / "fix.csv"
    write_fixture_csv(path, X, y)
    X2, y2 = load_csv(path, "label")
    assert np.array_equal(X, X2)
    assert np.array_equal(y, y2)


def test_fixture_bytes_deterministic(tmp_path):
    X, y = generate_blobs(20, 2, 2, margin=1.0, seed=3)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_fixture_csv(p1, X, y)
    write_fixture_csv(p2, X, y)
    assert p1.read_bytes() == p2.read_bytes()
