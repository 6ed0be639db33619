import numpy as np
import pytest

from l1indep.calibration import (NullTable, mc_null_table, permutation_pvalue, permutation_test, permutations,
                                 pvalue_from_table)
from l1indep.errors import InvalidInput, NullTableFormatError
from l1indep.partition import PairedSample
from l1indep.statistics import STATISTICS
from l1indep.synthgen import AlternativeSpec, sample


def test_constant_statistic_gives_p_one():
    smp = PairedSample(np.ones(20), np.arange(20.0))
    for sid in ("gamma", "b2_one", "tau", "vn"):
        assert permutation_pvalue(smp, sid, B=199, seed=1).p_value == 1.0


def test_dominant_observation_gives_floor():
    x = np.arange(30.0)
    rep = permutation_pvalue(PairedSample(x, x), "tau", B=199, seed=2)
    assert rep.observed == 1.0
    assert rep.p_value == 1 / 200


def test_report_fields():
    smp = sample(AlternativeSpec(), 40, seed=1)
    rep = permutation_pvalue(smp, "vn", B=99, seed=5)
    assert rep.method == "permutation" and rep.replicates == 99 and rep.seed == 5
    assert rep.partition is not None and rep.partition["d"] == 1
    assert 1 / 100 <= rep.p_value <= 1.0
    assert permutation_pvalue(smp, "tau", B=99, seed=5).partition is None


def test_permutation_determinism_and_threads():
    smp = sample(AlternativeSpec("fgm", 0.3), 60, seed=8)
    ids = list(STATISTICS)
    a = [r.to_dict() for r in permutation_test(smp, ids, B=2500, seed=4, threads=1)]
    b = [r.to_dict() for r in permutation_test(smp, ids, B=2500, seed=4, threads=3)]
    assert a == b


def test_permutation_streams_are_addressed_by_index():
    p = permutations(10, 1500, seed=3)
    q = permutations(10, 1200, seed=3)
    assert np.array_equal(p[:1200], q)


def test_permutation_rejects_small_B():
    with pytest.raises(InvalidInput):
        permutation_pvalue(sample(AlternativeSpec(), 10, 1), "vn", B=50)


def test_strong_dependence_hits_floor():
    alt = AlternativeSpec("gaussian_copula", 0.8)
    floors = sum(permutation_pvalue(sample(alt, 200, seed=s), "vn", B=999, seed=s).p_value == 1 / 1000
                 for s in range(100))
    assert floors >= 95


def test_null_table_shape_and_sorting():
    for sid in STATISTICS:
        t = mc_null_table(sid, 12, 100, seed=1)
        assert t.N == 100
        assert np.all(np.diff(t.draws) >= 0)


def test_tau_null_table_centered():
    t = mc_null_table("tau", 10, 10_000, seed=7)
    sd = t.draws.std(ddof=1)
    assert abs(t.draws.mean()) < 3 * sd / np.sqrt(t.N)


def test_null_table_determinism(tmp_path):
    a = mc_null_table("vn", 30, 2500, seed=9)
    b = mc_null_table("vn", 30, 2500, seed=9, threads=2)
    assert a.to_bytes() == b.to_bytes()
    c = mc_null_table("vn", 30, 2500, seed=10)
    assert a.to_bytes() != c.to_bytes()


def test_null_table_rejects_bad_arguments():
    with pytest.raises(InvalidInput):
        mc_null_table("vn", 10, 99)
    with pytest.raises(InvalidInput):
        mc_null_table("vn", 10, 100, generator=AlternativeSpec("fgm", 0.5))


def test_null_table_roundtrip(tmp_path):
    t = mc_null_table("b1_sin", 15, 300, seed=2)
    path = tmp_path / "t.l1nt"
    t.write(path)
    back = NullTable.read(path)
    assert back.header() == t.header()
    assert np.array_equal(back.draws, t.draws)
    raw = path.read_bytes()
    head_len = int.from_bytes(raw[10:14], "little")
    assert len(raw) == 14 + head_len + 8 * back.N


def test_null_table_format_errors(tmp_path):
    blob = bytearray(mc_null_table("vn", 10, 100, seed=1).to_bytes())
    bad_version = bytearray(blob)
    bad_version[8] = 7
    with pytest.raises(NullTableFormatError, match="format version 7"):
        NullTable.from_bytes(bytes(bad_version))
    bad_header = bytearray(blob)
    bad_header[15] = 0xFF
    with pytest.raises(NullTableFormatError, match="format version"):
        NullTable.from_bytes(bytes(bad_header))
    with pytest.raises(NullTableFormatError):
        NullTable.from_bytes(b"garbage")
    with pytest.raises(NullTableFormatError, match="declares N"):
        NullTable.from_bytes(bytes(blob[:-8]))


def test_null_table_csv(tmp_path):
    t = mc_null_table("tn", 8, 100, seed=1)
    t.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "rank,value" and len(lines) == 101
    assert float(lines[-1].split(",")[1]) == t.draws[-1]


def test_pvalue_from_table_rules():
    table = NullTable("x", 5, np.arange(1.0, 102.0), "g", 0)  # N = 101, odd
    assert pvalue_from_table(0.0, table) == 1.0
    assert pvalue_from_table(1000.0, table) == 1 / 102
    median = np.median(table.draws)
    assert pvalue_from_table(median, table) == (1 + 51) / 102
    obs = np.linspace(-5, 110, 300)
    p = pvalue_from_table(obs, table)
    assert np.all(np.diff(p) <= 0)


def test_pvalue_from_empty_table():
    with pytest.raises(InvalidInput):
        pvalue_from_table(1.0, np.array([]))
