import cmath
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpw_automl import netparams as npr
from cpw_automl import physics
from cpw_automl.extraction import synthesize_lines
from cpw_automl.fixture import LINE_LENGTHS_M, MEASURED, PRINTED_CPW
from cpw_automl.netparams import CascadeMatrix, TwoPortRecord

cplx = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)
nonzero = st.complex_numbers(min_magnitude=1e-3, max_magnitude=2.0, allow_nan=False, allow_infinity=False)


def cm(m, f=1e9):
    return CascadeMatrix.from_array(np.asarray(m, dtype=complex), f)


def test_s_to_m_direct_substitution():
    m = npr.s_to_m(TwoPortRecord(1e9, 0, 0.5, 0.5, 0))
    np.testing.assert_allclose(m.matrix(), [[0.5, 0], [0, 2]])


def test_s_to_m_ideal_line_is_diagonal():
    g, l = 0.3 + 40j, 0.02
    t = cmath.exp(-g * l)
    m = npr.s_to_m(TwoPortRecord(1e9, 0, t, t, 0)).matrix()
    np.testing.assert_allclose(m, [[t, 0], [0, 1 / t]], rtol=1e-15)


def test_singular_conversion_names_frequency():
    with pytest.raises(npr.SingularConversionError, match="2.5e\\+09"):
        npr.s_to_m(TwoPortRecord(2.5e9, 0.1, 0, 0, 0.1))


@given(cplx, nonzero, cplx)
def test_reciprocal_determinant_is_one(s11, s21, s22):
    m = npr.s_to_m(TwoPortRecord(1e9, s11, s21, s21, s22))
    assert abs(m.det() - 1) <= 1e-12 * max(1.0, abs(m.m11 * m.m22), abs(m.m12 * m.m21))


@given(cplx, cplx, nonzero, cplx)
def test_s_m_round_trip(s11, s12, s21, s22):
    rec = TwoPortRecord(3e9, s11, s12, s21, s22)
    back = npr.m_to_s(npr.s_to_m(rec))
    scale = 1 + abs(s11 * s22) / abs(s21)
    for a, b in zip((rec.s11, rec.s12, rec.s21, rec.s22), (back.s11, back.s12, back.s21, back.s22)):
        assert abs(a - b) <= 1e-12 * scale


def test_eig_pair_identity():
    eye = cm(np.eye(2))
    assert npr.eig_pair(eye, eye) == (1, 1)


def test_eig_pair_symmetric_example():
    lo, hi = npr.eig_pair(cm(np.eye(2)), cm([[2, 1], [1, 2]]))
    assert lo == pytest.approx(1.0, abs=1e-15) and hi == pytest.approx(3.0, abs=1e-15)


def test_eig_pair_ideal_lines():
    gdl = 0.05 + 1.2j
    mi = cm(np.diag([1.0, 1.0]))
    mj = cm(np.diag([cmath.exp(-gdl), cmath.exp(gdl)]))
    lo, hi = npr.eig_pair(mi, mj)
    assert abs(lo - cmath.exp(-gdl)) < 1e-12 and abs(hi - cmath.exp(gdl)) < 1e-12


@settings(max_examples=60)
@given(st.lists(cplx, min_size=4, max_size=4), st.lists(cplx, min_size=4, max_size=4))
def test_eig_trace_and_det(a, b):
    mi = cm(np.array(a).reshape(2, 2) + 3 * np.eye(2))
    mj = cm(np.array(b).reshape(2, 2))
    mm = npr.line_pair_matrix(mi, mj)
    lo, hi = npr.eig_pair(mi, mj)
    scale = 1 + np.abs(mm).max() ** 2
    assert abs(lo * hi - np.linalg.det(mm)) <= 1e-12 * scale
    assert abs(lo + hi - np.trace(mm)) <= 1e-12 * scale
    assert abs(lo) <= abs(hi)


def test_eig_pair_singular_mi():
    with pytest.raises(npr.SingularConversionError):
        npr.eig_pair(cm(np.zeros((2, 2))), cm(np.eye(2)))


def test_gamma_from_pair_real_log():
    g = npr.gamma_from_pair(cmath.exp(-0.1), 1.0)
    assert g.real == pytest.approx(0.1, rel=1e-15) and g.imag == 0


def test_gamma_from_pair_branch_follows_hint():
    total = 3 * math.pi / 2 + 4 * math.pi  # beyond the principal branch
    lam = cmath.exp(-(0.02 + 1j * total))
    assert npr.gamma_from_pair(lam, 1.0).imag == pytest.approx(-math.pi / 2)
    assert npr.gamma_from_pair(lam, 1.0, phase_hint=total + 0.4).imag == pytest.approx(total)


def test_gamma_from_pair_errors():
    with pytest.raises(ValueError):
        npr.gamma_from_pair(0, 1.0)
    with pytest.raises(ValueError):
        npr.gamma_from_pair(0.5, 0.0)


def _truth(freqs):
    a, b = physics.alpha_beta(PRINTED_CPW, MEASURED, freqs)
    return a + 1j * b


def test_two_line_round_trip():
    f = physics.band_grid(200)
    g = _truth(f)
    lines = [(l, npr.ideal_line_records(g, f, l)) for l in (LINE_LENGTHS_M[0], LINE_LENGTHS_M[-1])]
    got = npr.multiline_gamma(lines).gamma
    assert np.max(np.abs(got / g - 1)) <= 1e-10


def test_multiline_permutation_invariant():
    f = physics.band_grid(30)
    lines = synthesize_lines(PRINTED_CPW, MEASURED, f, noise=1e-3, seed=5)
    a = npr.multiline_gamma(lines).gamma
    b = npr.multiline_gamma(lines[::-1]).gamma
    c = npr.multiline_gamma([lines[i] for i in (3, 0, 5, 1, 4, 2)]).gamma
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, c)


def test_repeated_identical_pairs_average_to_single_pair():
    f = physics.band_grid(10)
    lines = synthesize_lines(PRINTED_CPW, MEASURED, f, noise=1e-3, seed=2)[:2]
    single = npr.multiline_gamma(lines).gamma
    # the same measurement presented at a duplicated length is not allowed, so compare
    # against the explicit pair estimate instead
    la, ra = lines[0]
    lb, rb = lines[1]
    for k in range(f.size):
        lam, _ = npr.eig_pair(npr.s_to_m(ra[k]), npr.s_to_m(rb[k]))
        hint = None if k == 0 else single[k - 1].imag * f[k] / f[k - 1] * (lb - la)
        assert npr.gamma_from_pair(lam, lb - la, hint) == pytest.approx(single[k], rel=1e-14)


def test_multiline_beats_every_single_pair_under_noise():
    f = physics.band_grid(20)
    g = _truth(f)
    pairs = list(itertools.combinations(range(6), 2))
    err_multi, err_pair = [], {p: [] for p in pairs}
    for seed in range(100):
        lines = synthesize_lines(PRINTED_CPW, MEASURED, f, noise=1e-3, seed=seed)
        err_multi.append(np.abs(npr.multiline_gamma(lines).gamma - g) ** 2)
        for p in pairs:
            est = npr.multiline_gamma([lines[p[0]], lines[p[1]]]).gamma
            err_pair[p].append(np.abs(est - g) ** 2)
    rms_multi = math.sqrt(np.mean(err_multi))
    assert all(rms_multi < math.sqrt(np.mean(v)) for v in err_pair.values())


def test_multiline_errors():
    f = physics.band_grid(5)
    g = _truth(f)
    a = (0.01, npr.ideal_line_records(g, f, 0.01))
    with pytest.raises(ValueError, match="at least two"):
        npr.multiline_gamma([a])
    with pytest.raises(ValueError, match="distinct"):
        npr.multiline_gamma([a, a])
    other = (0.02, npr.ideal_line_records(g[:4], f[:4], 0.02))
    with pytest.raises(ValueError, match="frequency grid"):
        npr.multiline_gamma([a, other])


def test_gamma_trace_real_part_non_negative():
    f = physics.band_grid(50)
    lines = synthesize_lines(PRINTED_CPW, MEASURED, f)
    assert np.all(npr.multiline_gamma(lines).alpha >= 0)


@pytest.mark.parametrize("l,r,a", [(1, 1, 1), (2, 4, 0.5)])
def test_dc_conductivity_trivial(l, r, a):
    assert npr.dc_conductivity(l, r, a) == 1.0


def test_dc_conductivity_fixture():
    length, area = 97.93e-3, 1.983e-3 * 2e-6
    # hand arithmetic: 0.09793 / (2.973e7 * 3.966e-9) = 0.830554... ohm
    r = 0.830554
    sigma = npr.dc_conductivity(length, r, area)
    assert sigma == length / (r * area)
    assert sigma == pytest.approx(2.973e7, rel=1e-6)


@pytest.mark.parametrize("args", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
def test_dc_conductivity_domain(args):
    with pytest.raises(ValueError):
        npr.dc_conductivity(*args)


def test_touchstone_ri(tmp_path):
    p = tmp_path / "a.s2p"
    p.write_text("! comment\n# HZ S RI R 50\n1e9 0.1 0.2 0.3 0.4 0.5 0.6 0.7 0.8 ! trailing\n")
    (rec,) = npr.read_touchstone(p)
    assert rec.frequency == 1e9
    assert (rec.s11, rec.s21, rec.s12, rec.s22) == (0.1 + 0.2j, 0.3 + 0.4j, 0.5 + 0.6j, 0.7 + 0.8j)


def test_touchstone_ma_ghz(tmp_path):
    p = tmp_path / "a.s2p"
    p.write_text("# GHZ S MA R 50\n2 0.5 90 1 -45 1 -45 0.5 180\n")
    (rec,) = npr.read_touchstone(p)
    assert rec.frequency == 2e9
    assert rec.s11 == pytest.approx(0.5j, abs=1e-15)
    assert rec.s21 == pytest.approx(cmath.rect(1, -math.pi / 4), abs=1e-15)
    assert rec.s22 == pytest.approx(-0.5, abs=1e-15)


def test_touchstone_db_and_default_options(tmp_path):
    p = tmp_path / "a.s2p"
    p.write_text("# MHZ S DB R 50\n100 -20 0 0 0 0 0 -6.0205999132796 0\n")
    (rec,) = npr.read_touchstone(p)
    assert rec.frequency == 100e6
    assert rec.s11 == pytest.approx(0.1) and rec.s22 == pytest.approx(0.5, rel=1e-9)
    q = tmp_path / "b.s2p"
    q.write_text("1 1 0 1 0 1 0 1 0\n")  # no option line: GHz, MA
    assert npr.read_touchstone(q)[0].frequency == 1e9


@pytest.mark.parametrize(
    "body,lineno",
    [
        ("# HZ S RI R 50\n1 0 0 0 0 0 0 0\n", 2),
        ("# HZ S RI R 50\n2 0 0 0 0 0 0 0 0\n1 0 0 0 0 0 0 0 0\n", 3),
        ("# HZ Q RI R 50\n", 1),
        ("# HZ Z RI R 50\n", 1),
        ("# HZ S RI R\n", 1),
        ("# HZ S RI R 50\n1 0 0 0 x 0 0 0 0\n", 2),
    ],
)
def test_touchstone_errors_carry_line_number(tmp_path, body, lineno):
    p = tmp_path / "bad.s2p"
    p.write_text(body)
    with pytest.raises(npr.TouchstoneError) as info:
        npr.read_touchstone(p)
    assert info.value.lineno == lineno
    assert f":{lineno}" in str(info.value)


def test_touchstone_round_trip(tmp_path):
    f = physics.band_grid(200)
    (length, recs), *_ = synthesize_lines(PRINTED_CPW, MEASURED, f, noise=1e-3, seed=9)
    p = tmp_path / "line.s2p"
    npr.write_touchstone(p, recs, comment="synthetic")
    back = npr.read_touchstone(p)
    assert len(back) == len(recs)
    for a, b in zip(recs, back):
        assert a.frequency == b.frequency
        for x, y in zip((a.s11, a.s12, a.s21, a.s22), (b.s11, b.s12, b.s21, b.s22)):
            assert abs(x - y) <= 1e-12


def test_gamma_csv_round_trip(tmp_path):
    f = physics.band_grid(17)
    tr = npr.GammaTrace(f, _truth(f))
    p = tmp_path / "g.csv"
    npr.gamma_to_csv(tr, p)
    back = npr.gamma_from_csv(p)
    np.testing.assert_array_equal(back.frequency, tr.frequency)
    np.testing.assert_array_equal(back.gamma, tr.gamma)


def test_gamma_trace_requires_increasing_frequency():
    with pytest.raises(ValueError):
        npr.GammaTrace(np.array([2.0, 1.0]), np.array([1j, 1j]))
