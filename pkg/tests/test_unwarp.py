import numpy as np
import pytest

from otsdc.phantom import PhantomSpec, distort, make_pair, make_phantom
from otsdc.pipeline import correct
from otsdc.spectral import DisplacementField
from otsdc.unwarp import apply_correction, pe_gradient
from otsdc.volume import EpiPair, Volume


def field_along(profile, shape=(20, 4, 3), pe_axis=0):
    n = shape[pe_axis]
    prof = np.asarray(profile(np.arange(n, dtype=float)))
    other = tuple(s for i, s in enumerate(shape) if i != pe_axis)
    u = np.moveaxis(np.broadcast_to(prof, other + (n,)), -1, pe_axis)
    return DisplacementField(u.copy(), True, pe_axis=pe_axis)


@pytest.mark.parametrize("pe_axis", [0, 1, 2])
def test_gradient_linear(pe_axis):
    shape = [5, 6, 7]
    shape[pe_axis] = 20
    g = pe_gradient(field_along(lambda t: 0.1 * t + 3, tuple(shape), pe_axis))
    np.testing.assert_allclose(g, 0.1, atol=1e-12)


def test_gradient_constant():
    np.testing.assert_array_equal(pe_gradient(field_along(lambda t: 0 * t + 2.5)), 0)


def test_gradient_sine_second_order():
    w = 2 * np.pi / 20
    f = field_along(lambda t: np.sin(w * t), shape=(40, 2, 2))
    g = pe_gradient(f)[1:-1, 0, 0]
    t = np.arange(1, 39)
    # Finite-difference oracle at half the step is twice as close.
    half = (np.sin(w * (t + 0.5)) - np.sin(w * (t - 0.5)))
    exact = w * np.cos(w * t)
    err_full = np.abs(g - exact).max()
    err_half = np.abs(half - exact).max()
    assert err_full <= w ** 3 / 6 + 1e-12
    assert err_half == pytest.approx(err_full / 4, rel=0.05)


def test_gradient_short_axis():
    with pytest.raises(ValueError):
        pe_gradient(DisplacementField(np.zeros((2, 4, 4)), True))


def test_zero_field_identity():
    rng = np.random.default_rng(0)
    pair = EpiPair(Volume(rng.random((12, 5, 4))), Volume(rng.random((12, 5, 4))))
    res = apply_correction(pair, DisplacementField(np.zeros((12, 5, 4)), True))
    np.testing.assert_array_equal(res.corrected_plus.data, pair.plus.data)
    np.testing.assert_array_equal(res.corrected_minus.data, pair.minus.data)


def test_constant_shift_translation():
    rng = np.random.default_rng(1)
    n = 30
    I0 = np.zeros((n, 4, 3))
    I0[8:22] = rng.random((14, 4, 3)) + 1
    plus = np.roll(I0, -2, axis=0)    # I+(y) = I0(y + 2)
    minus = np.roll(I0, 2, axis=0)
    f = DisplacementField(np.full(I0.shape, 2.0), True)
    res = apply_correction(EpiPair(Volume(plus), Volume(minus)), f)
    np.testing.assert_allclose(res.corrected_plus.data[2:-2], I0[2:-2], atol=1e-12)
    np.testing.assert_allclose(res.corrected_minus.data[2:-2], I0[2:-2], atol=1e-12)


def test_constant_shift_matches_forward_model():
    spec = PhantomSpec(dims=(32, 24, 16), field_amplitude=0.0)
    I0, _ = make_phantom(spec)
    u = DisplacementField(np.full(I0.dims, 2.0), True)
    plus, minus = distort(I0, u, +1), distort(I0, u, -1)
    res = apply_correction(EpiPair(plus, minus), u)
    interior = slice(2, -2)
    np.testing.assert_allclose(res.corrected_plus.data[interior], I0.data[interior], atol=1e-9)


def test_invariants_and_swap_symmetry():
    spec = PhantomSpec(dims=(32, 28, 20), seed=3)
    _, u, pair = make_pair(spec)
    res = apply_correction(pair, u)
    np.testing.assert_allclose(res.jacobian_plus + res.jacobian_minus, 2.0)
    np.testing.assert_array_equal(res.corrected_avg.data,
                                  0.5 * (res.corrected_plus.data + res.corrected_minus.data))
    assert np.all(res.corrected_plus.data >= 0)
    neg = DisplacementField(-u.u, u.validity, pe_axis=u.pe_axis)
    swapped = apply_correction(EpiPair(pair.minus, pair.plus), neg)
    np.testing.assert_array_equal(swapped.corrected_plus.data, res.corrected_minus.data)
    np.testing.assert_array_equal(swapped.corrected_minus.data, res.corrected_plus.data)


def test_dims_mismatch():
    pair = EpiPair(Volume(np.ones((8, 4, 4))), Volume(np.ones((8, 4, 4))))
    with pytest.raises(ValueError):
        apply_correction(pair, DisplacementField(np.zeros((8, 4, 3)), True))


def test_gradient_clamp_counted():
    pair = EpiPair(Volume(np.ones((10, 2, 2))), Volume(np.ones((10, 2, 2))))
    f = field_along(lambda t: 1.5 * t, shape=(10, 2, 2))
    res = apply_correction(pair, f)
    assert res.diagnostics["gradient_clamped"] == f.u.size
    assert np.all(np.isfinite(res.corrected_minus.data))


@pytest.mark.parametrize("seed", [0, 4])
def test_mass_sanity(seed):
    _, u, pair = make_pair(PhantomSpec(dims=(48, 40, 24), seed=seed))
    res = apply_correction(pair, u)
    assert res.corrected_plus.data.sum() == pytest.approx(pair.plus.data.sum(), rel=0.02)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_first_order_consistency(seed):
    I0, u, pair = make_pair(PhantomSpec(dims=(48, 40, 24), seed=seed))
    assert np.abs(u.u).max() <= 3 and np.abs(pe_gradient(u)).max() <= 0.3
    res = apply_correction(pair, u)
    scale = np.sqrt(np.mean(I0.data ** 2))
    before = np.sqrt(np.mean((pair.plus.data - pair.minus.data) ** 2)) / scale
    after = np.sqrt(np.mean((res.corrected_plus.data - res.corrected_minus.data) ** 2)) / scale
    assert after <= 0.5 * before


def test_pipeline_recovers_phantom():
    I0, u, pair = make_pair(PhantomSpec(dims=(48, 48, 32), seed=1))
    res = correct(pair)
    support = I0.data > 0.1 * I0.data.max()
    err = res.corrected_avg.data - I0.data
    assert np.sqrt(np.mean(err[support] ** 2)) <= 0.03 * np.sqrt(np.mean(I0.data[support] ** 2))
