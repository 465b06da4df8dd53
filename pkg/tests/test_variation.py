import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spde_hfvol import constants as K
from spde_hfvol.errors import DegenerateDenominator, SpecMismatch, TooFewIncrements
from spde_hfvol.model import ModelParams, MultipowerSpec, ObservedPath, SamplingScheme
from spde_hfvol.simulate import SeedSpec, derive_stream, simulate_exact_stationary, stationary_increments
from spde_hfvol.variation import increments, variation, variation_ratio_cof


def path_from_increments(inc, delta=0.1):
    inc = np.asarray(inc, dtype=float)
    if inc.ndim == 1:
        inc = inc[:, None]
    levels = np.vstack([np.zeros((1, inc.shape[1])), np.cumsum(inc, axis=0)])
    n = inc.shape[0]
    sites = tuple(float(j) for j in range(inc.shape[1]))
    return ObservedPath(SamplingScheme(delta, n * delta, sites), levels)


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
incs = arrays(np.float64, st.tuples(st.integers(3, 40), st.integers(1, 3)), elements=finite)


def test_increments_examples():
    p = ObservedPath(SamplingScheme(0.5, 1.0), np.array([0.0, 1.0, 3.0]))
    np.testing.assert_array_equal(increments(p)[:, 0], [1.0, 2.0])
    flat = ObservedPath(SamplingScheme(0.5, 1.0), np.full(3, 4.2))
    assert not np.any(increments(flat))


def test_variation_examples():
    p = path_from_increments([1.0, -1.0, 2.0])
    assert variation(p, MultipowerSpec.power(2)).per_site[0] == pytest.approx(0.6, rel=1e-14)
    assert variation(p, MultipowerSpec.signed([1, 1])).per_site[0] == pytest.approx(-0.3, rel=1e-14)
    cs = variation(p, MultipowerSpec.corr_sum()).per_site[0]
    assert cs == pytest.approx(0.1 * ((1 * -1 + 1) + (-1 * 2 + 1)), rel=1e-14)
    so = variation(p, MultipowerSpec.second_order(2)).per_site[0]
    assert so == pytest.approx(0.1 * (0 + 1), rel=1e-14)


def test_variation_lln_exact():
    p = ModelParams.white()
    d = 2.0**-14
    path = simulate_exact_stationary(p, SamplingScheme(d, 1.0), 1.0, SeedSpec(12, 0))
    v = variation(path, MultipowerSpec.power(2), math.sqrt(K.tau_sq_exact(p, d))).per_site[0]
    assert abs(v - 1.0) < 0.02


def test_variation_errors():
    p = path_from_increments([1.0, 2.0, 3.0])
    with pytest.raises(SpecMismatch):
        variation(p, MultipowerSpec.power(2, 2))
    with pytest.raises(SpecMismatch):
        variation(p, MultipowerSpec.power(2), normalizer=0.0)
    with pytest.raises(TooFewIncrements):
        variation(p, MultipowerSpec.multipower([1, 1, 1, 1]))


@given(incs, st.floats(0.01, 100), st.sampled_from([0.5, 1.0, 2.0, 3.0, 4.0]))
def test_homogeneity(inc, c, w):
    p = path_from_increments(inc)
    spec = MultipowerSpec.power(w, inc.shape[1])
    a = variation(p.scaled(c), spec).per_site
    b = variation(p, spec).per_site
    np.testing.assert_allclose(a, c**w * b, rtol=1e-12, atol=1e-300)


@given(incs, st.floats(0.01, 100))
def test_normalizer_algebra(inc, tau):
    p = path_from_increments(inc)
    for spec in (MultipowerSpec.multipower([1, 2], inc.shape[1]), MultipowerSpec.signed([1, 1], inc.shape[1])):
        a = variation(p, spec, tau).per_site
        b = variation(p, spec, 1.0).per_site / tau ** spec.total_weights
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max() + 1e-300)


@given(incs)
def test_even_signed_equals_absolute(inc):
    p = path_from_increments(inc)
    n = inc.shape[1]
    for w in ([2, 2], [4, 0], [2, 4]):
        a = variation(p, MultipowerSpec.signed(w, n)).per_site
        b = variation(p, MultipowerSpec.multipower(w, n)).per_site
        np.testing.assert_allclose(a, b, rtol=1e-12)


@given(incs, st.sampled_from([0.5, 1.0, 2.0]))
def test_partial_sums(inc, w):
    p = path_from_increments(inc)
    spec = MultipowerSpec.multipower([w, w], inc.shape[1])
    res = variation(p, spec, with_partial=True)
    assert res.partial.shape == (inc.shape[0] - 1, inc.shape[1])
    assert np.all(np.diff(res.partial, axis=0) >= 0)
    np.testing.assert_allclose(res.partial[-1], res.per_site, rtol=1e-12)
    assert np.all(res.per_site >= 0)


def test_zero_power_convention():
    p = path_from_increments([0.0, 1.0, 0.0])
    assert variation(p, MultipowerSpec.power(0.5)).per_site[0] == pytest.approx(0.1)


def test_exact_cumsum_roundtrip():
    p = ModelParams.white()
    d = 2.0**-10
    draws = stationary_increments(p, d, 1024, derive_stream(SeedSpec(1, 0)))
    path = simulate_exact_stationary(p, SamplingScheme(d, 1.0), 1.0, SeedSpec(1, 0))
    # differencing a cumulative sum reproduces the draws up to rounding of the running total
    tol = 4 * np.finfo(float).eps * np.abs(path.levels).max()
    assert np.max(np.abs(increments(path)[:, 0] - draws)) <= tol


def test_ratio_cof():
    p = path_from_increments([1.0, -1.0, 2.0, 0.5])
    num = abs(0.0) ** 2 + 1.0**2 + 2.5**2
    den = 1 + 1 + 4 + 0.25
    assert variation_ratio_cof(p, 2)[0] == pytest.approx(num / den)
    with pytest.raises(DegenerateDenominator):
        variation_ratio_cof(path_from_increments([0.0, 0.0, 0.0]), 2)


@given(incs.filter(lambda a: np.all(np.abs(a).sum(axis=0) > 1e-3)), st.floats(0.01, 100), st.sampled_from([1.0, 2.0, 4.0]))
def test_ratio_scale_free(inc, c, p_):
    p = path_from_increments(inc)
    np.testing.assert_allclose(variation_ratio_cof(p.scaled(c), p_), variation_ratio_cof(p, p_), rtol=1e-12)
