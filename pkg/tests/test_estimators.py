import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from spde_hfvol import constants as K
from spde_hfvol import estimators as E
from spde_hfvol.errors import CltHypothesisWarning, RatioOutOfDomain
from spde_hfvol.model import ModelParams, MultipowerSpec, ObservedPath, SamplingScheme
from spde_hfvol.simulate import SeedSpec, simulate_exact_stationary


def path_from_increments(inc, delta=0.1):
    inc = np.asarray(inc, dtype=float)
    if inc.ndim == 1:
        inc = inc[:, None]
    levels = np.vstack([np.zeros((1, inc.shape[1])), np.cumsum(inc, axis=0)])
    sites = tuple(float(j) for j in range(inc.shape[1]))
    return ObservedPath(SamplingScheme(delta, inc.shape[0] * delta, sites), levels)


def exact_path(alpha=1.0, delta=2.0**-14, sigma=1.0, seed=7, rep=0, dim=None):
    dim = dim or (1 if alpha < 1 or alpha == 1 else 2)
    params = ModelParams(1.0, 1.0, alpha, dim)
    site = 0.0 if dim == 1 else (0.0,) * dim
    return params, simulate_exact_stationary(params, SamplingScheme(delta, 1.0, (site,)), sigma, SeedSpec(seed, rep))


@pytest.fixture(scope="module")
def white():
    return exact_path(1.0)


def test_corr_transform_fixed_point():
    assert E.corr_transform(2 ** -0.5 - 1) == pytest.approx(1.0, abs=1e-14)
    assert E.corr_transform(-0.2928932) == pytest.approx(1.0, abs=1e-6)
    for a in (0.25, 0.5, 1.5, 1.9):
        assert E.corr_transform(2 ** (-a / 2) - 1) == pytest.approx(a, abs=1e-13)


def test_corr_forced_ratio():
    # lag-one signed bipower -0.3 over quadratic variation 0.6
    est = E.estimate_alpha_corr(path_from_increments([1.0, -1.0, 2.0]))
    assert est.estimate == pytest.approx(2.0, abs=1e-13)


def test_cof_matches_hand_computation():
    x = np.array([1.0, 2.0, -1.0, 0.5, 3.0])
    num = sum((x[i] + x[i + 1]) ** 2 for i in range(len(x) - 1))
    den = float(np.sum(x**2))
    est = E.estimate_alpha_cof(path_from_increments(x), 2)
    assert est.estimate == pytest.approx(2 - 2 * math.log2(num / den), rel=1e-13)
    num4 = sum((x[i] + x[i + 1]) ** 4 for i in range(len(x) - 1))
    den4 = float(np.sum(x**4))
    est4 = E.estimate_alpha_cof(path_from_increments(x), 4)
    assert est4.estimate == pytest.approx(2 - math.log2(num4 / den4), rel=1e-13)


def test_cof_constant_increments():
    # adjacent sums double each increment: ratio (n-1) 2^p / n
    n = 64
    est = E.estimate_alpha_cof(path_from_increments(np.ones(n)), 2)
    assert est.estimate == pytest.approx(2 - 2 * math.log2(4 * (n - 1) / n), rel=1e-13)


def test_degenerate_paths():
    zero = path_from_increments(np.zeros(10))
    for est in (E.estimate_alpha_cof(zero), E.estimate_alpha_corr(zero)):
        assert est.degenerate and math.isnan(est.estimate)
        assert est.report.ci_lower is None
    alt = path_from_increments([1.0, -1.0] * 5)
    assert E.estimate_alpha_cof(alt).degenerate


def test_ratio_out_of_domain(monkeypatch):
    real = E.variation

    def fake(path, spec, normalizer=1.0, with_partial=False):
        r = real(path, spec, normalizer, with_partial)
        if spec.kind.value == "signed":
            r.per_site[:] = -2.0 * real(path, MultipowerSpec.power(2, spec.n_sites)).per_site
        return r

    monkeypatch.setattr(E, "variation", fake)
    with pytest.raises(RatioOutOfDomain):
        E.estimate_alpha_corr(path_from_increments([1.0, 2.0, 3.0]))


def test_warning_outside_clt_powers():
    p = path_from_increments([1.0, 2.0, -1.0, 0.5])
    with pytest.warns(CltHypothesisWarning):
        E.estimate_alpha_cof(p, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        E.estimate_alpha_cof(p, 2)
        E.estimate_alpha_cof(p, 4.5)


@given(st.floats(1e-3, 1e3))
def test_alpha_scale_invariant(c):
    _, path = exact_path(1.0, 2.0**-8, seed=3)
    a = E.estimate_alpha_cof(path)
    b = E.estimate_alpha_cof(path.scaled(c))
    assert b.estimate == pytest.approx(a.estimate, abs=1e-12)
    assert b.report.std_error == pytest.approx(a.report.std_error, rel=1e-10)
    a2, b2 = E.estimate_alpha_corr(path), E.estimate_alpha_corr(path.scaled(c))
    assert b2.estimate == pytest.approx(a2.estimate, abs=1e-12)
    assert b2.report.std_error == pytest.approx(a2.report.std_error, rel=1e-10)


@pytest.mark.parametrize("level", [0.8, 0.9, 0.95, 0.99])
def test_ci_inversion(white, level):
    _, path = white
    z = norm.ppf(0.5 + level / 2)
    reps = [E.estimate_alpha_cof(path, 2, level).report, E.estimate_alpha_corr(path, level).report]
    reps += E.estimate_vol_known_alpha(path, MultipowerSpec.power(2), 1.0, 1.0, level).reports
    reps += E.estimate_vol_unknown_alpha(path, MultipowerSpec.power(2), 1.0, "cof", level=level).reports
    for r in reps:
        assert r.statistic(r.ci_lower) == pytest.approx(z, abs=1e-10)
        assert r.statistic(r.ci_upper) == pytest.approx(-z, abs=1e-10)


def test_studentized_field(white):
    _, path = white
    r = E.estimate_alpha_cof(path, null_value=1.0).report
    assert r.studentized == pytest.approx(r.statistic(1.0), rel=1e-12)
    assert E.estimate_alpha_cof(path).report.studentized is None


def test_alpha_estimates_white(white):
    _, path = white
    for est in (E.estimate_alpha_cof(path), E.estimate_alpha_corr(path), E.estimate_alpha_cof(path, 4)):
        assert abs(est.estimate - 1.0) < 5 * est.report.std_error
        assert est.report.std_error < 0.05


def test_vol_known_c2():
    params, path = exact_path(1.0, sigma=2.0, seed=11)
    ve = E.estimate_vol_known_alpha(path, MultipowerSpec.power(2), 1.0, 1.0, truth=[4.0])
    r = ve.reports[0]
    assert abs(r.estimate - 4.0) < 4 * r.std_error
    assert abs(r.studentized) < 4
    ve4 = E.estimate_vol_known_alpha(path, MultipowerSpec.power(4), 1.0, 1.0)
    assert abs(ve4.estimates[0] - 16.0) < 4 * ve4.reports[0].std_error


def test_vol_damping_free(white):
    # neither the normalizer nor the estimator sees the damping rate
    _, path = white
    assert K.tau_sq_leading_from(1.0, 1.0, 2.0**-10, 1) == K.tau_sq_leading(ModelParams(1.0, 5.0, 1.0), 2.0**-10)
    assert K.tau_sq_leading(ModelParams(1.0, 0.5, 1.0), 2.0**-10) == K.tau_sq_leading(ModelParams(1.0, 3.0, 1.0), 2.0**-10)


def test_unknown_with_perfect_alpha_matches_known(white):
    _, path = white
    a = E.estimate_alpha_cof(path)
    a.report = type(a.report)(1.0, a.report.std_error, a.report.level)
    spec = MultipowerSpec.power(2)
    unk = E.estimate_vol_unknown_alpha(path, spec, 1.0, a)
    kn = E.estimate_vol_known_alpha(path, spec, 1.0, 1.0)
    assert unk.estimates[0] == pytest.approx(kn.estimates[0], rel=1e-14)
    assert unk.rate_tag == "root_log" and kn.rate_tag == "root"
    # a numeric index short-circuits to the known-index estimator
    num = E.estimate_vol_unknown_alpha(path, spec, 1.0, 1.0)
    assert num.alpha_known and num.estimates[0] == kn.estimates[0]


def test_unknown_multi_site_intervals_dependent():
    params = ModelParams(1.0, 1.0, 1.0)
    path = simulate_exact_stationary(params, SamplingScheme(2.0**-10, 1.0), 1.0, SeedSpec(5, 0))
    two = ObservedPath(SamplingScheme(path.delta, 1.0, (0.0, 1.0)), np.hstack([path.levels, 2 * path.levels]))
    ve = E.estimate_vol_unknown_alpha(two, MultipowerSpec.power(2, 2), 1.0)
    r0, r1 = ve.reports
    assert r1.estimate == pytest.approx(4 * r0.estimate, rel=1e-12)
    assert r1.std_error / r1.estimate == pytest.approx(r0.std_error / r0.estimate, rel=1e-12)


def test_weights_outside_clt():
    _, path = exact_path(1.0, 2.0**-8)
    with pytest.warns(CltHypothesisWarning):
        ve = E.estimate_vol_known_alpha(path, MultipowerSpec.power(3), 1.0, 1.0)
    assert ve.reports[0].degenerate and math.isfinite(ve.reports[0].estimate)
    assert E.clt_weights_ok(MultipowerSpec.multipower([2, 4]))
    assert not E.clt_weights_ok(MultipowerSpec.multipower([1, 1]))
    assert E.clt_weights_ok(MultipowerSpec.signed([1, 1]))
    assert not E.clt_weights_ok(MultipowerSpec.signed([1, 2]))


def test_ci_width_ratio_grows_with_log_delta():
    ratios = []
    for k in range(8, 15):
        vals = []
        for rep in range(4):
            _, path = exact_path(1.0, 2.0**-k, seed=99, rep=rep)
            spec = MultipowerSpec.power(2)
            kn = E.estimate_vol_known_alpha(path, spec, 1.0, 1.0).reports[0]
            un = E.estimate_vol_unknown_alpha(path, spec, 1.0).reports[0]
            # relative widths remove the common fluctuation of the plug-in level
            vals.append((un.std_error / un.estimate) / (kn.std_error / kn.estimate))
        ratios.append(np.mean(vals))
    assert all(b > a for a, b in zip(ratios, ratios[1:]))


def test_alpha_d2():
    _, path = exact_path(1.5, 2.0**-12, dim=2, seed=4)
    for est in (E.estimate_alpha_cof(path), E.estimate_alpha_corr(path)):
        assert abs(est.estimate - 1.5) < 5 * est.report.std_error
