import math

import numpy as np
import pytest
from scipy import integrate, optimize

from pvlab import shotnoise as S
from pvlab.malliavin import difference, estimate_variance
from pvlab.process import InvalidParameterError, PointConfiguration, SeedSpec, ball_volume, sample_poisson

IND = S.IndicatorKernel()
P_EXCEED = 1 - math.exp(-math.pi)  # P(f(0) >= u) for the unit indicator, u <= 1


def lens(r):
    """Area of B(0,1) cap B(z,1) with |z| = r."""
    return 2 * math.acos(r / 2) - (r / 2) * math.sqrt(4 - r * r) if r < 2 else 0.0


def pair_cov(r):
    # P(both >= u) - p^2 = exp(-|B0 u Bz|) - exp(-2 pi)
    return math.exp(-2 * math.pi) * (math.exp(lens(r)) - 1.0)


def finite_variance(s):
    """Exact Var[F_s] for the unit indicator: int gamma_s(z) C(z) dz."""
    def gamma(r):
        t = r / (2 * s)
        return s * s * 2 * (math.acos(t) - t * math.sqrt(1 - t * t))
    return integrate.quad(lambda r: 2 * math.pi * r * pair_cov(r) * gamma(r), 0, 2)[0]


def cfg(*pts):
    return PointConfiguration(np.array(pts, dtype=float).reshape(-1, 2), 2)


def test_field_value_examples():
    bump = S.CallableKernel(lambda d: np.exp(-np.sum(d * d, axis=-1)), support_radius=5.0)
    x = np.array([0.3, -0.2])
    assert S.field_value(bump, cfg([0, 0]), x) == pytest.approx(math.exp(-0.13))
    assert S.field_value(IND, cfg(), x) == 0.0
    assert S.field_value(IND, cfg([0, 0], [1, 0]), [0.5, 0.0]) == 2.0


def test_excursion_oracles():
    spec = S.ExcursionSpec(0.5, 2.0, 100_000, 1.0)
    assert S.excursion_volume(IND, cfg([0, 0]), spec) == pytest.approx(math.pi, rel=0.01)
    assert S.excursion_volume(IND, cfg(), spec) == 0.0
    # two disjoint unit balls fully inside the observation window
    spec3 = S.ExcursionSpec(0.5, 3.0, 100_000, 1.0)
    assert S.excursion_volume(IND, cfg([-1.5, 0], [1.5, 0]), spec3) == pytest.approx(2 * math.pi, rel=0.01)


def test_excursion_monotone_in_level_and_bounded(rng):
    pk = S.PowerLawKernel()
    c = PointConfiguration(rng.uniform(-8, 8, size=(250, 2)))
    vals = [S.excursion_volume(pk, c, S.ExcursionSpec(u, 4.0, 2048, 5.0)) for u in np.linspace(0.1, 8, 30)]
    assert np.all(np.diff(vals) <= 0)
    assert 0 <= min(vals) and max(vals) <= ball_volume(2, 4.0)


def test_quadrature_consistency():
    c = cfg([0, 0], [0.7, 0.9], [-2.0, 1.0])
    for n in (1024, 4096, 16384):
        spec_n = S.ExcursionSpec(0.5, 3.0, n, 1.0)
        spec_2n = S.ExcursionSpec(0.5, 3.0, 2 * n, 1.0)
        vol = ball_volume(2, 3.0)
        gap = abs(S.excursion_volume(IND, c, spec_n) - S.excursion_volume(IND, c, spec_2n))
        assert gap < 3 / math.sqrt(n) * vol


def test_nodes_are_deterministic_and_inside():
    a, b = S.ball_nodes(2, 3.0, 500), S.ball_nodes(2, 3.0, 500)
    assert np.array_equal(a, b)
    assert np.all(np.linalg.norm(a, axis=1) <= 3.0)


def test_validate_kernel_examples():
    assert S.validate_kernel(S.PowerLawKernel(delta=7.0)).admissible
    bad = S.validate_kernel(S.PowerLawKernel(delta=5.0))
    assert not bad.admissible and "3d" in bad.messages[0]
    assert S.validate_kernel(IND).regime == "compact-support"
    wide = S.validate_kernel(S.PowerLawKernel(delta=7.0, gamma=8.5))
    assert not wide.admissible  # gamma must stay below delta + d/2
    lying = S.CallableKernel(lambda d: np.ones(d.shape[:-1]), support_radius=1.0)
    assert S.validate_kernel(lying).admissible  # support is enforced by the wrapper


def test_truncation_radius_oracle():
    k = S.PowerLawKernel(delta=7.0)
    got = S.truncation_radius(k, c3=0.01, eps=0.0, target=0.5)
    bound = lambda R: 1.0 * 2 * math.pi / (0.01 * 5 * R**5) - 0.5
    ref = optimize.brentq(bound, 1.0, 100.0, xtol=1e-14)
    assert got == pytest.approx(ref, rel=1e-12)
    assert got == pytest.approx(3.0203, abs=1e-4)


def test_truncation_radius_properties():
    radii = [S.truncation_radius(S.PowerLawKernel(delta=dl), c3=0.4) for dl in (7.0, 8.0, 10.0)]
    assert radii[0] > radii[1] > radii[2]
    with pytest.raises(InvalidParameterError):
        S.truncation_radius(S.PowerLawKernel(delta=2.0), c3=0.4)
    assert S.truncation_radius(IND, c3=0.4) == 1.0
    # R never drops below c_g + eps
    assert S.truncation_radius(S.PowerLawKernel(delta=7.0), c3=1e6, eps=0.5) == pytest.approx(1.5)


def test_kernel_json_roundtrip():
    for k in (IND, S.IndicatorKernel(2.0, 0.5), S.PowerLawKernel(1.5, 0.8, 7.5, 8.0)):
        assert S.kernel_from_json(S.kernel_to_json(k)) == k
    with pytest.raises(InvalidParameterError):
        S.kernel_from_json('{"kind": "gaussian", "d": 2}')
    with pytest.raises(InvalidParameterError):
        S.kernel_to_json(S.CallableKernel(lambda d: d[..., 0], support_radius=1.0))


def test_callable_kernel_must_declare_tail():
    with pytest.raises(InvalidParameterError):
        S.CallableKernel(lambda d: d[..., 0])
    with pytest.raises(InvalidParameterError):
        S.CallableKernel(lambda d: d[..., 0], support_radius=1.0, tail=(1, 1, 7, 7, 1))


def test_spec_validation():
    for bad in (dict(level=0.0, radius=2.0), dict(level=1.0, radius=0.5), dict(level=1.0, radius=2.0, n_nodes=0)):
        with pytest.raises(InvalidParameterError):
            S.ExcursionSpec(**bad)


def test_difference_operator_oracles():
    spec = S.ExcursionSpec(0.5, 2.0, 50_000, 1.0)
    F = S.shotnoise_functional(IND, spec)
    c = sample_poisson(F.window, 1.0, SeedSpec(3))
    assert difference(F, c, np.array([3.5, 0.0])) == 0.0  # support misses B(0, s)
    # empty configuration: D_x F = |B(x, 1) cap B(0, 2)|
    x = np.array([1.6, 0.0])
    d, R, s = 1.6, 1.0, 2.0
    a1 = R * R * math.acos((d * d + R * R - s * s) / (2 * d * R))
    a2 = s * s * math.acos((d * d + s * s - R * R) / (2 * d * s))
    a3 = 0.5 * math.sqrt((-d + R + s) * (d + R - s) * (d - R + s) * (d + R + s))
    assert difference(F, cfg(), x) == pytest.approx(a1 + a2 - a3, rel=0.01)


def test_pair_density_oracles():
    z0 = S.pair_probability_variance_density(IND, 0.5, [0.0, 0.0], 4000, SeedSpec(1))
    assert abs(z0.estimate - P_EXCEED * (1 - P_EXCEED)) < 3 * z0.std_error
    far = S.pair_probability_variance_density(IND, 0.5, [2.5, 0.0], 4000, SeedSpec(2))
    assert abs(far.estimate) < 3 * far.std_error + 1e-12
    mid = S.pair_probability_variance_density(IND, 0.5, [1.0, 0.0], 4000, SeedSpec(3))
    assert abs(mid.estimate - pair_cov(1.0)) < 3 * mid.std_error


def test_pair_density_integral_matches_analytic():
    exact = integrate.quad(lambda r: 2 * math.pi * r * pair_cov(r), 0, 2)[0]
    est = S.pair_density_integral(IND, 0.5, 2.0, 9, 3000, SeedSpec(4))
    # trapezoid error on 9 radii is well below the Monte Carlo error here
    assert abs(est.estimate - exact) < 3 * est.std_error + 0.02 * exact


def test_finite_variance_matches_exact_integral():
    s = 4.0
    F = S.shotnoise_functional(IND, S.ExcursionSpec(0.5, s, 4096, 1.0))
    v = estimate_variance(F, F.window, 1.0, 3000, SeedSpec(5))
    exact = finite_variance(s)
    assert v.lo <= exact <= v.hi


def test_translation_invariance_of_mean():
    z0 = np.array([0.6, -0.3])
    shifted = S.CallableKernel(lambda d: np.where(np.linalg.norm(d - z0, axis=-1) <= 1.0, 1.0, 0.0),
                               support_radius=1.0 + float(np.linalg.norm(z0)))
    spec = S.ExcursionSpec(0.5, 3.0, 1024, 1.0 + float(np.linalg.norm(z0)))
    means = []
    for k in (IND, shifted):
        F = S.shotnoise_functional(k, spec)
        vals = np.array([F(sample_poisson(F.window, 1.0, SeedSpec(6, (0, r)))) for r in range(400)])
        means.append((vals.mean(), vals.std(ddof=1) / math.sqrt(len(vals))))
    (m1, e1), (m2, e2) = means
    assert abs(m1 - m2) < 3 * math.hypot(e1, e2)
    # both are unbiased for p * vol(B(0, s)) up to quadrature error
    assert abs(m1 - P_EXCEED * ball_volume(2, 3.0)) < 3 * e1 + 0.05
