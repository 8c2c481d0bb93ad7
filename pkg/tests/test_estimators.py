import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from trajaudit.estimators import (EstimationInfeasibleError, EstimatorInputError,
                                  cmi_discrete, cmi_knn, combine_discrete,
                                  cond_entropy, continuous_column,
                                  discrete_column, entropy_discrete,
                                  marginal_entropy, mi_discrete, mi_ksg,
                                  mi_mixed)

LN2 = math.log(2.0)


def _plugin_mi_oracle(x, y):
    """Brute-force plug-in MI over the enumerated empirical joint."""
    x, y = np.asarray(x), np.asarray(y)
    n = x.shape[0]
    total = 0.0
    for xv in np.unique(x):
        for yv in np.unique(y):
            pxy = np.mean((x == xv) & (y == yv))
            if pxy > 0:
                total += pxy * math.log(pxy / (np.mean(x == xv) * np.mean(y == yv)))
    return total


# -- discrete plug-in ---------------------------------------------------------

def test_entropy_deterministic_variable():
    assert entropy_discrete(discrete_column(np.zeros(1000, dtype=int))).value == 0.0


def test_entropy_fair_coin():
    labels = np.array([0, 1] * 500)
    assert entropy_discrete(discrete_column(labels)).value == pytest.approx(LN2, abs=1e-12)


def test_entropy_half_quarter_quarter():
    labels = np.array([0] * 500 + [1] * 250 + [2] * 250)
    assert entropy_discrete(discrete_column(labels)).value == pytest.approx(
        1.5 * LN2, abs=1e-12)


def test_mi_perfect_copy():
    x = np.array([0, 1] * 500)
    assert mi_discrete(discrete_column(x), discrete_column(x.copy())).value == \
        pytest.approx(LN2, abs=1e-12)


def test_mi_exact_independence():
    x = np.array(([0] * 250 + [1] * 250) * 2)
    y = np.array([0] * 500 + [1] * 500)
    assert mi_discrete(discrete_column(x), discrete_column(y)).value == \
        pytest.approx(0.0, abs=1e-12)


def test_mi_skewed_joint_matches_brute_force():
    cells = [(0, 0, 400), (1, 1, 400), (0, 1, 100), (1, 0, 100)]
    x = np.concatenate([np.full(c, xv) for xv, _, c in cells])
    y = np.concatenate([np.full(c, yv) for _, yv, c in cells])
    got = mi_discrete(discrete_column(x), discrete_column(y)).value
    assert got == pytest.approx(_plugin_mi_oracle(x, y), abs=1e-12)
    assert got == pytest.approx(0.8 * math.log(1.6) + 0.2 * math.log(0.4), abs=1e-12)
    assert got == pytest.approx(0.192745, abs=1e-6)


def test_cmi_conditioning_removes_copy():
    x = np.array([0, 1] * 500)
    assert cmi_discrete(discrete_column(x), discrete_column(x.copy()),
                        discrete_column(x.copy())).value == pytest.approx(0.0, abs=1e-12)


def test_cmi_xor_exact():
    pattern = [(0, 0), (0, 1), (1, 0), (1, 1)]
    x = np.array([a for a, _ in pattern] * 250)
    y = np.array([b for _, b in pattern] * 250)
    z = x ^ y
    assert cmi_discrete(discrete_column(x), discrete_column(y),
                        discrete_column(z)).value == pytest.approx(LN2, abs=1e-12)


def test_cmi_constant_conditioner_equals_mi(rng):
    x = discrete_column(rng.integers(0, 3, 500))
    y = discrete_column(rng.integers(0, 3, 500))
    z = discrete_column(np.zeros(500, dtype=int))
    assert cmi_discrete(x, y, z).value == pytest.approx(
        mi_discrete(x, y).value, abs=1e-12)


def test_mi_symmetry_exact(rng):
    x = discrete_column(rng.integers(0, 4, 300))
    y = discrete_column(rng.integers(0, 3, 300))
    assert mi_discrete(x, y).value == mi_discrete(y, x).value


def test_data_processing_determinism(rng):
    x = rng.integers(0, 4, 1000)
    y = x % 2
    got = mi_discrete(discrete_column(x), discrete_column(y)).value
    assert got == pytest.approx(entropy_discrete(discrete_column(y)).value, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4), st.integers(2, 4),
       st.integers(2, 4), st.integers(10, 400))
def test_chain_rule_consistency(seed, ax, ay, az, n):
    rng = np.random.default_rng(seed)
    x = discrete_column(rng.integers(0, ax, n))
    y = discrete_column(rng.integers(0, ay, n))
    z = discrete_column(rng.integers(0, az, n))
    lhs = cmi_discrete(x, y, z).value
    rhs = mi_discrete(combine_discrete(x, z), y).value - mi_discrete(z, y).value
    assert lhs == pytest.approx(rhs, abs=1e-12)
    assert lhs >= 0.0


def test_length_mismatch_rejected():
    with pytest.raises(EstimatorInputError, match="length"):
        mi_discrete(discrete_column(np.zeros(3, dtype=int)),
                    discrete_column(np.zeros(4, dtype=int)))


# -- KSG ----------------------------------------------------------------------

@pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
def test_ksg_bivariate_gaussian(rho):
    rng = np.random.default_rng(42)
    n = 10000
    x = rng.standard_normal(n)
    y = rho * x + math.sqrt(1 - rho**2) * rng.standard_normal(n)
    truth = -0.5 * math.log(1 - rho**2) if rho else 0.0
    got = mi_ksg(continuous_column(x), continuous_column(y), k=3, seed=0).value
    assert got == pytest.approx(truth, abs=0.05)


def test_ksg_independent_tight():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(10000)
    y = rng.standard_normal(10000)
    got = mi_ksg(continuous_column(x), continuous_column(y), k=3, seed=0).value
    assert abs(got) <= 0.02


def test_ksg_deterministic_and_nearly_symmetric():
    rng = np.random.default_rng(1)
    x = continuous_column(rng.standard_normal(2000))
    y = continuous_column(rng.standard_normal(2000) + 0.5 * x.values[:, 0])
    a = mi_ksg(x, y, k=3, seed=9).value
    b = mi_ksg(x, y, k=3, seed=9).value
    c = mi_ksg(y, x, k=3, seed=9).value
    assert a == b
    assert a == pytest.approx(c, abs=0.01)


def test_ksg_input_guards():
    x = continuous_column(np.arange(3.0))
    with pytest.raises(EstimatorInputError):
        mi_ksg(x, x, k=3)
    with pytest.raises(EstimatorInputError):
        continuous_column(np.array([1.0, np.nan]))


# -- mixed --------------------------------------------------------------------

def test_mixed_independent_labels():
    rng = np.random.default_rng(11)
    x = continuous_column(rng.standard_normal(10000))
    y = discrete_column(rng.integers(0, 2, 10000))
    assert abs(mi_mixed(x, y, k=3, seed=0).value) <= 0.02


def test_mixed_separated_mixture_matches_quadrature():
    delta = 4.0

    def density(v):
        return 0.5 * (math.exp(-v * v / 2) + math.exp(-(v - delta) ** 2 / 2)) \
            / math.sqrt(2 * math.pi)

    h_mix = quad(lambda v: -density(v) * math.log(density(v)), -10, 10 + delta,
                 limit=300)[0]
    truth = h_mix - 0.5 * math.log(2 * math.pi * math.e)
    rng = np.random.default_rng(5)
    y = rng.integers(0, 2, 10000)
    x = rng.standard_normal(10000) + delta * y
    got = mi_mixed(continuous_column(x), discrete_column(y), k=3, seed=0).value
    assert got == pytest.approx(truth, abs=0.05)


def test_mixed_constant_labels_zero():
    rng = np.random.default_rng(2)
    x = continuous_column(rng.standard_normal(500))
    y = discrete_column(np.zeros(500, dtype=int))
    assert mi_mixed(x, y, k=3, seed=0).value == 0.0


def test_mixed_small_classes_skipped_with_warning():
    rng = np.random.default_rng(3)
    x = continuous_column(rng.standard_normal(103))
    y = discrete_column(np.array([0] * 100 + [1] * 3))
    with pytest.warns(RuntimeWarning, match="skipping"):
        est = mi_mixed(x, y, k=3, seed=0)
    assert est.n_samples == 100


def test_mixed_all_classes_too_small():
    x = continuous_column(np.arange(6.0))
    y = discrete_column(np.array([0, 0, 1, 1, 2, 2]))
    with pytest.raises(EstimationInfeasibleError):
        mi_mixed(x, y, k=3, seed=0)


# -- conditional kNN ----------------------------------------------------------

def test_cmi_knn_independent_triple():
    rng = np.random.default_rng(21)
    cols = [continuous_column(rng.standard_normal(10000)) for _ in range(3)]
    assert abs(cmi_knn(*cols, k=3, seed=0).value) <= 0.03


def test_cmi_knn_gaussian_closed_form():
    # y = x + z + noise; conditioned on z the SNR is 1:1, so I(X;Y|Z) = ln(2)/2.
    rng = np.random.default_rng(22)
    n = 10000
    x = rng.standard_normal(n)
    z = rng.standard_normal(n)
    y = x + z + rng.standard_normal(n)
    got = cmi_knn(continuous_column(x), continuous_column(y), continuous_column(z),
                  k=3, seed=0).value
    assert got == pytest.approx(0.5 * LN2, abs=0.07)


def test_cmi_knn_screened_off():
    rng = np.random.default_rng(23)
    x = rng.standard_normal(10000)
    got = cmi_knn(continuous_column(x), continuous_column(x.copy()),
                  continuous_column(x.copy()), k=3, seed=0).value
    assert abs(got) <= 0.03


def test_cmi_knn_discrete_embedding_xor():
    rng = np.random.default_rng(24)
    x = rng.integers(0, 2, 10000)
    y = rng.integers(0, 2, 10000)
    z = (x ^ y).astype(np.float64)
    got = cmi_knn(discrete_column(x), discrete_column(y), continuous_column(z),
                  k=3, seed=0).value
    assert got == pytest.approx(LN2, abs=0.05)


# -- conditional entropy --------------------------------------------------------

def test_cond_entropy_independent_bit():
    rng = np.random.default_rng(31)
    y = discrete_column(rng.integers(0, 2, 10000))
    z = continuous_column(rng.standard_normal(10000))
    assert cond_entropy(y, z, k=3, seed=0).value == pytest.approx(LN2, abs=0.02)


def test_cond_entropy_determined_by_discrete_z():
    rng = np.random.default_rng(32)
    z = rng.integers(0, 3, 5000)
    y = z % 2
    got = cond_entropy(discrete_column(y), discrete_column(z)).value
    assert got == pytest.approx(0.0, abs=1e-12)


def test_cond_entropy_perfect_predictor_exact_zero():
    rng = np.random.default_rng(33)
    y = rng.integers(0, 2, 1000)
    assert cond_entropy(discrete_column(y), discrete_column(y.copy())).value == 0.0


def test_cond_entropy_continuous_gaussian():
    # H(Y|Z) for Y standard normal independent of Z: 0.5*ln(2*pi*e).
    rng = np.random.default_rng(34)
    y = continuous_column(rng.standard_normal(8000))
    z = continuous_column(rng.standard_normal(8000))
    truth = 0.5 * math.log(2 * math.pi * math.e)
    assert cond_entropy(y, z, k=3, seed=0).value == pytest.approx(truth, abs=0.05)


def test_marginal_entropy_paths():
    labels = discrete_column(np.array([0, 1] * 100))
    assert marginal_entropy(labels).value == pytest.approx(LN2, abs=1e-12)
    rng = np.random.default_rng(35)
    g = continuous_column(rng.standard_normal(8000))
    assert marginal_entropy(g, k=3, seed=0).value == pytest.approx(
        0.5 * math.log(2 * math.pi * math.e), abs=0.05)


def test_estimate_metadata():
    rng = np.random.default_rng(36)
    x = continuous_column(rng.standard_normal(100))
    y = continuous_column(rng.standard_normal(100))
    e = mi_ksg(x, y, k=4, seed=0)
    assert (e.n_samples, e.k_neighbors, e.estimator_id) == (100, 4, "ksg1.mi")
    d = mi_discrete(discrete_column(np.zeros(5, dtype=int)),
                    discrete_column(np.zeros(5, dtype=int)))
    assert d.k_neighbors == 0
