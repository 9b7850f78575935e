"""Energy densities, gradients, and recession behavior."""

import numpy as np
import pytest

from pinhomog.errors import InadmissibleStateError, InvalidArgumentError
from pinhomog.materials import (EnergyModel, density, density_gradient,
                                density_value_and_grad, neo_hookean, p_norm,
                                recession)


def test_p_norm_zero_at_origin():
    model = p_norm(1.5)
    assert density(model, np.zeros((2, 2))) == pytest.approx(0.0, abs=1e-12)


def test_p_norm_value():
    model = p_norm(1.5, eta=1e-12)
    xi = np.eye(2)
    # |I|^2 = 2, so the density is 2^(3/4) up to the eta offset
    assert density(model, xi) == pytest.approx(2.0 ** 0.75, rel=1e-9)


def test_p_norm_gradient_finite_difference():
    rng = np.random.default_rng(11)
    for p in (4.0 / 3.0, 1.5, 2.0, 3.0):
        model = p_norm(p)
        xi = rng.normal(scale=1.0, size=(25, 2, 2))
        g = density_gradient(model, xi)
        h = 1e-6
        for a in range(2):
            for b in range(2):
                e = np.zeros((2, 2))
                e[a, b] = h
                fd = (density(model, xi + e) - density(model, xi - e)) / (2 * h)
                scale = np.maximum(1.0, np.abs(g[:, a, b]))
                assert np.max(np.abs(fd - g[:, a, b]) / scale) <= 1e-6


def test_neo_hookean_stress_free_identity():
    model = neo_hookean(1.0, 1.0)
    assert density(model, np.eye(2)) == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(density_gradient(model, np.eye(2)), 0.0, atol=1e-14)


def test_neo_hookean_gradient_finite_difference():
    rng = np.random.default_rng(5)
    model = neo_hookean(1.0, 2.0)
    base = np.eye(2) + 0.2 * rng.normal(size=(30, 2, 2))
    J = base[:, 0, 0] * base[:, 1, 1] - base[:, 0, 1] * base[:, 1, 0]
    xi = base[J > 0.3]
    g = density_gradient(model, xi)
    h = 1e-7
    for a in range(2):
        for b in range(2):
            e = np.zeros((2, 2))
            e[a, b] = h
            fd = (density(model, xi + e) - density(model, xi - e)) / (2 * h)
            scale = np.maximum(1.0, np.abs(g[:, a, b]))
            assert np.max(np.abs(fd - g[:, a, b]) / scale) <= 1e-6


def test_neo_hookean_rejects_inverted_states():
    model = neo_hookean(1.0, 1.0)
    with pytest.raises(InadmissibleStateError):
        density(model, np.diag([1.0, -1.0]))  # reflection, J = -1
    with pytest.raises(InadmissibleStateError):
        density(model, np.array([[1.0, 0.0], [0.0, 0.0]]))  # singular, J = 0


def test_value_and_grad_consistency():
    rng = np.random.default_rng(2)
    model = p_norm(1.5)
    xi = rng.normal(size=(10, 2, 2))
    v, g = density_value_and_grad(model, xi)
    assert np.allclose(v, density(model, xi))
    assert np.allclose(g, density_gradient(model, xi))


def test_recession_homogeneity():
    rec = recession(p_norm(1.5))
    rng = np.random.default_rng(9)
    xi = rng.normal(size=(40, 2, 2))
    for t in (2.0, 5.0, 17.0):
        lhs = rec.density(t * xi)
        rhs = t ** 1.5 * rec.density(xi)
        assert np.max(np.abs(lhs - rhs) / np.maximum(rhs, 1e-300)) <= 1e-12


def test_recession_not_defined_for_neo_hookean():
    with pytest.raises(NotImplementedError):
        recession(neo_hookean(1.0, 1.0))


def test_model_validation():
    with pytest.raises(InvalidArgumentError):
        EnergyModel("p_norm", p=-1.0)
    with pytest.raises(InvalidArgumentError):
        EnergyModel("neo_hookean", mu=0.0)
    with pytest.raises(InvalidArgumentError):
        EnergyModel("unknown")
