import numpy as np
import pytest

from casimir_polder.core import (
    AtomSystem,
    CoefficientResult,
    DimensionConfig,
    GeometryError,
    nondimensionalize,
)


def test_atom_system_basic():
    sys3 = AtomSystem(positions=[[0, 0, 0], [0, 0, 0.5], [0, 0, 1.0]],
                      polarizabilities=[1.0, 1.0, 1.0])
    assert sys3.n_atoms == 3
    assert sys3.min_separation() == pytest.approx(0.5)
    assert sys3.max_separation() == pytest.approx(1.0)


def test_atom_system_positions_are_read_only():
    sys2 = AtomSystem(positions=[[0, 0, 0], [0, 0, 1]], polarizabilities=[1, 1])
    with pytest.raises(ValueError):
        sys2.positions[0, 0] = 3.0


def test_atom_system_rejects_coincident_atoms():
    with pytest.raises(GeometryError):
        AtomSystem(positions=[[0, 0, 0], [0, 0, 0]], polarizabilities=[1, 1])


def test_atom_system_rejects_negative_polarizability():
    with pytest.raises(ValueError):
        AtomSystem(positions=[[0, 0, 0], [0, 0, 1]], polarizabilities=[1, -1])


def test_atom_system_rejects_bad_shapes():
    with pytest.raises(ValueError):
        AtomSystem(positions=[[0, 0], [0, 1]], polarizabilities=[1, 1])
    with pytest.raises(ValueError):
        AtomSystem(positions=[[0, 0, 0], [0, 0, 1]], polarizabilities=[1])
    with pytest.raises(ValueError):
        AtomSystem(positions=np.empty((0, 3)), polarizabilities=[])
    with pytest.raises(ValueError):
        AtomSystem(positions=[[0, 0, np.inf], [0, 0, 1]], polarizabilities=[1, 1])


def test_nondimensionalize_two_atoms():
    sys2 = AtomSystem(positions=[[0, 0, 0], [0, 0, 5.0]], polarizabilities=[1, 1])
    nd = nondimensionalize(sys2)
    np.testing.assert_allclose(nd.positions[:, 2], [0.0, 1.0])
    assert nd.scale == pytest.approx(5.0)
    assert nd.nondimensional


def test_nondimensionalize_collinear_three():
    R = 3.7
    sys3 = AtomSystem(positions=[[0, 0, 0], [0, 0, R / 2], [0, 0, R]],
                      polarizabilities=[1, 1, 1])
    nd = nondimensionalize(sys3)
    np.testing.assert_allclose(nd.positions[:, 2], [0.0, 0.5, 1.0])


def test_nondimensionalize_single_atom():
    sys1 = AtomSystem(positions=[[1.0, 2.0, 3.0]], polarizabilities=[0.5])
    nd = nondimensionalize(sys1)
    np.testing.assert_allclose(nd.positions, sys1.positions)
    assert nd.scale == pytest.approx(1.0)
    assert nd.nondimensional


def test_nondimensionalize_idempotent_on_unit_system():
    sys2 = AtomSystem(positions=[[0, 0, 0], [0, 0, 1.0]], polarizabilities=[1, 1])
    nd = nondimensionalize(sys2)
    np.testing.assert_allclose(nd.positions, sys2.positions)
    assert nd.scale == pytest.approx(1.0)


def test_coefficient_result_validation():
    r = CoefficientResult(value=-0.1, error_estimate=1e-9,
                          method="worldline", mode="TE", order=2,
                          convention="two_body")
    assert r.mode == "TE"
    with pytest.raises(ValueError):
        CoefficientResult(value=0.0, error_estimate=-1.0, method="worldline",
                          mode="TE", order=2, convention="two_body")
    with pytest.raises(ValueError):
        CoefficientResult(value=0.0, error_estimate=0.0, method="worldline",
                          mode="TEM", order=2, convention="two_body")
    with pytest.raises(ValueError):
        CoefficientResult(value=0.0, error_estimate=0.0, method="shooting",
                          mode="TE", order=2, convention="two_body")
    with pytest.raises(ValueError):
        CoefficientResult(value=0.0, error_estimate=0.0, method="worldline",
                          mode="TE", order=2, convention="four_body")


def test_dimension_config():
    cfg = DimensionConfig()
    assert cfg.D == 4
    assert cfg.d == 3
    assert DimensionConfig(D=5).d == 4
    with pytest.raises(ValueError):
        DimensionConfig(D=1)
