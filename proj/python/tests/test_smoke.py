"""Smoke tests for the Python bindings."""

import math

import numpy as np
import pytest

import crossdiff


def test_model_names():
    assert crossdiff.model_names() == ["skt", "surfactant", "two_layer_film", "saturation_fp"]


def test_unknown_model_raises():
    with pytest.raises(ValueError):
        crossdiff.make_model("nope")


def test_grid_layout():
    g = crossdiff.Grid.line(10, 0.0, 1.0)
    assert g.num_cells == 10
    assert g.num_faces == 11
    assert g.h == pytest.approx(0.1)
    np.testing.assert_allclose(g.centers()[:2], [0.05, 0.15])
    sq = crossdiff.Grid.square(4, -1.0, 1.0)
    assert sq.shape == (4, 4)
    assert sq.num_faces == 2 * 5 * 4


def test_skt_flow_preserves_mass_and_dissipates():
    model = crossdiff.make_model("skt")
    grid = crossdiff.Grid.line(20, -5.0, 5.0)
    out = crossdiff.run_flow(model, grid=grid, tau=0.1, steps=3)
    assert out["completed"]
    assert out["snapshots"].shape == (4, 2 * grid.num_cells)
    assert np.all(np.diff(out["energy"]) <= 1e-9 * np.maximum(1.0, np.abs(out["energy"][:-1])))
    np.testing.assert_allclose(out["mass"], np.tile(out["mass"][0], (4, 1)), rtol=1e-10)
    assert out["energy"][0] == pytest.approx(crossdiff.energy(model, grid, model.initial(grid)))


def test_saturation_stays_in_box():
    model = crossdiff.make_model("saturation_fp")
    grid = crossdiff.Grid.line(20, -1.0, 1.0)
    out = crossdiff.run_flow(model, grid=grid, steps=2)
    mu = out["final_state"]
    assert model.box_violation(grid, mu) <= 1e-12
    assert np.max(mu[:20] + mu[20:]) <= 1 + 1e-12


def test_reference_solver_close_to_flow():
    model = crossdiff.make_model("skt")
    grid = crossdiff.Grid.line(20, -5.0, 5.0)
    ref = crossdiff.reference_run(model, 0.2, grid=grid, tau=0.01)
    jko = crossdiff.run_flow(model, grid=grid, tau=0.05, steps=4)["final_state"]
    assert crossdiff.relative_error(jko, ref) < 0.05


def test_cone_projection_and_action():
    Q, q = crossdiff.project_cone(np.array([[1.0, 0.0], [0.0, -1.0]]), np.array([[1.0], [0.5]]))
    assert np.max(np.linalg.eigvalsh(Q + 0.5 * q @ q.T)) <= 1e-10
    Qa, qa = crossdiff.project_cone(np.array([[1.0, 0.0], [0.0, -1.0]]), np.array([[1.0], [0.5]]), method="admm")
    np.testing.assert_allclose(Q, Qa, atol=1e-8)
    np.testing.assert_allclose(q, qa, atol=1e-8)
    assert crossdiff.action(np.eye(2), np.array([[1.0], [1.0]])) == pytest.approx(1.0)
    assert math.isinf(crossdiff.action(np.zeros((1, 1)), np.array([[1.0]])))
