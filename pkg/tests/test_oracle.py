import numpy as np
import pytest

from tclgen.baths import ExactBath, boson_mode_bath, qubit_bath
from tclgen.oracle import (
    FullModel,
    duality_check,
    exact_reduced_trajectory,
    partial_trace_bath,
    scaling_probe,
    tcl_vs_exact_error,
    thread_budget,
)
from tclgen.superops import Grid, ModelSpec, QuadratureConfig

rng = np.random.default_rng(57)

SZ = np.diag([1.0, -1.0]).astype(complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)


def rand_herm(d):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (x + x.conj().T)


def rand_state(d):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = x @ x.conj().T
    return rho / np.trace(rho)


def dephasing_setup(g=0.15, omega=1.0, n_max=6):
    bath = boson_mode_bath(omega, n_max)
    model = ModelSpec(0.7 * SZ, SZ, g, bath)
    rho0 = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    return model, rho0


class TestExactTrajectory:
    def test_zero_coupling_is_constant(self):
        model = ModelSpec(rand_herm(2), rand_herm(2), 0.0, qubit_bath(1.0))
        rho0 = rand_state(2)
        traj = exact_reduced_trajectory(FullModel(model, rho0), Grid(2.0, 40))
        np.testing.assert_allclose(traj.payload[-1], rho0, atol=1e-12)

    def test_dephasing_matches_closed_form(self):
        # commuting model: populations frozen and the coherence magnitude
        # follows exp(-4 g^2 (1 - cos(w t)) / w^2) for the vacuum mode
        g, omega = 0.15, 1.0
        model, rho0 = dephasing_setup(g, omega)
        grid = Grid(5.0, 200)
        traj = exact_reduced_trajectory(FullModel(model, rho0), grid)
        np.testing.assert_allclose(traj.payload[:, 0, 0], 0.5, atol=1e-10)
        want = 0.5 * np.exp(-4 * g ** 2 / omega ** 2
                            * (1 - np.cos(omega * grid.times)))
        np.testing.assert_allclose(np.abs(traj.payload[:, 0, 1]), want,
                                   atol=1e-9)

    def test_trace_and_hermiticity_exact(self):
        model = ModelSpec(rand_herm(2), rand_herm(2), 0.4,
                          qubit_bath(1.2, beta=0.7, shift=0.3))
        traj = exact_reduced_trajectory(FullModel(model, rand_state(2)),
                                        Grid(3.0, 60))
        assert traj.trace_dev.max() < 1e-12
        assert traj.herm_residual.max() < 1e-12

    def test_bath_energy_shift_gauge(self):
        model = ModelSpec(rand_herm(2), rand_herm(2), 0.3,
                          qubit_bath(1.0, beta=0.9))
        rho0 = rand_state(2)
        grid = Grid(2.0, 40)
        a = exact_reduced_trajectory(FullModel(model, rho0), grid)
        shifted = ExactBath(model.bath.H_E + 2.7 * np.eye(2),
                            model.bath.phi, model.bath.rho_E)
        model2 = ModelSpec(model.H_S, model.A, model.g, shifted)
        b = exact_reduced_trajectory(FullModel(model2, rho0), grid)
        assert np.abs(a.payload - b.payload).max() < 1e-10

    def test_partial_trace_is_trace_compatible(self):
        x = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        red = partial_trace_bath(x, 2, 3)
        assert np.trace(red) == pytest.approx(np.trace(x))

    def test_desk_dimension_bound(self):
        bath = boson_mode_bath(1.0, 4095)
        model = ModelSpec(rand_herm(2), rand_herm(2), 0.1, bath)
        with pytest.raises(ValueError, match="desk bound"):
            FullModel(model, rand_state(2))


class TestScalingProbe:
    def test_first_order_zero_mean_ratio(self):
        # TCL1 reduces to free evolution; the residual is O(g^2)
        bath = boson_mode_bath(1.0, 6)
        model = ModelSpec(0.5 * SZ + 0.2 * SX, SX, 0.1, bath)
        rows = scaling_probe(model, rand_state(2), Grid(4.0, 200), 1,
                             [0.1, 0.05])
        assert rows[0]["ratio"] == pytest.approx(2.0, abs=0.45)
        assert rows[1]["ratio"] is None

    def test_second_order_ratio_with_odd_moments(self):
        bath = boson_mode_bath(1.0, 6, shift=0.7)
        model = ModelSpec(0.5 * SZ + 0.2 * SX, SX, 0.1, bath)
        rho0 = np.array([[0.8, 0.3 - 0.1j], [0.3 + 0.1j, 0.2]])
        rows = scaling_probe(model, rho0, Grid(6.0, 300), 2, [0.1, 0.05])
        assert rows[0]["ratio"] == pytest.approx(3.0, abs=0.6)

    def test_error_vanishes_with_coupling(self):
        bath = boson_mode_bath(1.0, 6, shift=0.5)
        model = ModelSpec(0.5 * SZ + 0.2 * SX, SX, 0.1, bath)
        rows = scaling_probe(model, rand_state(2), Grid(3.0, 150), 2,
                             [0.2, 0.1, 0.05, 0.025])
        errs = [r["err"] for r in rows]
        assert all(a > b for a, b in zip(errs, errs[1:]))

    def test_needs_two_couplings(self):
        model, rho0 = dephasing_setup()
        with pytest.raises(ValueError):
            scaling_probe(model, rho0, Grid(1.0, 50), 2, [0.1])

    def test_thread_budget_reads_environment(self, monkeypatch):
        monkeypatch.setenv("TCLGEN_THREADS", "3")
        assert thread_budget() == 3
        monkeypatch.setenv("TCLGEN_THREADS", "junk")
        assert thread_budget() == 1


class TestDuality:
    def test_residuals_are_tiny_for_stationary_bath(self):
        bath = qubit_bath(1.1, beta=1.0, shift=0.4)
        model = ModelSpec(rand_herm(2), rand_herm(2), 0.2, bath)
        quad = QuadratureConfig(Grid(2.0, 80), max_order=3)
        res = duality_check(model, rand_herm(2), rand_state(2), quad)
        assert set(res) == {1, 2, 3}
        assert max(res.values()) < 1e-12

    def test_first_order_closed_form(self):
        # both sides equal -i <phi> integrated against Tr[O0 [A(tau), rho]]
        shift = 0.6
        bath = qubit_bath(1.0, beta=1.0, shift=shift)
        h_s, a = 0.5 * SZ, SZ
        model = ModelSpec(h_s, a, 0.3, bath)
        grid = Grid(1.5, 100)
        quad = QuadratureConfig(grid, max_order=1)
        o0, rho0 = rand_herm(2), rand_state(2)
        res = duality_check(model, o0, rho0, quad, orders=(1,))
        assert res[1] < 1e-13
        from tclgen.superops import apply_superop, evaluate_mu
        lhs = np.trace(o0 @ apply_superop(
            -1j * evaluate_mu(1, grid.M, model, quad), rho0))
        want = (-1j * model.g * shift * grid.T
                * np.trace(o0 @ (a @ rho0 - rho0 @ a)))
        assert abs(lhs - want) < 1e-12

    def test_identity_observable_gives_zero_sides(self):
        bath = qubit_bath(1.0, beta=0.8, shift=0.3)
        model = ModelSpec(rand_herm(2), rand_herm(2), 0.2, bath)
        quad = QuadratureConfig(Grid(1.0, 40), max_order=2)
        from tclgen.superops import apply_superop, evaluate_mu
        rho0 = rand_state(2)
        for n in (1, 2):
            lhs = np.trace(np.eye(2) @ apply_superop(
                (-1j) ** n * evaluate_mu(n, 40, model, quad), rho0))
            assert abs(lhs) < 1e-13

    def test_rejects_nonstationary_bath(self):
        drifting = ExactBath(rand_herm(3), rand_herm(3), rand_state(3))
        model = ModelSpec(rand_herm(2), rand_herm(2), 0.1, drifting)
        quad = QuadratureConfig(Grid(1.0, 20), max_order=2)
        with pytest.raises(ValueError, match="stationary"):
            duality_check(model, rand_herm(2), rand_state(2), quad)


def test_tcl_vs_exact_error_series_shape():
    model, rho0 = dephasing_setup(g=0.1)
    err, series = tcl_vs_exact_error(model, rho0, Grid(2.0, 80), 2,
                                     return_series=True)
    assert series.shape == (81,)
    assert err == pytest.approx(series.max())
    assert series[0] == pytest.approx(0.0, abs=1e-13)
