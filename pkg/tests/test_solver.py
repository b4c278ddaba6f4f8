"""Online loop behavior: convergence, determinism, equivalence, guards."""

import numpy as np
import pytest

from ompd import (CompositeLossStep, ErrorModel, MissingOptimaError,
                  ProblemStream, SolverConfig, SolverRunError, StepSizeError,
                  box, euclidean_generator, fill_optima, l1_rule,
                  nuclear_rule, run, run_proximal_gradient, whole_space,
                  write_trace_csv, zero_error_model, zero_rule)
from ompd.experiments import GaussMarkovConfig, generate_gauss_markov
from ompd.runio import read_trace_csv

EUCLID = euclidean_generator()


def _quadratic_step(A, c, prox=None, eta=0.0, dim=None):
    n = A.shape[0] if dim is None else dim

    def g(x):
        d = x - c
        return 0.5 * float(d @ A @ d)

    def grad(x):
        return A @ (x - c)

    return CompositeLossStep(
        smooth_value=g, smooth_gradient=grad,
        nonsmooth_value=(lambda x: eta * float(np.sum(np.abs(x))))
        if eta else (lambda x: 0.0),
        smoothness_constant=float(np.linalg.eigvalsh(A)[-1]),
        regularizer_lipschitz=eta * np.sqrt(n),
        prox_handle=l1_rule(eta) if eta else zero_rule(), dim=n)


def _static_stream(step, T, domain=None):
    return ProblemStream(horizon=T, step_at=lambda k: step,
                         domain=domain or whole_space(), dim=step.dim)


class TestRun:
    def test_static_quadratic_converges_to_closed_form_minimizer(self):
        """Unique minimizer of the static strongly convex quadratic is c."""
        A = np.diag([1.0, 4.0, 10.0])
        c = np.array([1.0, -2.0, 0.5])
        step = _quadratic_step(A, c)
        stream = _static_stream(step, 500)
        config = SolverConfig(step_size=1.0 / step.smoothness_constant,
                              generator=EUCLID,
                              initial_point=np.array([5.0, 5.0, 5.0]))
        trace = run(stream, config, zero_error_model())
        assert np.linalg.norm(trace.iterates[-1] - c) <= 1e-6

    def test_single_step_is_plain_gradient_step(self):
        A = np.eye(2) * 2.0
        c = np.array([1.0, 1.0])
        step = _quadratic_step(A, c)
        stream = _static_stream(step, 1)
        x0 = np.array([3.0, -1.0])
        lam = 0.25
        config = SolverConfig(step_size=lam, generator=EUCLID,
                              initial_point=x0)
        trace = run(stream, config, zero_error_model())
        np.testing.assert_array_equal(trace.iterates[0],
                                      x0 - lam * step.smooth_gradient(x0))

    def test_bit_identical_traces_for_identical_inputs(self):
        cfg = GaussMarkovConfig(horizon=60, seed=5)
        stream, _ = generate_gauss_markov(cfg)
        config = SolverConfig(step_size=cfg.step_size, generator=EUCLID,
                              initial_point=np.zeros(cfg.n_coeffs))
        model = ErrorModel(gradient_std=0.05, prox_std=0.05, seed=9)
        t1 = run(stream, config, model)
        stream2, _ = generate_gauss_markov(cfg)
        t2 = run(stream2, config,
                 ErrorModel(gradient_std=0.05, prox_std=0.05, seed=9))
        np.testing.assert_array_equal(t1.iterates, t2.iterates)
        np.testing.assert_array_equal(t1.eps, t2.eps)
        np.testing.assert_array_equal(t1.f_played, t2.f_played)

    def test_iterates_stay_feasible_on_bounded_domain(self):
        cfg = GaussMarkovConfig(horizon=80, seed=6)
        dom = box(-0.5, 0.5, dim=cfg.n_coeffs)
        stream, _ = generate_gauss_markov(cfg, domain=dom)
        config = SolverConfig(step_size=cfg.step_size, generator=EUCLID,
                              initial_point=np.zeros(cfg.n_coeffs))
        model = ErrorModel(gradient_std=0.05, prox_std=0.05, seed=10)
        trace = run(stream, config, model)
        for x in trace.iterates:
            assert np.linalg.norm(dom.project(x) - x) <= 1e-12

    def test_recorded_error_sequences_match_model_draws(self):
        cfg = GaussMarkovConfig(horizon=40, seed=7)
        stream, _ = generate_gauss_markov(cfg)
        config = SolverConfig(step_size=cfg.step_size, generator=EUCLID,
                              initial_point=np.zeros(cfg.n_coeffs))
        model = ErrorModel(gradient_std=0.05, prox_std=0.05, seed=11)
        trace = run(stream, config, model)
        for k in range(1, 41):
            e = model.gradient_error(k, cfg.n_coeffs)
            assert trace.grad_error_norms[k - 1] == np.linalg.norm(e)
            _, eps = model.prox_error(k, cfg.n_coeffs)
            assert trace.eps[k - 1] == eps

    def test_wall_time_recorded(self):
        step = _quadratic_step(np.eye(2), np.zeros(2))
        stream = _static_stream(step, 5)
        config = SolverConfig(step_size=0.5, generator=EUCLID,
                              initial_point=np.ones(2))
        trace = run(stream, config, zero_error_model())
        assert np.all(trace.step_seconds >= 0.0)

    def test_step_size_guard_names_constants(self):
        step = _quadratic_step(np.diag([10.0, 10.0]), np.zeros(2))
        stream = _static_stream(step, 5)
        config = SolverConfig(step_size=1.0, generator=EUCLID,
                              initial_point=np.zeros(2))
        with pytest.raises(StepSizeError) as err:
            run(stream, config, zero_error_model())
        msg = str(err.value)
        assert "10" in msg and "sigma_omega" in msg

    def test_partial_trace_attached_on_mid_run_failure(self):
        """A refused prox/domain composition aborts with the prefix trace."""
        good = _quadratic_step(np.eye(2), np.zeros(2))
        bad = CompositeLossStep(
            smooth_value=good.smooth_value,
            smooth_gradient=good.smooth_gradient,
            nonsmooth_value=lambda x: 0.0,
            smoothness_constant=1.0, regularizer_lipschitz=1.0,
            prox_handle=nuclear_rule(0.1), dim=2)
        dom = box(-1.0, 1.0, dim=2)
        stream = ProblemStream(
            horizon=5, step_at=lambda k: bad if k == 3 else good,
            domain=dom, dim=2)
        config = SolverConfig(step_size=0.5, generator=EUCLID,
                              initial_point=np.zeros(2))
        with pytest.raises(SolverRunError) as err:
            run(stream, config, zero_error_model())
        assert err.value.trace.horizon == 2
        assert err.value.trace.partial


class TestEuclideanEquivalence:
    def test_paths_agree_with_and_without_noise(self):
        for seed in range(3):
            cfg = GaussMarkovConfig(horizon=60, seed=20 + seed)
            stream, _ = generate_gauss_markov(cfg)
            config = SolverConfig(step_size=cfg.step_size, generator=EUCLID,
                                  initial_point=np.zeros(cfg.n_coeffs))
            model = ErrorModel(gradient_std=0.05, prox_std=0.05,
                               seed=30 + seed)
            mirror = run(stream, config, model)
            baseline = run_proximal_gradient(stream, config, model)
            gap = np.linalg.norm(mirror.iterates - baseline.iterates, axis=1)
            assert float(gap.max()) <= 1e-12

    def test_zero_error_static_quadratic_matches_classical_trajectory(self):
        A = np.diag([1.0, 3.0])
        c = np.array([0.5, -0.5])
        step = _quadratic_step(A, c, eta=0.1)
        stream = _static_stream(step, 50)
        config = SolverConfig(step_size=0.2, generator=EUCLID,
                              initial_point=np.ones(2))
        mirror = run(stream, config, zero_error_model())
        x = np.ones(2)
        for _ in range(50):
            v = x - 0.2 * step.smooth_gradient(x)
            x = np.sign(v) * np.maximum(np.abs(v) - 0.2 * 0.1, 0.0)
        np.testing.assert_allclose(mirror.iterates[-1], x, atol=1e-12)


class TestTraceCsv:
    def test_schema_and_17_digit_round_trip(self, tmp_path):
        cfg = GaussMarkovConfig(horizon=25, seed=8)
        stream, _ = generate_gauss_markov(cfg)
        config = SolverConfig(step_size=cfg.step_size, generator=EUCLID,
                              initial_point=np.zeros(cfg.n_coeffs))
        trace = run(stream, config, zero_error_model())
        fill_optima(trace, stream, tol=1e-9)
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("k,f_x,f_star,instant_regret,grad_error_norm,"
                            "eps,dist_to_optimum,cum_regret")
        assert len(lines) == 26
        cols = read_trace_csv(path)
        np.testing.assert_array_equal(cols["f_x"], trace.f_played)
        np.testing.assert_array_equal(cols["f_star"], trace.f_star)
        np.testing.assert_array_equal(
            cols["cum_regret"], np.cumsum(trace.f_played - trace.f_star))

    def test_requires_optima(self, tmp_path):
        step = _quadratic_step(np.eye(2), np.zeros(2))
        stream = _static_stream(step, 3)
        config = SolverConfig(step_size=0.5, generator=EUCLID,
                              initial_point=np.ones(2))
        trace = run(stream, config, zero_error_model())
        with pytest.raises(MissingOptimaError):
            write_trace_csv(trace, tmp_path / "trace.csv")
