import numpy as np
import pytest

from semilin.elliptic import assemble
from semilin.fixed_point import (
    SolverOptions,
    apply_T,
    newton_solve,
    picard_solve,
    write_residual_history,
)
from semilin.grid import BoxDomain, GridField, restrict, sup_norm
from semilin.nonlinearity import truncate


@pytest.fixture(scope="module")
def fine_reference(cubic):
    """Newton solution at n = 4096, residual tolerance relaxed to the roundoff floor."""
    A = assemble(BoxDomain((1.0,), (4096,)), 1.0)
    u, rep = newton_solve(A, truncate(cubic), SolverOptions(tol_residual=1e-7))
    assert rep.converged
    return u


def test_options_validation():
    for bad in ({"theta": 0.0}, {"theta": 1.5}, {"tol_update": 0.0}, {"anderson_depth": -1}, {"max_iter": 0}):
        with pytest.raises(ValueError):
            SolverOptions(**bad)


def test_apply_T_zero_truncation(line128, truncated):
    F = truncated["sinh"]
    u = GridField(line128.domain, np.random.default_rng(0).uniform(-3, 3, line128.size))
    assert sup_norm(apply_T(line128, F, u)) == 0.0


def test_apply_T_at_zero_is_constant_solve(truncated):
    d = BoxDomain((1.0,), (256,))
    A = assemble(d, 1.0)
    Tu = apply_T(A, truncated["cubic_shift"], GridField.zeros(d))
    assert Tu.values[127] == pytest.approx(0.113181, abs=1e-4)


@pytest.mark.parametrize("label", ["cubic_shift", "exp_shift", "cubic_step"])
def test_apply_T_stays_in_ball(line128, truncated, label):
    F = truncated[label]
    rng = np.random.default_rng(11)
    for _ in range(20):
        u = GridField(line128.domain, rng.uniform(-50, 50, line128.size))
        assert sup_norm(apply_T(line128, F, u)) <= F.mu / line128.k**2 + 1e-8


def test_sinh_converges_to_zero_immediately(line128, truncated):
    u, rep = picard_solve(line128, truncated["sinh"])
    assert rep.converged
    assert rep.iterations <= 2
    assert rep.final_residual == 0.0
    assert sup_norm(u) == 0.0


def test_cubic_shift_midpoint_against_fine_newton(line128, truncated, fine_reference):
    u, rep = picard_solve(line128, truncated["cubic_shift"])
    assert rep.converged
    assert u.values[63] == pytest.approx(fine_reference.values[2047], abs=1e-3)
    assert u.values[63] == pytest.approx(0.1130, abs=1e-3)


def test_exp_shift_range(line128, truncated):
    u, rep = picard_solve(line128, truncated["exp_shift"])
    assert rep.converged
    assert u.values.min() >= 0.0
    assert u.values.max() <= np.log(2.0)


def test_cubic_step_self_consistent_under_refinement(truncated):
    F = truncated["cubic_step"]
    coarse = BoxDomain((1.0,), (128,))
    uc, rc = picard_solve(assemble(coarse, 1.0), F)
    uf, rf = picard_solve(assemble(coarse.refine(2), 1.0), F)
    assert rc.converged and rf.converged
    assert rc.final_residual <= 1e-8
    assert sup_norm(uc) <= 1.0
    # second-order agreement at common nodes
    assert sup_norm(uc - restrict(uf, coarse)) < 10 * coarse.h_max**2


@pytest.mark.parametrize("label", ["cubic_shift", "exp_shift", "cubic_step"])
def test_anderson_agrees_with_plain_picard(line128, truncated, label):
    F = truncated[label]
    u0, r0 = picard_solve(line128, F)
    u3, r3 = picard_solve(line128, F, SolverOptions(anderson_depth=3))
    assert r0.converged and r3.converged
    assert r3.iterations < r0.iterations
    assert sup_norm(u0 - u3) < 1e-9


def test_newton_agrees_with_picard(line128, truncated):
    F = truncated["cubic_shift"]
    up, rp = picard_solve(line128, F)
    un, rn = newton_solve(line128, F)
    assert rp.converged and rn.converged
    assert sup_norm(up - un) <= 1e-8


def test_newton_finite_difference_derivative(line128, cubic):
    from semilin.nonlinearity import Nonlinearity

    bare = truncate(Nonlinearity(1.0, lambda u: u**3 - 1.0))
    un, rn = newton_solve(line128, bare)
    ur, rr = newton_solve(line128, truncate(cubic))
    assert rn.converged
    assert sup_norm(un - ur) < 1e-9


def test_newton_rejects_discontinuous(line128, truncated):
    with pytest.raises(NotImplementedError):
        newton_solve(line128, truncated["cubic_step"])


def test_newton_zero_nonlinearity(line128, truncated):
    u, rep = newton_solve(line128, truncated["sinh"])
    assert rep.converged and rep.iterations == 1
    assert sup_norm(u) == 0.0


def test_reported_convergence_is_honest(line128, truncated):
    for label in ("cubic_shift", "exp_shift", "cubic_step"):
        F = truncated[label]
        opts = SolverOptions()
        u, rep = picard_solve(line128, F, opts)
        assert rep.converged
        # recompute independently of the solver's bookkeeping
        r = line128.matrix @ u.values + F(u.values)
        assert np.max(np.abs(r)) <= opts.tol_residual
        assert rep.final_update <= opts.tol_update
        assert sup_norm(u - apply_T(line128, F, u)) <= 10 * opts.tol_update


def test_max_iter_reached_is_reported(line128, truncated):
    u, rep = picard_solve(line128, truncated["cubic_shift"], SolverOptions(max_iter=3))
    assert rep.status == "max_iter_reached"
    assert rep.iterations == 3
    assert len(rep.residual_history) == 4


def test_divergence_is_a_status_not_an_exception(line128):
    def explosive(u):
        return -np.exp(50.0 * u)

    with np.errstate(over="ignore", invalid="ignore"):
        u, rep = picard_solve(line128, explosive, SolverOptions(theta=1.0))
    assert rep.status == "diverged"
    assert rep.mu is None


def test_theta_halves_on_residual_growth(line128):
    # an oscillating linear map: T(u) = -2 A^{-1} (c u - 1) overshoots at theta = 1
    c = 40.0

    def F(u):
        return c * u - 1.0

    u, rep = picard_solve(line128, F, SolverOptions(theta=1.0, max_iter=200))
    assert rep.converged
    assert min(rep.theta_trace) < 1.0
    assert min(rep.theta_trace) >= 1.0 / 64


def test_truncation_equivalence(line128, cubic, truncated):
    F = truncated["cubic_shift"]
    uF, rF = picard_solve(line128, F)
    assert sup_norm(uF) <= F.a - line128.domain.h_max**2
    ur, rr = picard_solve(line128, cubic)
    assert rr.converged
    assert sup_norm(uF - ur) <= 1e-9


def test_initial_guess_variants(line128, truncated):
    F = truncated["cubic_shift"]
    ref, _ = picard_solve(line128, F)
    for guess in (0.5, GridField.constant(line128.domain, -0.2), np.full(line128.size, 0.9)):
        u, rep = picard_solve(line128, F, SolverOptions(initial_guess=guess))
        assert rep.converged
        assert sup_norm(u - ref) < 1e-9
    with pytest.raises(ValueError):
        picard_solve(line128, F, SolverOptions(initial_guess=np.zeros(5)))


def test_two_dimensional_solve(truncated):
    A = assemble(BoxDomain((1.0, 2.0), (24, 40)), 1.5)
    u, rep = picard_solve(A, truncated["cubic_step"])
    assert rep.converged
    assert 0 < sup_norm(u) <= 1.0


def test_determinism(line128, truncated):
    F = truncated["cubic_step"]
    opts = SolverOptions(anderson_depth=3)
    u1, r1 = picard_solve(line128, F, opts)
    u2, r2 = picard_solve(line128, F, opts)
    assert u1.values.tobytes() == u2.values.tobytes()
    assert r1.to_dict() == r2.to_dict()


def test_residual_history_csv(tmp_path, line128, truncated):
    _, rep = picard_solve(line128, truncated["cubic_shift"])
    path = write_residual_history(rep, tmp_path / "res.csv")
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert open(path).readline().strip() == "iteration,residual"
    np.testing.assert_array_equal(data[:, 0], np.arange(len(rep.residual_history)))
    np.testing.assert_array_equal(data[:, 1], rep.residual_history)
