"""The four-step straightening pipeline against closed-form oracles."""

import numpy as np
import pytest

from diracgen.calculus import OneForm, PontryaginSection, VectorField
from diracgen.errors import HypothesisViolated, InputError, NonUniqueCoefficients
from diracgen.invariant_gen import (
    FoliatedProblem,
    build_B,
    build_H,
    compute_Pi,
    beta_fields,
    fundamental_matrix,
    leaf_directional_derivative,
    run,
    solve_coefficients,
    split_tilde,
    transformed_frame,
)
from diracgen.invariant_gen import _solver
from diracgen.symexpr import Chart, parse

from conftest import make_chart, random_points


def section(chart, vec, form):
    return PontryaginSection(
        VectorField(chart, tuple(parse(c, chart) for c in vec)),
        OneForm(chart, tuple(parse(c, chart) for c in form)),
    )


@pytest.fixture
def chart3():
    return make_chart(3, k=1)


def e1_problem(chart3, **kw):
    g = section(chart3, ("0", "exp(x1)", "0"), ("0", "exp(x1)", "0"))
    return FoliatedProblem(chart=chart3, generators=(g,), **kw)


def e2_problem(chart3, **kw):
    g1 = section(chart3, ("0", "1", "0"), ("0", "0", "0"))
    g2 = section(chart3, ("0", "0", "0"), ("0", "0", "1"))
    extra = section(chart3, ("0", "x1", "0"), ("0", "0", "x1"))
    return FoliatedProblem(chart=chart3, generators=(g1, g2), extra=extra, **kw)


class TestSplitTilde:
    def test_component_split(self, chart3):
        s = section(chart3, ("1", "exp(x1)", "0"), ("0", "exp(x1)", "0"))
        leaf, tilde = split_tilde(s, 1)
        m = np.array([0.5, 0.1, -0.3])
        assert np.allclose(leaf(m), [1.0, 0.0, 0.0])
        assert np.allclose(tilde(m), [0.0, np.exp(0.5), 0.0, 0.0, np.exp(0.5), 0.0])

    def test_pure_transverse(self, chart3):
        s = section(chart3, ("0", "1", "0"), ("0", "0", "0"))
        leaf, tilde = split_tilde(s, 1)
        assert np.allclose(leaf(np.zeros(3)), 0.0)
        assert np.allclose(tilde(np.zeros(3))[:3], [0.0, 1.0, 0.0])

    def test_leaf_form_component_rejected(self, chart3):
        s = section(chart3, ("1", "0", "0"), ("1", "0", "0"))
        with pytest.raises(InputError):
            split_tilde(s, 1)


class TestSolveCoefficients:
    def test_e1_coefficients(self, chart3, rng):
        p = e1_problem(chart3)
        for m in random_points(rng, chart3, 5):
            A, Bs = solve_coefficients(p, m)
            assert np.allclose(Bs[0], [[1.0]], atol=1e-12)
            assert np.allclose(A, 0.0, atol=1e-12)

    def test_constant_generators(self, chart3):
        p = e2_problem(chart3)
        A, Bs = solve_coefficients(p, np.array([0.3, -0.2, 0.1]))
        assert np.allclose(Bs[0], 0.0)
        assert np.allclose(A, 0.0)

    def test_hypothesis_violation(self, chart3):
        g = section(chart3, ("0", "1", "x1"), ("0", "0", "0"))
        p = FoliatedProblem(chart=chart3, generators=(g,))
        with pytest.raises(HypothesisViolated) as exc:
            solve_coefficients(p, np.array([0.3, 0.0, 0.0]))
        assert exc.value.stage == "Step 1"

    def test_dependent_tilde_components(self, chart3):
        g1 = section(chart3, ("0", "exp(x1)", "0"), ("0", "0", "0"))
        g2 = section(chart3, ("0", "2*exp(x1)", "0"), ("0", "0", "0"))
        p = FoliatedProblem(chart=chart3, generators=(g1, g2))
        with pytest.raises(NonUniqueCoefficients):
            solve_coefficients(p, np.array([0.2, 0.0, 0.0]))


class TestFundamentalMatrix:
    def test_scalar_exponential(self, chart3):
        p = e1_problem(chart3)
        for x in (-0.8, 0.37, 0.9):
            W = fundamental_matrix(p, 0, np.array([x, 0.1, 0.2]))
            assert W[0, 0] == pytest.approx(np.exp(x), rel=1e-9)

    def test_zero_coefficient_gives_identity(self, chart3):
        p = e2_problem(chart3)
        W = fundamental_matrix(p, 0, np.array([0.7, 0.0, 0.0]))
        assert np.allclose(W, np.eye(2))

    def test_nilpotent_exponential(self, chart3):
        # tilde matrix T = T0 (I + x N) gives B_1 = N, so W_1 = I + x N^T
        g1 = section(chart3, ("0", "1", "0"), ("0", "0", "0"))
        g2 = section(chart3, ("0", "x1", "1"), ("0", "0", "0"))
        p = FoliatedProblem(chart=chart3, generators=(g1, g2))
        x = 0.6
        W = fundamental_matrix(p, 0, np.array([x, 0.0, 0.0]))
        assert np.allclose(W, [[1.0, 0.0], [x, 1.0]], atol=1e-9)

    def test_ode_residual_by_differences(self, chart3):
        p = e1_problem(chart3)
        solver = _solver(p)
        m = np.array([0.41, 0.1, 0.2])
        d = 1e-3
        mp, mm = m.copy(), m.copy()
        mp[0] += d
        mm[0] -= d
        fd = (solver.fundamental_matrix(0, mp) - solver.fundamental_matrix(0, mm)) / (2 * d)
        rhs = solver.B_matrix(m, 0).T @ solver.fundamental_matrix(0, m)
        assert np.abs(fd - rhs).max() < 1e-6


class TestBuildH:
    def test_k1_equals_W(self, chart3):
        p = e1_problem(chart3)
        m = np.array([0.5, -0.1, 0.3])
        assert np.allclose(build_H(p, m), fundamental_matrix(p, 0, m))

    def test_constant_generators_identity(self, chart3):
        p = e2_problem(chart3)
        assert np.allclose(build_H(p, np.array([0.4, 0.2, -0.6])), np.eye(2))

    def test_k2_commuting_diagonal(self):
        chart = make_chart(4, k=2)
        b1, b2, c1, c2 = 0.7, -0.4, -0.3, 0.5
        g1 = section(
            chart,
            ("0", "0", f"exp({b1}*x1 + {b2}*x2)", "0"),
            ("0", "0", "0", "0"),
        )
        g2 = section(
            chart,
            ("0", "0", "0", f"exp({c1}*x1 + {c2}*x2)"),
            ("0", "0", "0", "0"),
        )
        p = FoliatedProblem(chart=chart, generators=(g1, g2))
        m = np.array([0.6, -0.5, 0.1, 0.2])
        H = build_H(p, m)
        expected = np.diag(
            [np.exp(b1 * m[0] + b2 * m[1]), np.exp(c1 * m[0] + c2 * m[1])]
        )
        assert np.allclose(H, expected, atol=1e-8)

    def test_build_B_inverts_H_transpose(self, chart3, rng):
        p = e1_problem(chart3)
        for m in random_points(rng, chart3, 5):
            assert np.allclose(build_B(p, m) @ build_H(p, m).T, np.eye(1), atol=1e-10)


class TestTransformedFrame:
    def test_e1_constant_frame(self, chart3, rng):
        p = e1_problem(chart3)
        frame = transformed_frame(p)
        expected = np.array([0.0, 1.0, 0.0, 0.0, 1.0, 0.0])
        for m in random_points(rng, chart3, 8):
            assert np.allclose(frame(m).ravel(), expected, atol=1e-8)

    def test_constant_generators_unchanged(self, chart3):
        p = e2_problem(chart3)
        frame = transformed_frame(p)
        m = np.array([0.3, 0.7, -0.2])
        G = np.column_stack([g(m) for g in p.generators])
        assert np.allclose(frame(m), G)

    def test_leaf_invariance_by_differences(self, chart3, rng):
        p = e1_problem(chart3)
        frame = transformed_frame(p)
        for m in random_points(rng, chart3, 4):
            dF = leaf_directional_derivative(frame, chart3, m, 0)
            assert np.abs(dF[1:]).max() < 1e-6  # transverse and form rows


class TestBetaFields:
    def test_e2_decomposition(self, chart3):
        p = e2_problem(chart3)
        sigma, beta = beta_fields(p, np.array([0.4, 0.0, 0.0]))
        assert np.allclose(beta[0], [1.0, 1.0], atol=1e-12)
        assert np.allclose(sigma, 0.0, atol=1e-12)

    def test_constant_extra(self, chart3):
        g1 = section(chart3, ("0", "1", "0"), ("0", "0", "0"))
        g2 = section(chart3, ("0", "0", "0"), ("0", "0", "1"))
        extra = section(chart3, ("0", "2", "0"), ("0", "0", "3"))
        p = FoliatedProblem(chart=chart3, generators=(g1, g2), extra=extra)
        sigma, beta = beta_fields(p, np.array([0.1, 0.0, 0.0]))
        assert np.allclose(beta, 0.0)
        assert np.allclose(sigma, 0.0)

    def test_leaf_direction_goes_to_sigma(self, chart3):
        g1 = section(chart3, ("0", "1", "0"), ("0", "0", "0"))
        g2 = section(chart3, ("0", "0", "0"), ("0", "0", "1"))
        extra = section(chart3, ("x1", "0", "0"), ("0", "0", "0"))
        p = FoliatedProblem(chart=chart3, generators=(g1, g2), extra=extra)
        sigma, beta = beta_fields(p, np.array([0.5, 0.0, 0.0]))
        assert np.allclose(beta, 0.0, atol=1e-12)
        assert np.allclose(sigma[0], [1.0], atol=1e-12)


class TestComputePi:
    def test_e2_oracle(self, chart3, rng):
        p = e2_problem(chart3)
        for m in random_points(rng, chart3, 6):
            assert np.allclose(compute_Pi(p, m), [-m[0], -m[0]], atol=1e-9)

    def test_constant_extra_gives_zero(self, chart3):
        g1 = section(chart3, ("0", "1", "0"), ("0", "0", "0"))
        g2 = section(chart3, ("0", "0", "0"), ("0", "0", "1"))
        extra = section(chart3, ("0", "2", "0"), ("0", "0", "3"))
        p = FoliatedProblem(chart=chart3, generators=(g1, g2), extra=extra)
        assert np.allclose(compute_Pi(p, np.array([0.8, 0.1, 0.2])), 0.0)

    def test_exponential_weight(self, chart3):
        # H = e^{x1}, beta_1 = e^{-x1}: R = x1 and Pi = -x1 e^{-x1}
        g = section(chart3, ("0", "exp(x1)", "0"), ("0", "0", "0"))
        extra = section(chart3, ("0", "x1", "0"), ("0", "0", "0"))
        p = FoliatedProblem(chart=chart3, generators=(g,), extra=extra)
        x = 0.7
        Pi = compute_Pi(p, np.array([x, 0.0, 0.0]))
        assert Pi[0] == pytest.approx(-x * np.exp(-x), abs=1e-8)

    def test_zero_on_zero_slice(self, chart3):
        p = e2_problem(chart3)
        assert np.allclose(compute_Pi(p, np.array([0.0, 0.4, -0.3])), 0.0)

    def test_R_identity_by_differences(self, chart3):
        # (tilde frame) B (d_l R) equals (tilde generators) beta_l
        g = section(chart3, ("0", "exp(x1)", "0"), ("0", "0", "0"))
        extra = section(chart3, ("0", "x1*x1", "0"), ("0", "0", "0"))
        p = FoliatedProblem(chart=chart3, generators=(g,), extra=extra)
        solver = _solver(p)
        m = np.array([0.43, 0.1, -0.2])
        dR = leaf_directional_derivative(solver.R_vector, chart3, m, 0, delta=1e-3)
        T = solver.tilde_matrix(m)
        _, beta = solver.beta_sigma(m)
        lhs = T @ solver.build_B(m) @ dR
        rhs = T @ beta[0]
        assert np.allclose(lhs, rhs, atol=1e-6)


class TestCorrectedSection:
    def test_e2_combined_vanishes(self, chart3, rng):
        p = e2_problem(chart3)
        solver = _solver(p)
        for m in random_points(rng, chart3, 6):
            corr = solver.correction(m)
            assert np.allclose(corr[1], -m[0], atol=1e-9)  # -x1 on the d2 slot
            assert np.allclose(corr[5], -m[0], atol=1e-9)  # -x1 on the dx3 slot
            assert np.allclose(solver.combined(m), 0.0, atol=1e-9)

    def test_beta_zero_keeps_extra(self, chart3):
        g1 = section(chart3, ("0", "1", "0"), ("0", "0", "0"))
        g2 = section(chart3, ("0", "0", "0"), ("0", "0", "1"))
        extra = section(chart3, ("0", "2", "0"), ("0", "0", "3"))
        p = FoliatedProblem(chart=chart3, generators=(g1, g2), extra=extra)
        solver = _solver(p)
        m = np.array([0.6, 0.2, -0.1])
        assert np.allclose(solver.correction(m), 0.0)
        assert np.allclose(solver.combined(m), p.extra(m))


class TestRun:
    def test_e1_all_pass(self, chart3):
        result = run(e1_problem(chart3))
        assert result.report.passed

    def test_e2_all_pass_combined_zero(self, chart3, rng):
        result = run(e2_problem(chart3))
        assert result.report.passed
        for m in random_points(rng, chart3, 4):
            assert np.allclose(result.combined(m), 0.0, atol=1e-8)

    def test_violation_aborts_with_stage(self, chart3):
        g = section(chart3, ("0", "1", "x1"), ("0", "0", "0"))
        p = FoliatedProblem(chart=chart3, generators=(g,))
        with pytest.raises(HypothesisViolated) as exc:
            run(p)
        assert exc.value.stage == "Step 1"

    def test_k0_returns_generators(self):
        chart = make_chart(2, k=0)
        g = section(chart, ("x1", "0"), ("0", "1"))
        p = FoliatedProblem(chart=chart, generators=(g,))
        result = run(p)
        assert result.report.passed
        m = np.array([0.3, 0.4])
        assert np.allclose(result.frame(m).ravel(), g(m))


class TestLeafDirectionalDerivative:
    def test_fourth_order_accuracy(self):
        chart = make_chart(2)
        f = lambda m: np.array([np.sin(2.0 * m[0])])
        m = np.array([0.3, 0.0])
        d = leaf_directional_derivative(f, chart, m, 0)
        assert d[0] == pytest.approx(2.0 * np.cos(0.6), abs=1e-6)

    def test_probe_clamped_near_boundary(self):
        chart = make_chart(2)
        f = lambda m: np.array([m[0] ** 2])
        d = leaf_directional_derivative(f, chart, np.array([1.0, 0.0]), 0)
        # clamped to 1 - 2*delta inside the box
        delta = 0.01 * 2.0
        assert d[0] == pytest.approx(2.0 * (1.0 - 2 * delta), abs=1e-9)
