"""Shared helpers: random expression and section corpora for the
bracket-identity suites."""

import numpy as np
import pytest

from diracgen.calculus import OneForm, PontryaginSection, VectorField
from diracgen.symexpr import Chart, Const, Var, cos, exp, sin


def make_chart(n: int, k: int = 0, box=None) -> Chart:
    names = tuple(f"x{i+1}" for i in range(n))
    if box is None:
        return Chart(coord_names=names, leaf_count=k)
    return Chart(coord_names=names, leaf_count=k, box=tuple(box))


def random_expr(rng: np.random.Generator, chart: Chart, depth: int = 2):
    """Random polynomial/exp/trig expression with small coefficients, so
    evaluations on the unit box stay well scaled."""
    choice = rng.integers(0, 6 if depth > 0 else 3)
    if choice == 0:
        return Const(float(rng.integers(-3, 4)))
    if choice == 1:
        i = int(rng.integers(0, chart.n))
        return Var(i, chart.coord_names[i])
    if choice == 2:
        i = int(rng.integers(0, chart.n))
        j = int(rng.integers(0, chart.n))
        return Var(i, chart.coord_names[i]) * Var(j, chart.coord_names[j])
    if choice == 3:
        return random_expr(rng, chart, depth - 1) + random_expr(rng, chart, depth - 1)
    if choice == 4:
        return random_expr(rng, chart, depth - 1) * random_expr(rng, chart, depth - 1)
    fn = (sin, cos, exp)[int(rng.integers(0, 3))]
    i = int(rng.integers(0, chart.n))
    return fn(Const(0.5) * Var(i, chart.coord_names[i]))


def random_vector_field(rng, chart: Chart, depth: int = 2) -> VectorField:
    return VectorField(chart, tuple(random_expr(rng, chart, depth) for _ in range(chart.n)))


def random_one_form(rng, chart: Chart, depth: int = 2, annihilate: int = 0) -> OneForm:
    coeffs = [random_expr(rng, chart, depth) for _ in range(chart.n)]
    for j in range(annihilate):
        coeffs[j] = Const(0.0)
    return OneForm(chart, tuple(coeffs))


def random_section(rng, chart: Chart, depth: int = 2, annihilate: int = 0) -> PontryaginSection:
    return PontryaginSection(
        random_vector_field(rng, chart, depth),
        random_one_form(rng, chart, depth, annihilate),
    )


def random_points(rng, chart: Chart, count: int) -> list:
    lo = np.array([b[0] for b in chart.box])
    hi = np.array([b[1] for b in chart.box])
    return [lo + (hi - lo) * rng.random(chart.n) for _ in range(count)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
