"""Generalized distributions as finite spanning families, with the
pointwise linear algebra used by every hypothesis check: numerical rank,
membership by least squares, pointwise orthogonals, and annihilators.

The smooth orthogonal is deliberately never computed as an object: it
quantifies over all smooth sections.  Only pointwise orthogonals are
available; for constant-rank subbundles the two coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import PontryaginSection, VectorField, skew_bracket
from .errors import ChartMismatchError, InputError
from .report import CheckRecord, Report, record_from_samples
from .symexpr import Chart

__all__ = [
    "GeneralizedDistribution",
    "TangentDistribution",
    "SampledSubspace",
    "rank_at",
    "contains",
    "membership_residual",
    "pointwise_orthogonal_basis",
    "annihilator_basis",
    "check_bracket_hypothesis",
    "DEFAULT_RANK_TOL",
]

DEFAULT_RANK_TOL = 1e-9


def _shared_chart(chart, generators):
    for g in generators:
        if g.chart != chart:
            raise ChartMismatchError("generator chart differs from distribution chart")
    return chart


@dataclass(frozen=True)
class GeneralizedDistribution:
    """A finite spanning family of sections of TM + T*M."""

    chart: Chart
    generators: tuple[PontryaginSection, ...]

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if not self.generators:
            raise InputError("a generalized distribution needs at least one generator")
        _shared_chart(self.chart, self.generators)

    def matrix_at(self, m) -> np.ndarray:
        """Evaluated generators as rows of a (#generators x 2n) matrix."""
        return np.array([g(m) for g in self.generators])

    def sample(self, m, tol: float = DEFAULT_RANK_TOL) -> "SampledSubspace":
        basis = self.matrix_at(m)
        return SampledSubspace(np.asarray(m, dtype=float), basis, _num_rank(basis, tol))


@dataclass(frozen=True)
class TangentDistribution:
    chart: Chart
    generators: tuple[VectorField, ...]

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        _shared_chart(self.chart, self.generators)

    def matrix_at(self, m) -> np.ndarray:
        if not self.generators:
            return np.zeros((0, self.chart.n))
        return np.array([g(m) for g in self.generators])


@dataclass(frozen=True)
class SampledSubspace:
    point: np.ndarray
    basis: np.ndarray
    rank: int


def _num_rank(matrix: np.ndarray, tol: float) -> int:
    if matrix.size == 0:
        return 0
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def rank_at(delta: GeneralizedDistribution, m, tol: float = DEFAULT_RANK_TOL) -> int:
    """Numerical rank of the evaluated generator family at m."""
    return _num_rank(delta.matrix_at(m), tol)


def membership_residual(delta: GeneralizedDistribution, m, v) -> float:
    """Least-squares residual of expressing the 2n-vector v in the
    evaluated generators at m."""
    A = delta.matrix_at(m).T
    v = np.asarray(v, dtype=float)
    coeff, *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(np.linalg.norm(A @ coeff - v))


def contains(delta: GeneralizedDistribution, m, v, tol: float) -> bool:
    """True iff v lies in the pointwise span of the generators at m, with
    residual tolerance tol*(1 + |v|)."""
    v = np.asarray(v, dtype=float)
    return membership_residual(delta, m, v) <= tol * (1.0 + np.linalg.norm(v))


def _null_space(matrix: np.ndarray, dim: int, tol: float) -> list[np.ndarray]:
    if matrix.shape[0] == 0:
        return [row for row in np.eye(dim)]
    _, sv, vt = np.linalg.svd(matrix)
    scale = sv[0] if sv.size and sv[0] > 0 else 1.0
    rank = int(np.sum(sv > tol * scale))
    return [vt[i] for i in range(rank, dim)]


def pointwise_orthogonal_basis(
    delta: GeneralizedDistribution, m, tol: float = DEFAULT_RANK_TOL
) -> list[np.ndarray]:
    """Basis of the fiberwise orthogonal of the span at m, relative to the
    pairing <(u, a), (v, b)> = b(u) + a(v).

    The pairing of w = (w_v, w_f) with a generator value g = (g_v, g_f)
    is g_f . w_v + g_v . w_f, so the constraint matrix is the generator
    matrix with its vector and form blocks swapped.
    """
    n = delta.chart.n
    G = delta.matrix_at(m)
    swapped = np.hstack([G[:, n:], G[:, :n]])
    return _null_space(swapped, 2 * n, tol)


def annihilator_basis(
    T: TangentDistribution, m, tol: float = DEFAULT_RANK_TOL
) -> list[np.ndarray]:
    """Basis of the covectors annihilating all generator values at m.
    Caller asserts locally constant rank of T near m."""
    return _null_space(T.matrix_at(m), T.chart.n, tol)


def check_bracket_hypothesis(
    D: GeneralizedDistribution,
    Theta: GeneralizedDistribution,
    extra: PontryaginSection | None,
    samples,
    tol: float,
) -> Report:
    """Verify the two bracket hypotheses of the invariant-frame theorem:
    brackets of D generators (and of the optional extra section) with
    Theta generators must lie in the span of Theta + D at every sample.

    Failures are report entries, not exceptions.
    """
    span = GeneralizedDistribution(D.chart, Theta.generators + D.generators)
    report = Report()

    def run_pairs(sections, check_name):
        for i, sec in enumerate(sections):
            for l, theta in enumerate(Theta.generators):
                bracket = skew_bracket(theta, sec)
                pairs = []
                for m in samples:
                    v = bracket(m)
                    pairs.append((membership_residual(span, m, v) / (1.0 + np.linalg.norm(v)), m))
                report.add(
                    record_from_samples(
                        f"{check_name}[{i},{l}]",
                        pairs,
                        tol,
                        detail="bracket of generator with leaf field stays in leaf+distribution span",
                    )
                )

    run_pairs(D.generators, "bracket-hypothesis-generators")
    if extra is not None:
        run_pairs([extra], "bracket-hypothesis-extra")
    return report
