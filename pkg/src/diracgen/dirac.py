"""Dirac structures and regular reduction on explicit charts.

Covers: graphs of Poisson bivectors, Lagrangian/closedness certification,
vertical distributions of infinitesimal actions, the pointwise
intersection of a Dirac structure with the orthogonal of the vertical
block, descending (push-forwardable) generators via the straightening
construction, invariant annihilator frames, and the pushforward check
certifying the reduced structure on a user-supplied quotient chart.

Everything pointwise is sampled evidence, not proof: a pass certifies the
checked properties at the sample set to the stated tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .calculus import (
    OneForm,
    PontryaginSection,
    VectorField,
    courant_bracket,
    lie_bracket,
    pairing,
)
from .distribution import (
    DEFAULT_RANK_TOL,
    GeneralizedDistribution,
    TangentDistribution,
    annihilator_basis,
    membership_residual,
    rank_at,
)
from .errors import InputError, VerificationError
from .invariant_gen import (
    FoliatedProblem,
    InvariantFrameResult,
    leaf_directional_derivative,
    run,
)
from .report import CheckRecord, Report, record_from_samples
from .symexpr import ZERO, Chart, Expr, _coerce

__all__ = [
    "DiracStructure",
    "PoissonBivector",
    "InfinitesimalAction",
    "QuotientMap",
    "graph_of_poisson",
    "is_closed",
    "characteristic_distributions",
    "vertical_and_K",
    "intersect_D_Kperp",
    "constant_rank_scan",
    "descending_generators",
    "invariant_annihilator_generators",
    "pushforward_check",
    "push_frame",
]


@dataclass(frozen=True)
class DiracStructure:
    """A Lagrangian subbundle presented by exactly n spanning sections."""

    chart: Chart
    generators: tuple[PontryaginSection, ...]

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if len(self.generators) != self.chart.n:
            raise InputError(
                f"a Dirac structure on a {self.chart.n}-dimensional chart needs exactly "
                f"{self.chart.n} generators, got {len(self.generators)}"
            )
        for g in self.generators:
            if g.chart != self.chart:
                raise InputError("generator chart differs from Dirac structure chart")

    def as_distribution(self) -> GeneralizedDistribution:
        return GeneralizedDistribution(self.chart, self.generators)

    def matrix_at(self, m) -> np.ndarray:
        """Evaluated generators as columns of a 2n x n matrix."""
        return np.column_stack([g(m) for g in self.generators])

    def validate(self, samples=None, tol: float = 1e-9) -> Report:
        """Certify rank n and pairwise isotropy of the generators at the
        samples; together these make the span Lagrangian."""
        if samples is None:
            samples = self.chart.sample_points()
        report = Report()
        dist = self.as_distribution()
        rank_pairs = [
            (0.0 if rank_at(dist, m, tol) == self.chart.n else 1.0, m) for m in samples
        ]
        report.add(record_from_samples("lagrangian-rank", rank_pairs, 0.0,
                                       detail=f"rank equals chart dimension {self.chart.n}"))
        iso = []
        exprs = [
            pairing(a, b)
            for i, a in enumerate(self.generators)
            for b in self.generators[i:]
        ]
        for m in samples:
            worst = max(abs(e.eval(m)) for e in exprs)
            iso.append((worst, m))
        report.add(record_from_samples("lagrangian-isotropy", iso, tol))
        return report


@dataclass(frozen=True)
class PoissonBivector:
    chart: Chart
    components: tuple[tuple[Expr, ...], ...]

    def __post_init__(self):
        n = self.chart.n
        rows = tuple(tuple(_coerce(c) for c in row) for row in self.components)
        if len(rows) != n or any(len(row) != n for row in rows):
            raise InputError(f"bivector components must form an {n} x {n} matrix")
        object.__setattr__(self, "components", rows)

    def antisymmetry_residual(self, samples) -> float:
        worst = 0.0
        n = self.chart.n
        for m in samples:
            M = np.array([[c.eval(m) for c in row] for row in self.components])
            worst = max(worst, float(np.abs(M + M.T).max()))
        return worst

    def sharp(self, alpha: OneForm) -> VectorField:
        """The anchor map: (sharp alpha)^i = sum_j pi^{ij} alpha_j, so that
        sharp(df) is the Hamiltonian vector field {f, .}."""
        coeffs = []
        for i in range(self.chart.n):
            c = ZERO
            for j in range(self.chart.n):
                c = c + self.components[i][j] * alpha.coeffs[j]
            coeffs.append(c)
        return VectorField(self.chart, tuple(coeffs))


@dataclass(frozen=True)
class InfinitesimalAction:
    """Generators of a Lie algebra action; optional structure constants
    c[a][b][d] for the expansion of [xi_a, xi_b] over the generators (with
    the anti-homomorphism sign: [xi_a, xi_b]_M + sum_d c_ab^d xi_d,M = 0)."""

    chart: Chart
    generators: tuple[VectorField, ...]
    structure_constants: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        for g in self.generators:
            if g.chart != self.chart:
                raise InputError("action generator chart differs from action chart")

    @property
    def dim(self) -> int:
        return len(self.generators)

    def validate(self, samples=None, tol: float = 1e-9) -> Report:
        report = Report()
        if self.structure_constants is None or not self.generators:
            return report
        if samples is None:
            samples = self.chart.sample_points()
        c = self.structure_constants
        pairs = []
        for a, xa in enumerate(self.generators):
            for b, xb in enumerate(self.generators):
                residual = lie_bracket(xa, xb)
                for d, xd in enumerate(self.generators):
                    residual = residual + float(c[a][b][d]) * xd
                for m in samples:
                    pairs.append((float(np.abs(residual(m)).max(initial=0.0)), m))
        report.add(record_from_samples("action-anti-homomorphism", pairs, tol))
        return report


@dataclass(frozen=True)
class QuotientMap:
    """Explicit submersion onto a lower-dimensional target chart, constant
    along the vertical distribution."""

    source: Chart
    target: Chart
    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(_coerce(c) for c in self.components)
        if len(comps) != self.target.n:
            raise InputError(
                f"quotient map needs {self.target.n} components, got {len(comps)}"
            )
        object.__setattr__(self, "components", comps)

    def __call__(self, m) -> np.ndarray:
        return np.array([c.eval(m) for c in self.components])

    def jacobian(self, m) -> np.ndarray:
        return np.array(
            [[c.diff(j).eval(m) for j in range(self.source.n)] for c in self.components]
        )

    def validate(self, action: InfinitesimalAction, samples=None, tol: float = 1e-7) -> Report:
        if samples is None:
            samples = self.source.sample_points()
        report = Report()
        rank_pairs = []
        vert_pairs = []
        for m in samples:
            J = self.jacobian(m)
            sv = np.linalg.svd(J, compute_uv=False)
            rank_pairs.append(
                (0.0 if sv.size and sv[-1] > DEFAULT_RANK_TOL * sv[0] else 1.0, m)
            )
            worst = 0.0
            for xi in action.generators:
                worst = max(worst, float(np.abs(J @ xi(m)).max(initial=0.0)))
            vert_pairs.append((worst, m))
        report.add(record_from_samples("quotient-submersion-rank", rank_pairs, 0.0))
        report.add(record_from_samples("quotient-constant-on-fibers", vert_pairs, tol))
        return report


def graph_of_poisson(pi: PoissonBivector, samples=None, tol: float = 1e-9) -> DiracStructure:
    """Dirac structure spanned by (sharp dx^j, dx^j) for each coordinate."""
    if samples is None:
        samples = pi.chart.sample_points()
    residual = pi.antisymmetry_residual(samples)
    if residual > tol:
        raise InputError(f"bivector is not antisymmetric (residual {residual:.3e})")
    gens = []
    for j in range(pi.chart.n):
        dxj = OneForm.coordinate(pi.chart, j)
        gens.append(PontryaginSection(pi.sharp(dxj), dxj))
    return DiracStructure(pi.chart, tuple(gens))


def is_closed(D: DiracStructure, samples=None, tol: float = 1e-7) -> Report:
    """Sampled closure test: all pairwise Courant brackets of the
    generators stay in the pointwise span."""
    if samples is None:
        samples = D.chart.sample_points()
    dist = D.as_distribution()
    report = Report()
    for i, a in enumerate(D.generators):
        for j, b in enumerate(D.generators):
            if i == j:
                continue
            bracket = courant_bracket(a, b)
            pairs = []
            for m in samples:
                v = bracket(m)
                pairs.append(
                    (membership_residual(dist, m, v) / (1.0 + np.linalg.norm(v)), m)
                )
            report.add(record_from_samples(f"courant-closure[{i},{j}]", pairs, tol))
    return report


def _column_space(M: np.ndarray, tol: float) -> list[np.ndarray]:
    if M.size == 0:
        return []
    u, sv, _ = np.linalg.svd(M)
    scale = sv[0] if sv.size and sv[0] > 0 else 1.0
    rank = int(np.sum(sv > tol * scale))
    return [u[:, i] for i in range(rank)]


def _null_space_cols(M: np.ndarray, dim: int, tol: float) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(dim)
    _, sv, vt = np.linalg.svd(M, full_matrices=True)
    scale = sv[0] if sv.size and sv[0] > 0 else 1.0
    rank = int(np.sum(sv > tol * scale))
    return vt[rank:].T


def characteristic_distributions(D: DiracStructure, m, tol: float = DEFAULT_RANK_TOL):
    """Pointwise bases of the four characteristic spaces: vectors paired
    with zero form (G0), all reachable vectors (G1), and the analogous
    cotangent spaces (P0, P1)."""
    n = D.chart.n
    M = D.matrix_at(m)
    top, bottom = M[:n], M[n:]
    G1 = _column_space(top, tol)
    P1 = _column_space(bottom, tol)
    G0 = [top @ c for c in _null_space_cols(bottom, n, tol).T]
    P0 = [bottom @ c for c in _null_space_cols(top, n, tol).T]
    G0 = [v for v in G0 if np.linalg.norm(v) > tol]
    P0 = [v for v in P0 if np.linalg.norm(v) > tol]
    return G0, G1, P0, P1


def vertical_and_K(action: InfinitesimalAction):
    """The vertical distribution V, the block K = V + {0}, and a pointwise
    basis map for the annihilator of V (the form condition cutting out the
    orthogonal of K)."""
    chart = action.chart
    V = TangentDistribution(chart, action.generators)
    if action.generators:
        K_gens = tuple(PontryaginSection.from_vector(x) for x in action.generators)
    else:
        K_gens = (PontryaginSection.zero(chart),)
    K = GeneralizedDistribution(chart, K_gens)

    def vperp_basis(m, tol=DEFAULT_RANK_TOL):
        return annihilator_basis(V, m, tol)

    return V, K, vperp_basis


def intersect_D_Kperp(
    D: DiracStructure, action: InfinitesimalAction, m, tol: float = DEFAULT_RANK_TOL
):
    """Pointwise basis of the subspace of D(m) whose form part annihilates
    the vertical space; returns (basis columns, rank)."""
    n = D.chart.n
    M = D.matrix_at(m)
    bottom = M[n:]
    rows = np.array([xi(m) @ bottom for xi in action.generators]) if action.generators else np.zeros((0, n))
    N = _null_space_cols(rows, n, tol)
    basis = M @ N
    return [basis[:, i] for i in range(basis.shape[1])], basis.shape[1]


def constant_rank_scan(
    D: DiracStructure, action: InfinitesimalAction, samples, tol: float = DEFAULT_RANK_TOL
):
    """Scan the rank of the D / vertical-orthogonal intersection over the
    samples.  Returns (record, ranks); on failure the record's detail names
    two witness points with different ranks."""
    ranks = []
    for m in samples:
        _, rank = intersect_D_Kperp(D, action, m, tol)
        ranks.append((list(map(float, m)), rank))
    values = {rank for _, rank in ranks}
    if len(values) <= 1:
        record = CheckRecord(
            check="constant-rank-intersection",
            passed=True,
            detail=f"rank {ranks[0][1]} at all {len(ranks)} samples",
        )
    else:
        lo = min(values)
        hi = max(values)
        p_lo = next(p for p, rank in ranks if rank == lo)
        p_hi = next(p for p, rank in ranks if rank == hi)
        record = CheckRecord(
            check="constant-rank-intersection",
            passed=False,
            worst_residual=float(hi - lo),
            failing_point=p_lo,
            detail=f"rank {lo} at {p_lo} but rank {hi} at {p_hi}",
        )
    return record, ranks


def _fd_gradient(fn, chart: Chart, m):
    """All coordinate derivatives of a point evaluator, by fourth-order
    central differences; returns a list indexed by coordinate."""
    return [leaf_directional_derivative(fn, chart, m, i) for i in range(chart.n)]


def _numeric_lie_form(xi: VectorField, form_at, chart: Chart, m) -> np.ndarray:
    """(L_xi gamma)_j = sum_i xi^i d_i(gamma_j) + gamma_i d_j(xi^i) for a
    numerically evaluated form field gamma."""
    xi_val = xi(m)
    gamma = form_at(m)
    grads = _fd_gradient(form_at, chart, m)
    n = chart.n
    out = np.zeros(n)
    for j in range(n):
        out[j] = sum(xi_val[i] * grads[i][j] for i in range(n)) + sum(
            gamma[i] * xi.coeffs[i].diff(j).eval(m) for i in range(n)
        )
    return out


def _numeric_bracket_with_field(Z_at, xi: VectorField, chart: Chart, m) -> np.ndarray:
    """[Z, xi]^j = sum_a Z^a d_a(xi^j) - xi^a d_a(Z^j) for a numerically
    evaluated vector field Z."""
    Z = Z_at(m)
    xi_val = xi(m)
    grads = _fd_gradient(Z_at, chart, m)
    n = chart.n
    out = np.zeros(n)
    for j in range(n):
        out[j] = sum(Z[a] * xi.coeffs[j].diff(a).eval(m) for a in range(n)) - sum(
            xi_val[a] * grads[a][j] for a in range(n)
        )
    return out


def _check_foliated_presentation(action: InfinitesimalAction, problem: FoliatedProblem, samples):
    """The chart must present the vertical distribution as the span of the
    first k coordinate fields."""
    k = problem.k
    for m in samples[: min(len(samples), 8)]:
        vals = np.array([xi(m) for xi in action.generators])
        if vals.size == 0:
            if k != 0:
                raise InputError("action has no generators but the chart declares leaves")
            return
        transverse = float(np.abs(vals[:, k:]).max(initial=0.0))
        if transverse > 1e-9 * (1.0 + np.abs(vals).max()):
            raise InputError(
                "chart is not foliated for this action: a generator has components "
                f"beyond the leaf block at {list(m)}"
            )
        sv = np.linalg.svd(vals[:, :k], compute_uv=False)
        if int(np.sum(sv > DEFAULT_RANK_TOL * max(sv[0], 1e-300))) != k:
            raise InputError(
                f"action generators do not span the leaf block at {list(m)}"
            )


def descending_generators(
    D: DiracStructure,
    action: InfinitesimalAction,
    problem: FoliatedProblem,
    samples=None,
    tol: float | None = None,
) -> InvariantFrameResult:
    """Straighten a user-supplied spanning family of the D / vertical-
    orthogonal intersection into descending generators, and verify the
    descending-section conditions: invariance of the frame forms under the
    action generators, and stability of the vertical distribution under
    brackets with the frame vectors."""
    tol = problem.tol if tol is None else tol
    if samples is None:
        samples = problem.chart.sample_points(margin=0.1)
    _check_foliated_presentation(action, problem, samples)
    n, k = problem.n, problem.k

    dist = D.as_distribution()
    supplied = GeneralizedDistribution(problem.chart, problem.generators)
    member_pairs = []
    span_pairs = []
    for m in samples:
        worst = 0.0
        for g in problem.generators:
            v = g(m)
            worst = max(worst, membership_residual(dist, m, v) / (1.0 + np.linalg.norm(v)))
            form = v[n:]
            for xi in action.generators:
                worst = max(worst, abs(float(form @ xi(m))) / (1.0 + np.linalg.norm(v)))
        member_pairs.append((worst, m))
        basis, rank = intersect_D_Kperp(D, action, m)
        worst_span = 0.0 if rank == len(problem.generators) else 1.0
        for w in basis:
            worst_span = max(
                worst_span, membership_residual(supplied, m, w) / (1.0 + np.linalg.norm(w))
            )
        span_pairs.append((worst_span, m))

    result = run(problem, samples=samples, tol=tol)
    result.report.add(
        record_from_samples("supplied-family-in-intersection", member_pairs, tol)
    )
    result.report.add(
        record_from_samples("supplied-family-spans-intersection", span_pairs, tol)
    )

    frame = result.frame
    for idx_xi, xi in enumerate(action.generators):
        pairs_form = []
        pairs_vf = []
        for m in samples:
            F = frame(m)
            scale = 1.0 + float(np.abs(F).max(initial=0.0))
            worst_form = 0.0
            worst_vf = 0.0
            for col in range(F.shape[1]):
                form_at = lambda q, c=col: frame(q)[n:, c]
                vf_at = lambda q, c=col: frame(q)[:n, c]
                worst_form = max(
                    worst_form,
                    float(np.abs(_numeric_lie_form(xi, form_at, problem.chart, m)).max(initial=0.0)),
                )
                bracket = _numeric_bracket_with_field(vf_at, xi, problem.chart, m)
                # vertical means: no components beyond the leaf block
                worst_vf = max(worst_vf, float(np.abs(bracket[k:]).max(initial=0.0)))
            pairs_form.append((worst_form / scale, m))
            pairs_vf.append((worst_vf / scale, m))
        result.report.add(
            record_from_samples(f"frame-forms-action-invariant[{idx_xi}]", pairs_form, tol)
        )
        result.report.add(
            record_from_samples(f"frame-vectors-preserve-vertical[{idx_xi}]", pairs_vf, tol)
        )
    return result


def invariant_annihilator_generators(
    action: InfinitesimalAction,
    problem: FoliatedProblem,
    samples=None,
    tol: float | None = None,
) -> InvariantFrameResult:
    """Straighten a supplied spanning family of the vertical annihilator
    (sections with zero vector part) into action-invariant forms."""
    tol = problem.tol if tol is None else tol
    if samples is None:
        samples = problem.chart.sample_points(margin=0.1)
    _check_foliated_presentation(action, problem, samples)
    n = problem.n
    for g in problem.generators:
        if any(c != ZERO for c in g.vf.coeffs):
            probe = samples[0]
            if float(np.abs(g.vf(probe)).max(initial=0.0)) > 1e-12:
                raise InputError("annihilator generators must have zero vector part")
    result = run(problem, samples=samples, tol=tol)
    frame = result.frame
    for idx_xi, xi in enumerate(action.generators):
        pairs = []
        for m in samples:
            F = frame(m)
            scale = 1.0 + float(np.abs(F).max(initial=0.0))
            worst = 0.0
            for col in range(F.shape[1]):
                form_at = lambda q, c=col: frame(q)[n:, c]
                worst = max(
                    worst,
                    float(np.abs(_numeric_lie_form(xi, form_at, problem.chart, m)).max(initial=0.0)),
                )
            pairs.append((worst / scale, m))
        result.report.add(
            record_from_samples(f"annihilator-frame-action-invariant[{idx_xi}]", pairs, tol)
        )
    return result


class _Lift:
    """Numerically invert a quotient map near a reference source point."""

    def __init__(self, q: QuotientMap, reference: np.ndarray):
        self.q = q
        self.reference = np.asarray(reference, dtype=float)
        self._cache: dict = {}

    def __call__(self, ybar) -> np.ndarray:
        key = tuple(np.round(np.asarray(ybar, dtype=float), 12))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        lo = [b[0] for b in self.q.source.box]
        hi = [b[1] for b in self.q.source.box]
        sol = least_squares(
            lambda x: self.q(x) - np.asarray(ybar, dtype=float),
            self.reference,
            bounds=(lo, hi),
            xtol=1e-14,
            ftol=1e-14,
            gtol=1e-14,
        )
        residual = np.linalg.norm(self.q(sol.x) - np.asarray(ybar, dtype=float))
        if residual > 1e-8:
            raise VerificationError(
                f"could not lift target point {list(ybar)} through the quotient map "
                f"(residual {residual:.3e})"
            )
        self._cache[key] = sol.x
        return sol.x


def push_frame(q: QuotientMap, frame, m, tol: float):
    """Push one frame value through the quotient map: target vectors are
    Jacobian images, target forms solve the pull-back equations by least
    squares.  Returns (target vectors, target forms, worst pull-back
    residual)."""
    n = q.source.n
    F = np.asarray(frame(m), dtype=float)
    J = q.jacobian(m)
    Xbar = J @ F[:n]
    abar = np.zeros((q.target.n, F.shape[1]))
    worst = 0.0
    for i in range(F.shape[1]):
        gamma = F[n:, i]
        sol, *_ = np.linalg.lstsq(J.T, gamma, rcond=None)
        worst = max(worst, float(np.linalg.norm(J.T @ sol - gamma)) / (1.0 + np.linalg.norm(gamma)))
        abar[:, i] = sol
    return Xbar, abar, worst


def pushforward_check(
    D: DiracStructure,
    action: InfinitesimalAction,
    q: QuotientMap,
    frame,
    samples=None,
    tol: float = 1e-6,
    n_fiber_pairs: int = 10,
    seed: int = 0,
    check_closedness: bool = True,
) -> Report:
    """Certify the reduced structure: frame forms are pull-backs, pushed
    values are constant on fibers, the pushed family has target rank and
    is isotropic, and (when requested) target Courant brackets of the
    pushed sections stay in their span."""
    if isinstance(frame, InvariantFrameResult):
        frame = frame.frame
    chart = q.source
    if samples is None:
        samples = chart.sample_points(margin=0.1)
    report = Report()
    nbar = q.target.n

    basic_pairs = []
    rank_pairs = []
    iso_pairs = []
    pushed_at = {}
    for m in samples:
        Xbar, abar, residual = push_frame(q, frame, m, tol)
        basic_pairs.append((residual, m))
        stacked = np.vstack([Xbar, abar])
        sv = np.linalg.svd(stacked, compute_uv=False)
        rank = int(np.sum(sv > DEFAULT_RANK_TOL * max(sv[0], 1e-300))) if sv.size else 0
        rank_pairs.append((0.0 if rank == nbar else 1.0, m))
        worst = 0.0
        for i in range(stacked.shape[1]):
            for j in range(stacked.shape[1]):
                val = abar[:, j] @ Xbar[:, i] + abar[:, i] @ Xbar[:, j]
                worst = max(worst, abs(float(val)))
        iso_pairs.append((worst, m))
        pushed_at[tuple(m)] = stacked
    report.add(record_from_samples("pushed-forms-are-pullbacks", basic_pairs, tol))
    report.add(
        record_from_samples(
            "reduced-rank", rank_pairs, 0.0, detail=f"pushed family has rank {nbar}"
        )
    )
    report.add(record_from_samples("reduced-isotropy", iso_pairs, tol))

    # fiber consistency: perturb leaf coordinates, compare pushed values
    rng = np.random.default_rng(seed)
    k = chart.leaf_count
    fiber_pairs = []
    base_points = [samples[i % len(samples)] for i in range(n_fiber_pairs)]
    for m in base_points:
        m2 = np.asarray(m, dtype=float).copy()
        for l in range(k):
            lo, hi = chart.box[l]
            w = hi - lo
            m2[l] = lo + 0.1 * w + 0.8 * w * rng.random()
        qdiff = float(np.abs(q(m) - q(m2)).max(initial=0.0))
        if qdiff > 1e-9:
            fiber_pairs.append((1.0 + qdiff, m2))
            continue
        s1 = np.hstack([*push_frame(q, frame, m, tol)[:2]])
        s2 = np.hstack([*push_frame(q, frame, m2, tol)[:2]])
        scale = 1.0 + float(np.abs(s1).max(initial=0.0))
        fiber_pairs.append((float(np.abs(s1 - s2).max(initial=0.0)) / scale, m2))
    report.add(record_from_samples("fiber-consistency", fiber_pairs, tol))

    if check_closedness:
        lift = _Lift(q, samples[0])

        def pushed(ybar):
            m = lift(ybar)
            Xbar, abar, _ = push_frame(q, frame, m, tol)
            return np.vstack([Xbar, abar])

        target_points = []
        for m in samples[: min(len(samples), 6)]:
            target_points.append(q(m))
        closure_pairs = []
        for ybar in target_points:
            S = pushed(ybar)
            grads = _fd_gradient(pushed, q.target, ybar)
            worst = 0.0
            r = S.shape[1]
            for i in range(r):
                for j in range(r):
                    if i == j:
                        continue
                    bracket = _target_courant(S, grads, nbar, i, j)
                    coeff, *_ = np.linalg.lstsq(S, bracket, rcond=None)
                    res = np.linalg.norm(S @ coeff - bracket)
                    worst = max(worst, float(res) / (1.0 + np.linalg.norm(bracket)))
            closure_pairs.append((worst, ybar))
        report.add(record_from_samples("reduced-closure", closure_pairs, tol))
    return report


def _target_courant(S: np.ndarray, grads, nbar: int, i: int, j: int) -> np.ndarray:
    """Courant bracket of pushed sections i and j from sampled values S
    (2 nbar x r) and coordinate gradients of the pushed field."""
    X_i, a_i = S[:nbar, i], S[nbar:, i]
    X_j, a_j = S[:nbar, j], S[nbar:, j]
    dX_i = np.array([grads[b][:nbar, i] for b in range(nbar)])  # dX_i[b] = d_b X_i
    dX_j = np.array([grads[b][:nbar, j] for b in range(nbar)])
    da_i = np.array([grads[b][nbar:, i] for b in range(nbar)])
    da_j = np.array([grads[b][nbar:, j] for b in range(nbar)])
    vec = np.zeros(nbar)
    form = np.zeros(nbar)
    for b in range(nbar):
        vec[b] = sum(X_i[a] * dX_j[a][b] - X_j[a] * dX_i[a][b] for a in range(nbar))
        lie = sum(X_i[a] * da_j[a][b] + a_j[a] * dX_i[b][a] for a in range(nbar))
        contraction = sum(X_j[a] * (da_i[a][b] - da_i[b][a]) for a in range(nbar))
        form[b] = lie - contraction
    return np.concatenate([vec, form])
