import numpy as np
import pytest
import sympy as sp
from conftest import random_density, random_ket, random_kraus, random_povm

from exchangeq import (
    DensityMatrix,
    DimensionMismatch,
    Effect,
    EffectOutOfRange,
    LengthMismatch,
    NotHermitian,
    NotNormalized,
    NotOrthonormal,
    NotPositive,
    NotTracePreserving,
    Povm,
    PovmNotComplete,
    ProbabilityOutOfRange,
    PureState,
    TraceNotOne,
    Transformation,
    apply_transformation,
    born_probability,
    clamp_probability,
    compose_transformations,
    expectation_value,
    gellmann,
    matrix_from_json,
    matrix_to_json,
    named_matrix,
    outcome_distribution,
    pauli,
    projective_measurement,
    qubit_ket,
    trace_probability,
    validate_density,
)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
PLUS_X = np.array([1, 1], dtype=complex) / np.sqrt(2)
MINUS_X = np.array([1, -1], dtype=complex) / np.sqrt(2)

Z_MEAS = projective_measurement([KET0, KET1], label="z")


class TestValidateDensity:
    def test_maximally_mixed(self):
        rho = validate_density(np.eye(2) / 2)
        assert rho.dim == 2

    def test_pure_projector(self):
        validate_density(np.diag([1.0, 0.0]))

    def test_trace_not_one(self):
        with pytest.raises(TraceNotOne) as err:
            validate_density(np.diag([0.6, 0.6]))
        assert err.value.magnitude == pytest.approx(0.2)

    def test_not_hermitian(self):
        with pytest.raises(NotHermitian) as err:
            validate_density(np.array([[0.5, 0.3], [0.1, 0.5]]))
        assert err.value.magnitude == pytest.approx(0.2)

    def test_not_positive_reports_eigenvalue(self):
        with pytest.raises(NotPositive) as err:
            validate_density(np.diag([1.5, -0.5]))
        assert err.value.magnitude == pytest.approx(0.5)

    def test_non_square(self):
        with pytest.raises(DimensionMismatch):
            validate_density(np.ones((2, 3)))

    def test_immutable(self):
        rho = DensityMatrix(np.eye(2) / 2)
        with pytest.raises(ValueError):
            rho.matrix[0, 0] = 1
        with pytest.raises(AttributeError):
            rho.matrix = np.eye(2)


class TestTraceProbability:
    def test_maximally_mixed(self):
        assert trace_probability(Effect(np.outer(KET0, KET0)), DensityMatrix(np.eye(2) / 2)) == pytest.approx(0.5)

    def test_identity_effect(self, rng):
        rho = DensityMatrix(random_density(3, rng))
        assert trace_probability(Effect(np.eye(3)), rho) == pytest.approx(1.0, abs=1e-12)

    def test_plus_x_on_plus_z(self):
        # oracle: |<+x|+z>|^2 by a direct inner product
        expected = abs(np.vdot(PLUS_X, KET0)) ** 2
        p = trace_probability(Effect(np.outer(PLUS_X, PLUS_X.conj())), DensityMatrix(np.outer(KET0, KET0)))
        assert p == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            trace_probability(Effect(np.eye(3)), DensityMatrix(np.eye(2) / 2))

    def test_clamp_policy(self):
        assert clamp_probability(1 + 5e-10) == 1.0
        assert clamp_probability(-5e-10) == 0.0
        with pytest.raises(ProbabilityOutOfRange):
            clamp_probability(1 + 1e-6)


class TestOutcomeDistribution:
    def test_z_on_mixed(self):
        np.testing.assert_allclose(outcome_distribution(Z_MEAS, DensityMatrix(np.eye(2) / 2)), [0.5, 0.5])

    def test_z_on_plus_z(self):
        np.testing.assert_allclose(outcome_distribution(Z_MEAS, DensityMatrix(np.outer(KET0, KET0))), [1, 0])

    def test_trine_symbolic(self):
        # symbolic oracle: tr((2/3)|phi_k><phi_k| I/2) with exact trigonometry
        expected = []
        for k in range(3):
            phi = sp.Matrix([sp.cos(2 * sp.pi * k / 3), sp.sin(2 * sp.pi * k / 3)])
            e = sp.Rational(2, 3) * phi * phi.T
            expected.append(sp.nsimplify(sp.simplify((e * sp.eye(2) / 2).trace())))
        assert expected == [sp.Rational(1, 3)] * 3
        effects = []
        for k in range(3):
            phi = np.array([np.cos(2 * np.pi * k / 3), np.sin(2 * np.pi * k / 3)])
            effects.append(2 / 3 * np.outer(phi, phi))
        trine = Povm(effects, "trine")
        np.testing.assert_allclose(outcome_distribution(trine, DensityMatrix(np.eye(2) / 2)), [1 / 3] * 3, atol=1e-15)

    def test_random_pairs_normalized(self, rng):
        for n in (2, 3, 4):
            for _ in range(50):
                m = Povm(random_povm(n, int(rng.integers(1, 5)), rng))
                rho = DensityMatrix(random_density(n, rng))
                raw = np.einsum("kab,ba->k", m.matrices(), rho.matrix).real
                assert raw.min() >= -1e-12
                p = outcome_distribution(m, rho)
                assert abs(p.sum() - 1) <= 1e-10


class TestPovm:
    def test_not_complete(self):
        with pytest.raises(PovmNotComplete) as err:
            Povm([np.diag([1, 0]), np.diag([0, 0.9])])
        assert err.value.magnitude == pytest.approx(0.1)

    def test_duplicate_labels(self):
        from exchangeq import DuplicateLabel

        with pytest.raises(DuplicateLabel):
            Povm([np.diag([1, 0]), np.diag([0, 1])], outcome_labels=["a", "a"])

    def test_effect_bounds(self):
        with pytest.raises(EffectOutOfRange):
            Effect(np.diag([1.2, 0]))


class TestBorn:
    def test_same(self):
        psi = PureState(PLUS_X)
        assert born_probability(psi, psi) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert born_probability(PureState(KET0), PureState(KET1)) == 0.0

    def test_plus_x_plus_z(self):
        assert born_probability(PureState(PLUS_X), PureState(KET0)) == pytest.approx(0.5, abs=1e-15)

    def test_matches_trace_formula(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 6))
            a, b = PureState(random_ket(n, rng)), PureState(random_ket(n, rng))
            tp = trace_probability(Effect(a.projector()), DensityMatrix(b.projector()))
            assert abs(born_probability(a, b) - tp) <= 1e-12
            assert abs(born_probability(a, b) - born_probability(b, a)) <= 1e-15

    def test_not_normalized(self):
        with pytest.raises(NotNormalized):
            PureState([1, 1])


class TestExpectation:
    def test_symmetric(self):
        assert expectation_value([1, -1], Z_MEAS, DensityMatrix(np.eye(2) / 2)) == pytest.approx(0.0)

    def test_plus_z(self):
        assert expectation_value([1, -1], Z_MEAS, DensityMatrix(np.outer(KET0, KET0))) == pytest.approx(1.0)

    def test_linear_in_values(self, rng):
        m = Povm(random_povm(2, 2, rng))
        rho = DensityMatrix(random_density(2, rng))
        p = outcome_distribution(m, rho)
        assert expectation_value([2, 3], m, rho) == pytest.approx(2 * p[0] + 3 * p[1], abs=1e-14)

    def test_matches_operator_form(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 5))
            u, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
            m = projective_measurement(list(u.T))
            lam = rng.standard_normal(n)
            psi = random_ket(n, rng)
            a = sum(l * np.outer(v, v.conj()) for l, v in zip(lam, u.T))
            direct = np.vdot(psi, a @ psi).real
            assert abs(expectation_value(lam, m, DensityMatrix(np.outer(psi, psi.conj()))) - direct) <= 1e-10

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            expectation_value([1, 2, 3], Z_MEAS, DensityMatrix(np.eye(2) / 2))


class TestTransformations:
    def test_identity(self, rng):
        rho = DensityMatrix(random_density(2, rng))
        out = apply_transformation(Transformation([np.eye(2)]), rho)
        np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-15)

    def test_pauli_x_flips(self):
        out = apply_transformation(Transformation.unitary(pauli("x")), DensityMatrix(np.outer(KET0, KET0)))
        oracle = pauli("x") @ np.outer(KET0, KET0) @ pauli("x").conj().T
        np.testing.assert_allclose(out.matrix, oracle, atol=1e-15)
        np.testing.assert_allclose(out.matrix, np.outer(KET1, KET1), atol=1e-15)

    def test_full_depolarization(self, rng):
        t = Transformation([pauli(a) / 2 for a in "ixyz"])
        for _ in range(10):
            rho = random_density(2, rng)
            oracle = sum(pauli(a) @ rho @ pauli(a) for a in "ixyz") / 4
            out = apply_transformation(t, DensityMatrix(rho))
            np.testing.assert_allclose(out.matrix, oracle, atol=1e-14)
            np.testing.assert_allclose(out.matrix, np.eye(2) / 2, atol=1e-14)

    def test_not_trace_preserving(self):
        with pytest.raises(NotTracePreserving):
            Transformation([np.eye(2) * 0.9])

    def test_random_channels_stay_valid(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 5))
            t = Transformation(random_kraus(n, int(rng.integers(1, 4)), rng))
            out = apply_transformation(t, DensityMatrix(random_density(n, rng)))
            assert abs(np.trace(out.matrix).real - 1) <= 1e-10
            assert np.linalg.eigvalsh(out.matrix)[0] >= -1e-9

    def test_composition(self, rng):
        for _ in range(50):
            t1 = Transformation(random_kraus(3, 2, rng))
            t2 = Transformation(random_kraus(3, 3, rng))
            rho = DensityMatrix(random_density(3, rng))
            seq = apply_transformation(t2, apply_transformation(t1, rho))
            both = apply_transformation(compose_transformations(t1, t2), rho)
            np.testing.assert_allclose(seq.matrix, both.matrix, atol=1e-10)


class TestProjective:
    def test_z(self):
        np.testing.assert_allclose(Z_MEAS.matrices(), [np.diag([1, 0]), np.diag([0, 1])])

    def test_x(self):
        m = projective_measurement([PLUS_X, MINUS_X])
        np.testing.assert_allclose(m.matrices()[0], [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_repeated_vector(self):
        with pytest.raises(NotOrthonormal):
            projective_measurement([KET0, KET0])


class TestNamedAndJson:
    def test_pauli_keys(self):
        np.testing.assert_array_equal(named_matrix("pauli:y"), [[0, -1j], [1j, 0]])

    def test_gellmann_key(self):
        g = named_matrix("gellmann:3:1:2")
        np.testing.assert_array_equal(g, gellmann(1, 2, 3))
        assert np.trace(g @ g).real == pytest.approx(2)

    def test_gellmann_qubit_is_pauli(self):
        np.testing.assert_array_equal(gellmann(2, 1, 2), pauli("x"))
        np.testing.assert_array_equal(gellmann(1, 2, 2), pauli("y"))
        np.testing.assert_array_equal(gellmann(1, 1, 2), pauli("z"))

    def test_qubit_keys(self):
        np.testing.assert_allclose(named_matrix("qubit:-y"), np.outer(qubit_ket("-y"), qubit_ket("-y").conj()))
        np.testing.assert_array_equal(named_matrix("proj:3:2"), np.diag([0, 0, 1]))

    def test_unknown_key(self):
        with pytest.raises(KeyError):
            named_matrix("pauli:w")

    def test_round_trip(self, rng):
        m = random_density(3, rng)
        obj = matrix_to_json(m)
        assert obj["dim"] == 3 and len(obj["entries"]) == 9
        np.testing.assert_array_equal(matrix_from_json(obj), m)
        assert matrix_from_json("mixed:2")[0, 0] == 0.5
