import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from histcheck.linalg import hs_norm
from histcheck.partition import (
    DensityOperator,
    NotADensity,
    NotAProjector,
    NotComplete,
    NotOrthogonal,
    PartitionError,
    density_from_json,
    fine_grained_partition,
    is_classical,
    is_fine_grained,
    partition_from_basis_groups,
    partition_from_json,
    partition_states,
    project_classical,
    random_classical_density,
    random_density,
    random_partition,
    validate_partition,
)

seeds = st.integers(0, 2**32 - 1)
PLUS = 0.5 * np.ones((2, 2), dtype=complex)


class TestValidate:
    def test_fine(self):
        p = validate_partition([np.diag([1, 0]), np.diag([0, 1])], 1e-10)
        assert p.ranks == (1, 1)
        assert p.dim == 2 and p.m == 2

    def test_trivial(self):
        p = validate_partition([np.eye(3)])
        assert p.ranks == (3,)

    def test_not_orthogonal(self):
        with pytest.raises(NotOrthogonal) as exc:
            validate_partition([np.diag([1, 0]), np.diag([1, 0])])
        assert (exc.value.mu, exc.value.nu) == (0, 1)

    def test_not_projector(self):
        with pytest.raises(NotAProjector) as exc:
            validate_partition([np.diag([1, 0]), np.array([[0, 1], [0, 1]])])
        assert exc.value.mu == 1

    def test_not_complete(self):
        with pytest.raises(NotComplete):
            validate_partition([np.diag([1, 0, 0]), np.diag([0, 1, 0])])

    def test_empty(self):
        with pytest.raises(PartitionError):
            validate_partition([])

    def test_rotated_partition_is_valid(self):
        p = random_partition(4, seed=2, m=3)
        assert sum(p.ranks) == 4 and p.m == 3


class TestBasisGroups:
    def test_d2(self):
        p = partition_from_basis_groups(2, [{0}, {1}])
        assert np.array_equal(p[0], np.diag([1, 0])) and np.array_equal(p[1], np.diag([0, 1]))

    def test_d3_coarse(self):
        p = partition_from_basis_groups(3, [[0], [1, 2]])
        assert np.array_equal(p[1], np.diag([0, 1, 1]))
        assert p.ranks == (1, 2)

    def test_overlap(self):
        with pytest.raises(PartitionError, match="more than one group"):
            partition_from_basis_groups(2, [{0}, {0, 1}])

    def test_incomplete(self):
        with pytest.raises(PartitionError, match="cover"):
            partition_from_basis_groups(3, [[0], [1]])


class TestFineGrained:
    def test_cases(self):
        assert is_fine_grained(fine_grained_partition(3))
        assert not is_fine_grained(partition_from_basis_groups(3, [[0], [1, 2]]))
        assert not is_fine_grained(validate_partition([np.eye(2)]))

    @given(seeds)
    @settings(max_examples=30)
    def test_m_le_d(self, seed):
        p = random_partition(5, seed)
        assert p.m <= p.dim
        assert is_fine_grained(p) == (p.m == p.dim)


class TestPartitionStates:
    def test_coarse(self):
        s = partition_states(partition_from_basis_groups(3, [[0], [1, 2]]))
        assert np.allclose(s[0].matrix, np.diag([1, 0, 0]))
        assert np.allclose(s[1].matrix, np.diag([0, 0.5, 0.5]))

    def test_trivial_is_maximally_mixed(self):
        (s,) = partition_states(validate_partition([np.eye(4)]))
        assert np.allclose(s.matrix, np.eye(4) / 4)

    @given(seeds)
    @settings(max_examples=30)
    def test_valid_and_mutually_orthogonal(self, seed):
        p = random_partition(4, seed)
        states = partition_states(p)
        for s in states:
            DensityOperator.validated(s.matrix, 1e-10)
        for i, a in enumerate(states):
            for b in states[i + 1:]:
                assert abs(np.trace(a.matrix @ b.matrix)) <= 1e-12


class TestClassical:
    def test_examples(self):
        fine = fine_grained_partition(2)
        assert is_classical(np.diag([0.5, 0.5]), fine)
        assert not is_classical(PLUS, fine)
        assert is_classical(random_density(3, 1), validate_partition([np.eye(3)]))

    def test_project(self):
        fine = fine_grained_partition(2)
        assert np.allclose(project_classical(PLUS, fine).matrix, np.diag([0.5, 0.5]))
        r = np.diag([0.2, 0.8])
        assert hs_norm(project_classical(r, fine).matrix - r) <= 1e-12
        rho = random_density(3, 4)
        assert hs_norm(project_classical(rho, validate_partition([np.eye(3)])).matrix - rho.matrix) <= 1e-12

    @given(seeds)
    @settings(max_examples=50)
    def test_projection_properties(self, seed):
        rng = np.random.default_rng(seed)
        p = random_partition(4, rng)
        rho = random_density(4, rng)
        pc = project_classical(rho, p)
        assert abs(np.trace(pc.matrix) - np.trace(rho.matrix)) <= 1e-12
        assert is_classical(pc, p, 1e-10)
        assert hs_norm(pc.matrix - sum(q @ pc.matrix @ q for q in p.projectors)) <= 1e-12
        DensityOperator.validated(random_classical_density(p, rng).matrix, 1e-10)


class TestRandomDensity:
    def test_d1(self):
        assert np.allclose(random_density(1, 0).matrix, [[1]])

    @given(seeds)
    @settings(max_examples=50)
    def test_valid(self, seed):
        rho = random_density(3, seed)
        assert abs(np.trace(rho.matrix) - 1) <= 1e-12
        DensityOperator.validated(rho.matrix, 1e-10)

    def test_deterministic(self):
        assert np.array_equal(random_density(3, 8).matrix, random_density(3, 8).matrix)

    def test_mean_purity(self):
        # Hilbert-Schmidt measure on qubits is the uniform Bloch ball:
        # purity (1 + r^2)/2 with E[r^2] = 3/5, so E[purity] = 4/5 = 2d/(d^2+1).
        rng = np.random.default_rng(13)
        pur = [np.trace(r @ r).real for r in (random_density(2, rng).matrix for _ in range(10_000))]
        assert np.mean(pur) == pytest.approx(0.8, abs=0.02)


class TestDensityValidation:
    def test_rejects(self):
        with pytest.raises(NotADensity, match="Hermitian"):
            DensityOperator.validated([[0.5, 1], [0, 0.5]])
        with pytest.raises(NotADensity, match="trace"):
            DensityOperator.validated(np.eye(2))
        with pytest.raises(NotADensity, match="eigenvalue"):
            DensityOperator.validated(np.diag([1.5, -0.5]))


class TestJson:
    def test_round_trip(self):
        p = random_partition(3, 1)
        q = partition_from_json(p.to_json())
        assert all(np.array_equal(a, b) for a, b in zip(p.projectors, q.projectors))
        assert q.ranks == p.ranks

    def test_basis_groups(self):
        p = partition_from_json({"dim": 3, "basis_groups": [[0], [1, 2]]})
        assert p.ranks == (1, 2)

    def test_density(self):
        rho = random_density(2, 0)
        back = density_from_json(rho.to_json())
        assert np.array_equal(back.matrix, rho.matrix)
        assert rho.to_json()["type"] == "density"
