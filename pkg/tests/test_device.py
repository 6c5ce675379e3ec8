import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idleleak.device import (
    FALCON27_EDGES,
    NO_SPAM,
    CouplingGraph,
    HamiltonianSpec,
    ShotDictionary,
    SpamModel,
    basis_probabilities,
    coordination_targets,
    extract_neighborhood,
    falcon27_coupling_map,
    prepare_state,
    sample_shots,
)
from idleleak.qstate import Statevector

from conftest import random_statevector


@pytest.fixture(scope="module")
def falcon():
    return falcon27_coupling_map()


def test_falcon27_size(falcon):
    assert falcon.n_qubits == 27
    assert len(falcon.edges) == 28
    assert falcon.degree(0) == 1


def test_falcon27_degree_histogram(falcon):
    degs = falcon.degrees()
    assert [degs.count(k) for k in (1, 2, 3)] == [6, 13, 8]
    assert sum(degs) == 2 * 28


def test_falcon27_edge_list_matches_layout(falcon):
    assert set(falcon.edges) == {tuple(sorted(e)) for e in FALCON27_EDGES}


def test_coupling_graph_validation():
    with pytest.raises(ValueError):
        CouplingGraph(3, [(1, 1)])
    with pytest.raises(ValueError):
        CouplingGraph(3, [(0, 3)])
    g = CouplingGraph(3, [(1, 0), (0, 1), (2, 1)])
    assert g.edges == ((0, 1), (1, 2))


def test_coordination_targets(falcon):
    assert coordination_targets(falcon, 3) == {1, 7, 8, 12, 14, 18, 19, 25}
    assert coordination_targets(falcon, 1) == {0, 6, 9, 17, 20, 26}
    assert coordination_targets(CouplingGraph(5), 3) == set()


def test_extract_neighborhood_star(falcon):
    sub, relabel = extract_neighborhood(falcon, 1, 1)
    assert set(relabel) == {0, 1, 2, 4}
    assert relabel[1] == 0
    assert sub.n_qubits == 4 and sub.degree(0) == 3 and len(sub.edges) == 3


def test_extract_neighborhood_radius_zero(falcon):
    sub, relabel = extract_neighborhood(falcon, 14, 0)
    assert relabel == {14: 0} and sub.n_qubits == 1 and not sub.edges


def test_extract_neighborhood_radius_two(falcon):
    sub, relabel = extract_neighborhood(falcon, 12, 2)
    assert set(relabel) == {12, 10, 15, 13, 7, 18, 14}
    assert relabel[12] == 0
    # induced edges only
    back = {v: k for k, v in relabel.items()}
    assert {tuple(sorted((back[i], back[j]))) for i, j in sub.edges} == {
        (10, 12), (12, 15), (12, 13), (7, 10), (15, 18), (13, 14)
    }


def test_extract_neighborhood_unbounded_is_component(falcon):
    sub, relabel = extract_neighborhood(falcon, 5, None)
    assert len(relabel) == 27 and len(sub.edges) == 28
    g = CouplingGraph(5, [(0, 1), (2, 3)])
    _, rel = extract_neighborhood(g, 3, None)
    assert set(rel) == {2, 3}


def test_prepare_state_examples():
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(prepare_state("010", NO_SPAM, rng).amplitudes, Statevector.basis_state("010").amplitudes)
    np.testing.assert_array_equal(prepare_state("0", SpamModel(p_prep=1.0), rng).amplitudes, [0, 1])


def test_prepare_state_flip_rate():
    rng = np.random.default_rng(1)
    trials = 100_000
    counts = np.zeros(3)
    for _ in range(trials):
        psi = prepare_state("000", SpamModel(p_prep=0.1), rng)
        k = int(np.argmax(np.abs(psi.amplitudes)))
        counts += [(k >> 2) & 1, (k >> 1) & 1, k & 1]
    frac = counts / trials
    np.testing.assert_allclose(frac, 0.1, atol=0.005)


def test_spam_model_validation():
    with pytest.raises(ValueError):
        SpamModel(p_prep=1.5)
    with pytest.raises(ValueError):
        SpamModel(p_readout=-0.1)
    np.testing.assert_allclose(SpamModel(p_readout=(0.1, 0.2)).readout_probs(2), [0.1, 0.2])


def test_shot_dictionary_validation():
    with pytest.raises(ValueError):
        ShotDictionary("XI", {"00": 1})
    with pytest.raises(ValueError):
        ShotDictionary("XZ", {"0": 1})
    with pytest.raises(ValueError):
        ShotDictionary("X", {"0": 3}, n_shots=4)
    with pytest.raises(ValueError):
        ShotDictionary("X", {"0": -1})
    d = ShotDictionary.from_shots("XZ", ["01", "01", "11"])
    assert d.counts == {"01": 2, "11": 1} and d.n_shots == 3


def test_sample_shots_examples():
    rng = np.random.default_rng(2)
    assert sample_shots(Statevector.basis_state("00"), "ZZ", 1000, NO_SPAM, rng).counts == {"00": 1000}
    plus = Statevector(np.array([1, 1]) / np.sqrt(2))
    assert sample_shots(plus, "X", 1000, NO_SPAM, rng).counts == {"0": 1000}
    plus_i = Statevector(np.array([1, 1j]) / np.sqrt(2))
    assert sample_shots(plus_i, "Y", 1000, NO_SPAM, rng).counts == {"0": 1000}
    d = sample_shots(Statevector.basis_state("0"), "Z", 100_000, SpamModel(p_readout=0.2), rng)
    assert d.counts["1"] / 1e5 == pytest.approx(0.2, abs=0.01)


def test_sample_shots_rejects_identity():
    with pytest.raises(ValueError):
        sample_shots(Statevector.basis_state("00"), "ZI", 10, NO_SPAM, np.random.default_rng(0))


def test_sample_shots_converges_to_born():
    rng = np.random.default_rng(3)
    psi = Statevector(random_statevector(rng, 2))
    for basis in ("XY", "ZX", "YY"):
        born = basis_probabilities(psi, basis)
        d = sample_shots(psi, basis, 10**6, NO_SPAM, rng)
        emp = np.array([d.counts.get(format(k, "02b"), 0) for k in range(4)]) / 1e6
        assert 0.5 * np.abs(emp - born).sum() <= 0.01


def test_basis_probabilities_statevector_and_density_agree():
    from idleleak.qstate import DensityMatrix

    rng = np.random.default_rng(4)
    psi = Statevector(random_statevector(rng, 3))
    rho = DensityMatrix.from_statevector(psi.amplitudes)
    for qubits in ([2, 0], [1], [0, 1, 2]):
        basis = "XYZ"[: len(qubits)]
        np.testing.assert_allclose(
            basis_probabilities(psi, basis, qubits), basis_probabilities(rho, basis, qubits), atol=1e-12
        )


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20)
def test_sample_shots_deterministic(seed):
    psi = Statevector(random_statevector(np.random.default_rng(7), 2))
    spam = SpamModel(p_readout=0.05)
    a = sample_shots(psi, "XZ", 500, spam, np.random.default_rng(seed))
    b = sample_shots(psi, "XZ", 500, spam, np.random.default_rng(seed))
    assert a == b


def test_hamiltonian_spec_validation():
    g = CouplingGraph(2, [(0, 1)])
    with pytest.raises(ValueError):
        HamiltonianSpec(g, [0.0], [1.0])
    with pytest.raises(ValueError):
        HamiltonianSpec(g, [0.0, np.inf], [1.0])
