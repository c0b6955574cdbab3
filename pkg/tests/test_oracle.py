import itertools
import math

import numpy as np
import pytest

from app.models.topology import Alphabet, TopologyKind
from app.services.lattice_service import lattice_service
from app.services.oracle_service import oracle_service
from app.services.topology_service import topology_service
from app.utils.exceptions import OracleGuardError, ValidationError

from tests.helpers import encode, relative_error, uniform_probs


def test_path_counts_small_trellises():
    tcs = Alphabet.for_topology(TopologyKind.TCS, ["A"])
    ctc = Alphabet.for_topology(TopologyKind.CTC, ["A"])

    assert len(oracle_service.enumerate_paths(topology_service.expand_tcs(encode(tcs, "A"), tcs), 2)) == 1
    assert len(oracle_service.enumerate_paths(topology_service.expand_ctc(encode(ctc, "A"), ctc), 2)) == 3


@pytest.mark.parametrize("frames", [1, 2, 3, 4])
def test_ctc_single_label_path_count(frames):
    alphabet = Alphabet.for_topology(TopologyKind.CTC, ["A"])
    trellis = topology_service.expand_ctc(encode(alphabet, "A"), alphabet)
    assert len(oracle_service.enumerate_paths(trellis, frames)) == frames * (frames + 1) // 2


def test_no_paths_below_min_frames(tcs_alphabet):
    trellis = topology_service.expand_tcs(encode(tcs_alphabet, "CAT"), tcs_alphabet)
    for frames in range(1, topology_service.min_frames(trellis)):
        assert len(oracle_service.enumerate_paths(trellis, frames)) == 0


def test_enumeration_guard():
    alphabet = Alphabet.for_topology(TopologyKind.CTC, ["A"])
    trellis = topology_service.expand_ctc(encode(alphabet, "A"), alphabet)
    with pytest.raises(OracleGuardError):
        oracle_service.enumerate_paths(trellis, 4, max_paths=5)


def test_enumeration_rejects_zero_frames(tcs_alphabet):
    trellis = topology_service.expand_tcs(encode(tcs_alphabet, "C"), tcs_alphabet)
    with pytest.raises(ValidationError):
        oracle_service.enumerate_paths(trellis, 0)


def test_brute_force_fixtures():
    tcs = Alphabet.for_topology(TopologyKind.TCS, ["A"])
    ctc = Alphabet.for_topology(TopologyKind.CTC, ["A"])

    tcs_trellis = topology_service.expand_tcs(encode(tcs, "A"), tcs)
    ctc_trellis = topology_service.expand_ctc(encode(ctc, "A"), ctc)
    assert oracle_service.brute_force_log_likelihood(uniform_probs(2, 3), tcs_trellis) == \
        pytest.approx(math.log(1 / 9))
    assert oracle_service.brute_force_log_likelihood(uniform_probs(2, 2), ctc_trellis) == \
        pytest.approx(math.log(3 / 4))


def test_brute_force_certain_path(tcs_alphabet):
    trellis = topology_service.expand_tcs(encode(tcs_alphabet, "C"), tcs_alphabet)
    probs = np.zeros((3, 5))
    # ~ + C: единственный путь с вероятностью 1
    probs[0, 0] = probs[1, 1] = probs[2, 3] = 1.0
    assert oracle_service.brute_force_log_likelihood(probs, trellis) == pytest.approx(0.0)


@pytest.mark.parametrize("kind", [TopologyKind.CTC, TopologyKind.TCS])
def test_forward_matches_enumeration(kind):
    rng = np.random.default_rng(2024)
    alphabet = Alphabet.for_topology(kind, ["A", "B", "C"])
    checked = 0
    while checked < 250:
        labels = rng.choice(alphabet.character_ids, size=int(rng.integers(0, 4))).tolist()
        trellis = topology_service.expand(labels, alphabet, kind)
        frames = int(rng.integers(1, 9))
        if frames < topology_service.min_frames(trellis):
            continue

        probs = lattice_service.softmax_frames(rng.normal(size=(frames, alphabet.size)))
        forward = lattice_service.log_likelihood(lattice_service.log_forward(probs, trellis), trellis)
        brute = oracle_service.brute_force_log_likelihood(probs, trellis)
        assert abs(forward - brute) < 1e-9
        checked += 1


@pytest.mark.parametrize("kind", [TopologyKind.CTC, TopologyKind.TCS])
def test_analytic_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(77)
    alphabet = Alphabet.for_topology(kind, ["A", "B"])
    for _ in range(50):
        labels = rng.choice(alphabet.character_ids, size=int(rng.integers(1, 4))).tolist()
        trellis = topology_service.expand(labels, alphabet, kind)
        frames = topology_service.min_frames(trellis) + int(rng.integers(0, 3))
        logits = rng.normal(size=(frames, alphabet.size))

        analytic = lattice_service.loss_and_gradient(logits, labels, alphabet, kind).gradient
        numeric = oracle_service.finite_difference_gradient(logits, labels, alphabet, kind)
        assert relative_error(analytic, numeric) < 1e-4
        np.testing.assert_allclose(numeric.sum(axis=1), 0.0, atol=1e-6)


def test_finite_difference_step_range(tcs_alphabet):
    with pytest.raises(ValidationError):
        oracle_service.finite_difference_gradient(
            np.zeros((3, 5)), encode(tcs_alphabet, "C"), tcs_alphabet, TopologyKind.TCS, h=1e-2
        )


def test_finite_difference_error_shrinks_quadratically():
    alphabet = Alphabet.for_topology(TopologyKind.TCS, ["A", "B"])
    labels = encode(alphabet, "AB")
    logits = np.random.default_rng(31).normal(size=(6, 4))
    analytic = lattice_service.loss_and_gradient(logits, labels, alphabet, TopologyKind.TCS).gradient

    errors = [
        np.linalg.norm(analytic - oracle_service.finite_difference_gradient(
            logits, labels, alphabet, TopologyKind.TCS, h=h
        ))
        for h in (1e-4, 5e-5)
    ]
    # Ошибка центральной разности ~ h^2: при вдвое меньшем шаге падает примерно в 4 раза
    assert 3.0 <= errors[0] / errors[1] <= 5.0


def test_weight_finite_differences_of_quadratic():
    weights = {"w": np.array([[1.0, -2.0], [0.5, 3.0]]), "b": np.array([0.25])}

    def loss(params):
        return float(np.sum(params["w"] ** 2) + 3.0 * params["b"][0])

    gradients = oracle_service.finite_difference_weight_gradients(loss, weights)
    np.testing.assert_allclose(gradients["w"], 2.0 * weights["w"], atol=1e-6)
    np.testing.assert_allclose(gradients["b"], [3.0], atol=1e-6)


def _paths_by_trellis_and_collapse(kind):
    alphabet = Alphabet.for_topology(kind, ["A", "B"])
    label_sets = [()] + [
        labels
        for length in range(1, 4)
        for labels in itertools.product(alphabet.character_ids, repeat=length)
    ]
    for labels in label_sets:
        trellis = topology_service.expand(list(labels), alphabet, kind)
        classes = np.array(trellis.class_ids)
        for frames in range(1, 6):
            via_trellis = {
                tuple(classes[list(path)].tolist())
                for path in oracle_service.enumerate_paths(trellis, frames).paths
            }
            via_collapse = {
                class_path
                for class_path in itertools.product(range(alphabet.size), repeat=frames)
                if topology_service.collapse(class_path, alphabet, kind) == labels
            }
            yield labels, frames, via_trellis, via_collapse


@pytest.mark.parametrize("kind", [TopologyKind.CTC, TopologyKind.TCS])
def test_every_enumerated_path_collapses_to_target(kind):
    alphabet = Alphabet.for_topology(kind, ["A", "B", "C"])
    for length in range(0, 4):
        for labels in itertools.product(alphabet.character_ids, repeat=length):
            trellis = topology_service.expand(list(labels), alphabet, kind)
            classes = np.array(trellis.class_ids)
            for frames in range(topology_service.min_frames(trellis), 9):
                for path in oracle_service.enumerate_paths(trellis, frames).paths:
                    assert topology_service.collapse(classes[list(path)].tolist(), alphabet, kind) == labels


def test_ctc_trellis_is_exactly_collapse_preimage():
    for labels, frames, via_trellis, via_collapse in _paths_by_trellis_and_collapse(TopologyKind.CTC):
        assert via_trellis == via_collapse, (labels, frames)


def test_tcs_trellis_paths_collapse_to_labels():
    """TCS строже свертки: символу обязательно предшествует foreground"""
    for labels, frames, via_trellis, via_collapse in _paths_by_trellis_and_collapse(TopologyKind.TCS):
        assert via_trellis <= via_collapse, (labels, frames)
        for class_path in via_trellis:
            for t, idx in enumerate(class_path):
                if idx >= 2 and (t == 0 or class_path[t - 1] != idx):
                    assert t > 0 and class_path[t - 1] == 1
