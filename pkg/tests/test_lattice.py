import math

import numpy as np
import pytest

from app.models.topology import Alphabet, TopologyKind
from app.services.lattice_service import lattice_service
from app.services.topology_service import topology_service
from app.utils.exceptions import InfeasibleLabelError, ValidationError

from tests.helpers import encode, uniform_probs


@pytest.fixture
def tcs_a():
    alphabet = Alphabet.for_topology(TopologyKind.TCS, ["A"])
    return alphabet, topology_service.expand_tcs(encode(alphabet, "A"), alphabet)


@pytest.fixture
def ctc_a():
    alphabet = Alphabet.for_topology(TopologyKind.CTC, ["A"])
    return alphabet, topology_service.expand_ctc(encode(alphabet, "A"), alphabet)


def test_softmax_uniform_row():
    np.testing.assert_allclose(lattice_service.softmax_frames(np.zeros((1, 3))), [[1 / 3, 1 / 3, 1 / 3]])


def test_softmax_large_scores_do_not_overflow():
    probs = lattice_service.softmax_frames(np.array([[1000.0, 0.0, 0.0]]))
    assert np.all(np.isfinite(probs))
    np.testing.assert_allclose(probs, [[1.0, 0.0, 0.0]], atol=1e-300)


def test_softmax_closed_form():
    probs = lattice_service.softmax_frames(np.array([[math.log(2.0), 0.0, 0.0]]))
    np.testing.assert_allclose(probs, [[0.5, 0.25, 0.25]])


def test_logsumexp_examples():
    assert lattice_service.logsumexp([0.0, 0.0]) == pytest.approx(math.log(2.0))
    assert lattice_service.logsumexp([-np.inf, 1.5]) == pytest.approx(1.5)
    assert lattice_service.logsumexp([-1000.0, -1000.0]) == pytest.approx(-1000.0 + math.log(2.0), abs=1e-12)
    assert lattice_service.logsumexp([-np.inf, -np.inf]) == -np.inf


def test_forward_tcs_single_path(tcs_a):
    alphabet, trellis = tcs_a
    alpha = lattice_service.log_forward(uniform_probs(2, 3), trellis)
    assert lattice_service.log_likelihood(alpha, trellis) == pytest.approx(math.log(1 / 9))


def test_forward_ctc_three_paths(ctc_a):
    alphabet, trellis = ctc_a
    alpha = lattice_service.log_forward(uniform_probs(2, 2), trellis)
    assert lattice_service.log_likelihood(alpha, trellis) == pytest.approx(math.log(3 / 4))


def test_forward_single_state_trellis():
    alphabet = Alphabet.for_topology(TopologyKind.TCS, ["A"])
    trellis = topology_service.expand_tcs([], alphabet)
    probs = np.array([[0.2, 0.3, 0.5]])
    alpha = lattice_service.log_forward(probs, trellis)
    assert alpha[0, 0] == pytest.approx(math.log(0.2))


def test_backward_base_case(tcs_a):
    alphabet, trellis = tcs_a
    beta = lattice_service.log_backward(uniform_probs(3, 3), trellis)
    assert beta[-1, 2] == 0.0 and beta[-1, 3] == 0.0
    assert beta[-1, 0] == -np.inf and beta[-1, 1] == -np.inf


def test_backward_self_loop_chain():
    alphabet = Alphabet.for_topology(TopologyKind.TCS, ["A"])
    trellis = topology_service.expand_tcs([], alphabet)
    probs = np.tile([0.25, 0.25, 0.5], (4, 1))
    beta = lattice_service.log_backward(probs, trellis)
    for t in range(4):
        assert beta[t, 0] == pytest.approx((3 - t) * math.log(0.25))


def test_alpha_beta_consistency(tcs_a):
    alphabet, trellis = tcs_a
    probs = uniform_probs(2, 3)
    alpha = lattice_service.log_forward(probs, trellis)
    beta = lattice_service.log_backward(probs, trellis)
    for t in range(2):
        assert lattice_service.logsumexp(alpha[t] + beta[t]) == pytest.approx(math.log(1 / 9))


def test_frame_targets_single_path(tcs_a):
    alphabet, trellis = tcs_a
    probs = uniform_probs(2, 3)
    alpha = lattice_service.log_forward(probs, trellis)
    beta = lattice_service.log_backward(probs, trellis)
    targets = lattice_service.frame_targets(
        alpha, beta, trellis, lattice_service.log_likelihood(alpha, trellis), alphabet.size
    )
    # Классы: ~, +, A
    np.testing.assert_allclose(targets, [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], atol=1e-12)


def test_frame_targets_ctc(ctc_a):
    alphabet, trellis = ctc_a
    probs = uniform_probs(2, 2)
    alpha = lattice_service.log_forward(probs, trellis)
    beta = lattice_service.log_backward(probs, trellis)
    targets = lattice_service.frame_targets(
        alpha, beta, trellis, lattice_service.log_likelihood(alpha, trellis), alphabet.size
    )
    # Классы: /, A
    np.testing.assert_allclose(targets, [[1 / 3, 2 / 3], [1 / 3, 2 / 3]], atol=1e-12)


def test_frame_targets_reject_zero_mass(tcs_a):
    alphabet, trellis = tcs_a
    alpha = np.full((2, trellis.n_states), -np.inf)
    with pytest.raises(InfeasibleLabelError):
        lattice_service.frame_targets(alpha, alpha, trellis, -np.inf, alphabet.size)


def test_loss_and_gradient_tcs_fixture():
    alphabet = Alphabet.for_topology(TopologyKind.TCS, ["A"])
    result = lattice_service.loss_and_gradient(np.zeros((2, 3)), encode(alphabet, "A"), alphabet, TopologyKind.TCS)

    assert result.nll == pytest.approx(math.log(9))
    # Кадр 0: ~ 1/3, + -2/3, A 1/3
    np.testing.assert_allclose(result.gradient[0], [1 / 3, -2 / 3, 1 / 3], atol=1e-12)
    # Цели точные, поэтому перекрестная энтропия совпадает с NLL
    assert result.cross_entropy == pytest.approx(math.log(9))


def test_loss_invariant_to_frame_shift(rng):
    alphabet = Alphabet.for_topology(TopologyKind.TCS, ["A", "B"])
    logits = rng.normal(size=(6, 4))
    labels = encode(alphabet, "AB")
    base = lattice_service.loss_and_gradient(logits, labels, alphabet, TopologyKind.TCS)

    shifted_logits = logits.copy()
    shifted_logits[2] += 7.5
    shifted = lattice_service.loss_and_gradient(shifted_logits, labels, alphabet, TopologyKind.TCS)

    assert shifted.nll == pytest.approx(base.nll, abs=1e-9)
    np.testing.assert_allclose(shifted.gradient, base.gradient, atol=1e-9)


@pytest.mark.parametrize("kind", [TopologyKind.CTC, TopologyKind.TCS])
def test_lattice_identities_on_random_instances(kind, rng):
    alphabet = Alphabet.for_topology(kind, ["A", "B", "C"])
    for _ in range(50):
        labels = rng.choice(alphabet.character_ids, size=int(rng.integers(0, 4))).tolist()
        trellis = topology_service.expand(labels, alphabet, kind)
        frames = topology_service.min_frames(trellis) + int(rng.integers(0, 4))
        result = lattice_service.loss_and_gradient(rng.normal(size=(frames, alphabet.size)), labels, alphabet, kind)

        per_frame = lattice_service.logsumexp(result.alpha + result.beta, axis=1)
        np.testing.assert_allclose(per_frame, result.log_likelihood, atol=1e-9)
        np.testing.assert_allclose(result.frame_targets.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(result.gradient.sum(axis=1), 0.0, atol=1e-9)


def test_infeasible_label_reports_min_frames():
    alphabet = Alphabet.for_topology(TopologyKind.TCS, ["A", "B"])
    with pytest.raises(InfeasibleLabelError) as exc_info:
        lattice_service.loss_and_gradient(np.zeros((3, 4)), encode(alphabet, "AB"), alphabet, TopologyKind.TCS)
    assert exc_info.value.details == {'frames': 3, 'min_frames': 4}


def test_feasibility_is_monotone_in_frames(ctc_alphabet):
    labels = encode(ctc_alphabet, "CAAT")
    trellis = topology_service.expand_ctc(labels, ctc_alphabet)
    min_frames = topology_service.min_frames(trellis)
    for frames in range(min_frames, min_frames + 5):
        result = lattice_service.loss_and_gradient(np.zeros((frames, 4)), labels, ctc_alphabet, TopologyKind.CTC)
        assert np.isfinite(result.nll)


def test_non_finite_logits_rejected(tcs_alphabet):
    logits = np.zeros((4, 5))
    logits[1, 2] = np.nan
    with pytest.raises(ValidationError):
        lattice_service.loss_and_gradient(logits, encode(tcs_alphabet, "A"), tcs_alphabet, TopologyKind.TCS)


def test_lattice_dump_keys():
    alphabet = Alphabet.for_topology(TopologyKind.TCS, ["A"])
    result = lattice_service.loss_and_gradient(np.zeros((2, 3)), encode(alphabet, "A"), alphabet, TopologyKind.TCS)
    dump = result.to_dump()
    assert set(dump) == {"log_likelihood", "frame_targets", "gradient"}
    assert len(dump["gradient"]) == 2 and len(dump["gradient"][0]) == 3
