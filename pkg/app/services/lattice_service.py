from typing import Sequence, Tuple
import numpy as np
import structlog

from app.models.lattice import LatticeResult
from app.models.topology import Alphabet, StateTrellis, TopologyKind
from app.services.topology_service import topology_service
from app.utils.exceptions import InfeasibleLabelError, ValidationError
from app.utils.validators import validate_lattice_request

logger = structlog.get_logger()


def _padded_index(lists: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    """Списки соседей в виде матрицы индексов S x W и маски допустимых позиций"""
    width = max(len(items) for items in lists)
    index = np.zeros((len(lists), width), dtype=np.int64)
    mask = np.zeros((len(lists), width), dtype=bool)
    for row, items in enumerate(lists):
        index[row, :len(items)] = items
        mask[row, :len(items)] = True
    return index, mask


class LatticeService:
    """Прямой-обратный проход в лог-области, цели по кадрам и градиент"""

    @staticmethod
    def logsumexp(values, axis=None):
        """Устойчивый логарифм суммы экспонент; все -inf дают -inf"""
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return -np.inf if axis is None else np.full(np.delete(values.shape, axis), -np.inf)

        peak = np.max(values, axis=axis, keepdims=True)
        peak = np.where(np.isfinite(peak), peak, 0.0)
        with np.errstate(divide='ignore'):
            result = np.log(np.sum(np.exp(values - peak), axis=axis, keepdims=True)) + peak

        if axis is None:
            return float(result.reshape(()))
        return np.squeeze(result, axis=axis)

    @staticmethod
    def softmax_frames(logits: np.ndarray) -> np.ndarray:
        """Softmax по строкам с вычитанием максимума"""
        logits = np.asarray(logits, dtype=np.float64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    @staticmethod
    def log_softmax_frames(logits: np.ndarray) -> np.ndarray:
        logits = np.asarray(logits, dtype=np.float64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def _check_feasible(self, frames: int, trellis: StateTrellis) -> None:
        min_frames = topology_service.min_frames(trellis)
        if frames < min_frames:
            raise InfeasibleLabelError(
                f'Разметка не помещается в {frames} кадров: min_frames={min_frames}',
                {'frames': frames, 'min_frames': min_frames}
            )

    @staticmethod
    def _log_probs(probs: np.ndarray) -> np.ndarray:
        with np.errstate(divide='ignore'):
            return np.log(np.asarray(probs, dtype=np.float64))

    def forward_from_log(self, log_probs: np.ndarray, trellis: StateTrellis) -> np.ndarray:
        """Альфа по лог-вероятностям; alpha[t] включает излучение кадра t"""
        frames = log_probs.shape[0]
        self._check_feasible(frames, trellis)

        classes = np.array(trellis.class_ids)
        emissions = log_probs[:, classes]
        pred_index, pred_mask = _padded_index(trellis.predecessors)

        alpha = np.full((frames, trellis.n_states), -np.inf)
        starts = sorted(trellis.start_states)
        alpha[0, starts] = emissions[0, starts]
        for t in range(1, frames):
            gathered = np.where(pred_mask, alpha[t - 1][pred_index], -np.inf)
            alpha[t] = self.logsumexp(gathered, axis=1) + emissions[t]
        return alpha

    def backward_from_log(self, log_probs: np.ndarray, trellis: StateTrellis) -> np.ndarray:
        """Бета по лог-вероятностям; beta[t] не включает излучение кадра t"""
        frames = log_probs.shape[0]
        self._check_feasible(frames, trellis)

        classes = np.array(trellis.class_ids)
        emissions = log_probs[:, classes]
        succ_index, succ_mask = _padded_index(trellis.successors())

        beta = np.full((frames, trellis.n_states), -np.inf)
        beta[frames - 1, sorted(trellis.end_states)] = 0.0
        for t in range(frames - 2, -1, -1):
            step = beta[t + 1] + emissions[t + 1]
            gathered = np.where(succ_mask, step[succ_index], -np.inf)
            beta[t] = self.logsumexp(gathered, axis=1)
        return beta

    def log_forward(self, probs: np.ndarray, trellis: StateTrellis) -> np.ndarray:
        return self.forward_from_log(self._log_probs(probs), trellis)

    def log_backward(self, probs: np.ndarray, trellis: StateTrellis) -> np.ndarray:
        return self.backward_from_log(self._log_probs(probs), trellis)

    def log_likelihood(self, alpha: np.ndarray, trellis: StateTrellis) -> float:
        return self.logsumexp(alpha[-1, sorted(trellis.end_states)])

    def frame_targets(
            self,
            alpha: np.ndarray,
            beta: np.ndarray,
            trellis: StateTrellis,
            log_likelihood: float,
            n_classes: int
    ) -> np.ndarray:
        """Апостериорные вероятности классов по кадрам (gamma)"""
        if not np.isfinite(log_likelihood):
            raise InfeasibleLabelError(
                'Суммарная вероятность допустимых путей равна нулю',
                {'log_likelihood': log_likelihood}
            )

        occupancy = np.exp(alpha + beta - log_likelihood)
        targets = np.zeros((alpha.shape[0], n_classes))
        # Суммируем занятость состояний одного класса
        np.add.at(targets.T, np.array(trellis.class_ids), occupancy.T)
        return targets

    def sequence_nll(self, logits: np.ndarray, trellis: StateTrellis) -> float:
        """Отрицательное логарифмическое правдоподобие разметки"""
        alpha = self.forward_from_log(self.log_softmax_frames(logits), trellis)
        return -self.log_likelihood(alpha, trellis)

    def loss_and_gradient(
            self,
            logits: np.ndarray,
            labels: Sequence[int],
            alphabet: Alphabet,
            kind: TopologyKind
    ) -> LatticeResult:
        """Потеря и градиент по сырым оценкам: softmax - targets"""
        logits = np.asarray(logits, dtype=np.float64)
        validation_result = validate_lattice_request(logits, labels, alphabet.size, alphabet.special_ids)
        if not validation_result['is_valid']:
            raise ValidationError('; '.join(validation_result['errors']))

        trellis = topology_service.expand(labels, alphabet, kind)
        log_probs = self.log_softmax_frames(logits)
        alpha = self.forward_from_log(log_probs, trellis)
        beta = self.backward_from_log(log_probs, trellis)
        log_likelihood = self.log_likelihood(alpha, trellis)
        targets = self.frame_targets(alpha, beta, trellis, log_likelihood, alphabet.size)

        # Цели считаются константами
        cross_entropy = float(-np.sum(targets * log_probs))
        gradient = np.exp(log_probs) - targets

        logger.debug("Lattice evaluated",
                     topology=TopologyKind(kind).value,
                     frames=logits.shape[0],
                     states=trellis.n_states,
                     nll=-log_likelihood)

        return LatticeResult(
            log_likelihood=log_likelihood,
            cross_entropy=cross_entropy,
            alpha=alpha,
            beta=beta,
            frame_targets=targets,
            gradient=gradient
        )


# Глобальный экземпляр сервиса
lattice_service = LatticeService()
