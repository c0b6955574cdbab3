from collections import deque
from typing import Callable, Dict, List, Optional, Sequence
import numpy as np
import structlog

from app.config.settings import settings
from app.models.alignment import PathSet
from app.models.topology import Alphabet, StateTrellis, TopologyKind
from app.services.lattice_service import lattice_service
from app.services.topology_service import topology_service
from app.utils.exceptions import InfeasibleLabelError, OracleGuardError, ValidationError
from app.utils.validators import OracleValidator

logger = structlog.get_logger()


class OracleService:
    """Эталонные переборные реализации для проверок"""

    @staticmethod
    def _distance_to_end(trellis: StateTrellis) -> List[int]:
        """Минимальное число кадров от состояния до конца пути (включая его самого)"""
        distance = [0] * trellis.n_states
        for state in trellis.end_states:
            distance[state] = 1
        queue = deque(sorted(trellis.end_states))
        while queue:
            state = queue.popleft()
            for pred in trellis.predecessors[state]:
                if distance[pred] == 0:
                    distance[pred] = distance[state] + 1
                    queue.append(pred)
        return distance

    def enumerate_paths(self, trellis: StateTrellis, frames: int, max_paths: Optional[int] = None) -> PathSet:
        """Все допустимые пути длины frames (поиск в глубину)"""
        if not OracleValidator.validate_frames(frames):
            raise ValidationError(f'Некорректное число кадров: {frames}')
        if max_paths is None:
            max_paths = settings.oracle_max_paths

        successors = trellis.successors()
        distance = self._distance_to_end(trellis)

        paths = []
        stack = [[state] for state in sorted(trellis.start_states, reverse=True)]
        while stack:
            path = stack.pop()
            state = path[-1]
            remaining = frames - len(path)
            # Отсекаем ветви, которые не успевают дойти до конца
            if distance[state] == 0 or distance[state] - 1 > remaining:
                continue
            if remaining == 0:
                if state in trellis.end_states:
                    paths.append(tuple(path))
                    if len(paths) > max_paths:
                        raise OracleGuardError(
                            f'Число путей превысило лимит {max_paths}',
                            {'max_paths': max_paths, 'frames': frames, 'states': trellis.n_states}
                        )
                continue
            for nxt in reversed(successors[state]):
                stack.append(path + [nxt])

        logger.debug("Paths enumerated", frames=frames, states=trellis.n_states, count=len(paths))
        return PathSet(frames=frames, paths=tuple(paths))

    def brute_force_log_likelihood(self, probs: np.ndarray, trellis: StateTrellis,
                                   frames: Optional[int] = None) -> float:
        """Логарифм суммы вероятностей всех допустимых путей"""
        probs = np.asarray(probs, dtype=np.float64)
        if frames is None:
            frames = probs.shape[0]
        path_set = self.enumerate_paths(trellis, frames)
        if not path_set.paths:
            raise InfeasibleLabelError(
                'Нет ни одного допустимого пути',
                {'frames': frames, 'min_frames': topology_service.min_frames(trellis)}
            )

        with np.errstate(divide='ignore'):
            log_probs = np.log(probs[:frames])
        classes = np.array(trellis.class_ids)
        frame_index = np.arange(frames)
        path_scores = [
            float(np.sum(log_probs[frame_index, classes[list(path)]]))
            for path in path_set.paths
        ]
        return lattice_service.logsumexp(path_scores)

    def finite_difference_gradient(
            self,
            logits: np.ndarray,
            labels: Sequence[int],
            alphabet: Alphabet,
            kind: TopologyKind,
            h: Optional[float] = None
    ) -> np.ndarray:
        """Центральные разности NLL по каждому логиту"""
        if h is None:
            h = settings.fd_step
        if not OracleValidator.validate_step(h):
            raise ValidationError(f'Шаг конечных разностей {h} вне диапазона [1e-6, 1e-4]')

        logits = np.array(logits, dtype=np.float64)
        trellis = topology_service.expand(labels, alphabet, kind)
        gradient = np.zeros_like(logits)
        for index in np.ndindex(*logits.shape):
            original = logits[index]
            logits[index] = original + h
            plus = lattice_service.sequence_nll(logits, trellis)
            logits[index] = original - h
            minus = lattice_service.sequence_nll(logits, trellis)
            logits[index] = original
            gradient[index] = (plus - minus) / (2.0 * h)
        return gradient

    def finite_difference_weight_gradients(
            self,
            loss_fn: Callable[[Dict[str, np.ndarray]], float],
            weights: Dict[str, np.ndarray],
            h: Optional[float] = None
    ) -> Dict[str, np.ndarray]:
        """Центральные разности скалярной потери по каждому весу"""
        if h is None:
            h = settings.fd_step

        perturbed = {name: np.array(value, dtype=np.float64) for name, value in weights.items()}
        gradients: Dict[str, np.ndarray] = {}
        for name, value in perturbed.items():
            grad = np.zeros_like(value)
            for index in np.ndindex(*value.shape):
                original = value[index]
                value[index] = original + h
                plus = loss_fn(perturbed)
                value[index] = original - h
                minus = loss_fn(perturbed)
                value[index] = original
                grad[index] = (plus - minus) / (2.0 * h)
            gradients[name] = grad
        return gradients


# Глобальный экземпляр сервиса
oracle_service = OracleService()
