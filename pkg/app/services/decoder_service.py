from typing import List, Sequence, Dict, Any
import numpy as np
import structlog

from app.models.alignment import Alignment, Segment
from app.models.topology import Alphabet, LabelSequence, StateRole, StateTrellis, TopologyKind
from app.services.lattice_service import lattice_service
from app.services.topology_service import topology_service
from app.utils.exceptions import InfeasibleLabelError, ValidationError

logger = structlog.get_logger()


class DecoderService:
    """Жадное декодирование, принудительное выравнивание Витерби и сегментация"""

    def greedy_decode(self, probs: np.ndarray, alphabet: Alphabet, kind: TopologyKind) -> LabelSequence:
        """Покадровый argmax (при равенстве - меньший индекс), затем свертка F"""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[1] != alphabet.size:
            raise ValidationError(
                f'Ожидается матрица T x {alphabet.size}, получена форма {probs.shape}'
            )
        class_path = np.argmax(probs, axis=1).tolist()
        return topology_service.collapse(class_path, alphabet, kind)

    def viterbi_align(self, probs: np.ndarray, trellis: StateTrellis) -> Alignment:
        """Путь максимальной вероятности по решетке"""
        with np.errstate(divide='ignore'):
            log_probs = np.log(np.asarray(probs, dtype=np.float64))
        return self.viterbi_align_log(log_probs, trellis)

    def viterbi_align_log(self, log_probs: np.ndarray, trellis: StateTrellis) -> Alignment:
        frames = log_probs.shape[0]
        min_frames = topology_service.min_frames(trellis)
        if frames < min_frames:
            raise InfeasibleLabelError(
                f'Разметка не помещается в {frames} кадров: min_frames={min_frames}',
                {'frames': frames, 'min_frames': min_frames}
            )

        emissions = log_probs[:, np.array(trellis.class_ids)]
        # Порядок кандидатов задает разрешение равенств: сначала петля, затем по возрастанию индекса
        candidates = [
            [state] + sorted(pred for pred in preds if pred != state)
            for state, preds in enumerate(trellis.predecessors)
        ]

        scores = np.full((frames, trellis.n_states), -np.inf)
        backpointers = np.zeros((frames, trellis.n_states), dtype=np.int64)
        starts = sorted(trellis.start_states)
        scores[0, starts] = emissions[0, starts]

        for t in range(1, frames):
            previous = scores[t - 1]
            for state, preds in enumerate(candidates):
                best = preds[int(np.argmax(previous[preds]))]
                scores[t, state] = previous[best] + emissions[t, state]
                backpointers[t, state] = best

        ends = sorted(trellis.end_states)
        final = ends[int(np.argmax(scores[-1, ends]))]
        log_prob = float(scores[-1, final])
        if not np.isfinite(log_prob):
            raise InfeasibleLabelError('Нет допустимого пути ненулевой вероятности', {'frames': frames})

        path = [final]
        for t in range(frames - 1, 0, -1):
            path.append(int(backpointers[t, path[-1]]))
        path.reverse()

        segments = self.extract_segments(path, trellis)
        logger.debug("Viterbi alignment found", frames=frames, log_prob=log_prob, segments=len(segments))
        return Alignment(state_path=tuple(path), log_prob=log_prob, segments=tuple(segments))

    def extract_segments(self, state_path: Sequence[int], trellis: StateTrellis) -> List[Segment]:
        """Максимальные серии одинаковых состояний"""
        segments: List[Segment] = []
        run_start = 0
        for t in range(1, len(state_path) + 1):
            if t == len(state_path) or state_path[t] != state_path[run_start]:
                state = trellis.states[state_path[run_start]]
                segments.append(Segment(
                    class_id=state.class_id,
                    role=state.role,
                    start_frame=run_start,
                    end_frame=t - 1,
                    label_position=state.label_position
                ))
                run_start = t
        return segments

    def speech_spans(self, segments: Sequence[Segment]) -> List[Segment]:
        """Присоединить каждый сегмент foreground к следующему символу"""
        merged: List[Segment] = []
        pending = None
        for segment in segments:
            if segment.role == StateRole.FOREGROUND:
                pending = segment
                continue
            if pending is not None and segment.role == StateRole.CHARACTER:
                segment = segment.model_copy(update={'start_frame': pending.start_frame})
            elif pending is not None:
                merged.append(pending)
            pending = None
            merged.append(segment)
        if pending is not None:
            merged.append(pending)
        return merged

    def segments_to_json(self, segments: Sequence[Segment], alphabet: Alphabet) -> List[Dict[str, Any]]:
        return [segment.to_json(alphabet) for segment in segments]

    def align_logits(
            self,
            logits: np.ndarray,
            labels: Sequence[int],
            alphabet: Alphabet,
            kind: TopologyKind
    ) -> Alignment:
        """Выравнивание по сырым оценкам сети"""
        trellis = topology_service.expand(labels, alphabet, kind)
        return self.viterbi_align_log(lattice_service.log_softmax_frames(logits), trellis)


# Глобальный экземпляр сервиса
decoder_service = DecoderService()
