from collections import deque
from typing import List, Optional, Sequence, Tuple
import structlog

from app.config.settings import settings
from app.models.topology import (
    Alphabet, LabelSequence, StateRole, StateTrellis, TopologyKind, TrellisState
)
from app.utils.exceptions import ValidationError
from app.utils.validators import LabelValidator

logger = structlog.get_logger()


class TopologyService:
    """Построение решеток CTC и TCS и функция свертки F"""

    def _check_labels(self, labels: Sequence[int], alphabet: Alphabet) -> LabelSequence:
        validation_result = LabelValidator.validate_labels(labels, alphabet.size, alphabet.special_ids)
        if not validation_result['is_valid']:
            raise ValidationError('; '.join(validation_result['errors']), {'labels': list(labels)})
        return tuple(int(label) for label in labels)

    def expand_ctc(self, labels: Sequence[int], alphabet: Alphabet) -> StateTrellis:
        """Решетка CTC: /,c1,/,c2,...,cU,/ из 2U+1 состояний"""
        if alphabet.blank_id is None:
            raise ValidationError('Для топологии CTC алфавит должен задавать blank')
        labels = self._check_labels(labels, alphabet)

        states: List[TrellisState] = []
        predecessors: List[Tuple[int, ...]] = []
        for position, label in enumerate(labels):
            blank_index = len(states)
            states.append(TrellisState(class_id=alphabet.blank_id, role=StateRole.BLANK, label_position=position))
            predecessors.append((blank_index, blank_index - 1) if blank_index > 0 else (blank_index,))

            char_index = len(states)
            states.append(TrellisState(class_id=label, role=StateRole.CHARACTER, label_position=position))
            preds = [char_index, char_index - 1]
            # Пропуск blank только между различными символами
            if position > 0 and labels[position - 1] != label:
                preds.append(char_index - 2)
            predecessors.append(tuple(preds))

        last = len(states)
        states.append(TrellisState(class_id=alphabet.blank_id, role=StateRole.BLANK, label_position=len(labels)))
        predecessors.append((last, last - 1) if last > 0 else (last,))

        size = len(states)
        start_states = {0, 1} if labels else {0}
        end_states = {size - 1, size - 2} if labels else {size - 1}

        trellis = StateTrellis(
            kind=TopologyKind.CTC,
            labels=labels,
            states=tuple(states),
            predecessors=tuple(predecessors),
            start_states=frozenset(start_states),
            end_states=frozenset(end_states)
        )
        logger.debug("CTC trellis built", label_count=len(labels), state_count=size)
        return trellis

    def expand_tcs(
            self,
            labels: Sequence[int],
            alphabet: Alphabet,
            optional_background: Optional[bool] = None
    ) -> StateTrellis:
        """Решетка TCS: (~,+,c) x U и завершающий ~, всего 3U+1 состояний"""
        if alphabet.background_id is None or alphabet.foreground_id is None:
            raise ValidationError('Для топологии TCS алфавит должен задавать background и foreground')
        labels = self._check_labels(labels, alphabet)

        if optional_background is None:
            optional_background = settings.tcs_optional_background

        states: List[TrellisState] = []
        predecessors: List[Tuple[int, ...]] = []
        for position, label in enumerate(labels):
            background_index = len(states)
            previous_char = background_index - 1 if position > 0 else None

            states.append(TrellisState(
                class_id=alphabet.background_id, role=StateRole.BACKGROUND, label_position=position
            ))
            predecessors.append(
                (background_index,) if previous_char is None else (background_index, previous_char)
            )

            # foreground достижим из своего background и из предыдущего символа
            foreground_index = background_index + 1
            states.append(TrellisState(
                class_id=alphabet.foreground_id, role=StateRole.FOREGROUND, label_position=position
            ))
            preds = [foreground_index, background_index]
            if previous_char is not None:
                preds.append(previous_char)
            predecessors.append(tuple(preds))

            char_index = foreground_index + 1
            states.append(TrellisState(class_id=label, role=StateRole.CHARACTER, label_position=position))
            predecessors.append((char_index, foreground_index))

        last = len(states)
        states.append(TrellisState(
            class_id=alphabet.background_id, role=StateRole.BACKGROUND, label_position=len(labels)
        ))
        predecessors.append((last, last - 1) if last > 0 else (last,))

        size = len(states)
        if labels and optional_background:
            start_states, end_states = {0, 1}, {size - 1, size - 2}
        else:
            start_states, end_states = {0}, {size - 1}

        trellis = StateTrellis(
            kind=TopologyKind.TCS,
            labels=labels,
            states=tuple(states),
            predecessors=tuple(predecessors),
            start_states=frozenset(start_states),
            end_states=frozenset(end_states)
        )
        logger.debug("TCS trellis built", label_count=len(labels), state_count=size,
                     optional_background=optional_background)
        return trellis

    def expand(self, labels: Sequence[int], alphabet: Alphabet, kind: TopologyKind) -> StateTrellis:
        """Построить решетку выбранной топологии"""
        if TopologyKind(kind) == TopologyKind.CTC:
            return self.expand_ctc(labels, alphabet)
        return self.expand_tcs(labels, alphabet)

    def collapse(self, class_path: Sequence[int], alphabet: Alphabet, kind: TopologyKind) -> LabelSequence:
        """Функция F: слить соседние повторы, затем удалить специальные классы"""
        validation_result = LabelValidator.validate_class_path(class_path, alphabet.size)
        if not validation_result['is_valid']:
            raise ValidationError('; '.join(validation_result['errors']))

        fillers = alphabet.filler_ids(kind)
        merged: List[int] = []
        for idx in class_path:
            if not merged or merged[-1] != idx:
                merged.append(int(idx))
        return tuple(idx for idx in merged if idx not in fillers)

    def min_frames(self, trellis: StateTrellis) -> int:
        """Длина кратчайшего допустимого пути от начального до конечного состояния"""
        successors = trellis.successors()
        distance = {state: 1 for state in trellis.start_states}
        queue = deque(sorted(trellis.start_states))
        while queue:
            state = queue.popleft()
            if state in trellis.end_states:
                return distance[state]
            for nxt in successors[state]:
                if nxt not in distance:
                    distance[nxt] = distance[state] + 1
                    queue.append(nxt)
        # Недостижимо для корректно построенной решетки
        raise ValidationError('В решетке нет пути от начального до конечного состояния')


# Глобальный экземпляр сервиса
topology_service = TopologyService()
