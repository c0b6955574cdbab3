from enum import Enum
from typing import Optional, List, Tuple, FrozenSet, Sequence
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.utils.validators import AlphabetValidator


class TopologyKind(str, Enum):
    CTC = "ctc"
    TCS = "tcs"


class StateRole(str, Enum):
    BLANK = "blank"
    BACKGROUND = "background"
    FOREGROUND = "foreground"
    CHARACTER = "character"


# Отображение символов ролей в документации: '/', '~', '+'
BLANK_SYMBOL = "/"
BACKGROUND_SYMBOL = "~"
FOREGROUND_SYMBOL = "+"


class Alphabet(BaseModel):
    """Набор классов с зарезервированными специальными классами"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    names: Tuple[str, ...]
    blank_id: Optional[int] = Field(None, alias="blank")
    background_id: Optional[int] = Field(None, alias="background")
    foreground_id: Optional[int] = Field(None, alias="foreground")

    @model_validator(mode='after')
    def check_specials(self):
        validation_result = AlphabetValidator.validate_alphabet(
            self.names, self.blank_id, self.background_id, self.foreground_id
        )
        if not validation_result['is_valid']:
            raise ValueError('; '.join(validation_result['errors']))
        return self

    @classmethod
    def for_topology(cls, kind: TopologyKind, char_names: Sequence[str]) -> 'Alphabet':
        """Стандартный алфавит: специальные классы первыми"""
        kind = TopologyKind(kind)
        if kind == TopologyKind.CTC:
            return cls(names=(BLANK_SYMBOL, *char_names), blank_id=0)
        return cls(names=(BACKGROUND_SYMBOL, FOREGROUND_SYMBOL, *char_names), background_id=0, foreground_id=1)

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def special_ids(self) -> FrozenSet[int]:
        return frozenset(
            idx for idx in (self.blank_id, self.background_id, self.foreground_id) if idx is not None
        )

    @property
    def character_ids(self) -> Tuple[int, ...]:
        return tuple(idx for idx in range(self.size) if idx not in self.special_ids)

    def supports(self, kind: TopologyKind) -> bool:
        """Поддерживает ли алфавит данную топологию"""
        if TopologyKind(kind) == TopologyKind.CTC:
            return self.blank_id is not None
        return self.background_id is not None and self.foreground_id is not None

    def filler_ids(self, kind: TopologyKind) -> FrozenSet[int]:
        """Классы, удаляемые функцией свертки для данной топологии"""
        if TopologyKind(kind) == TopologyKind.CTC:
            return frozenset({self.blank_id})
        return frozenset({self.background_id, self.foreground_id})

    def encode(self, names: Sequence[str]) -> Tuple[int, ...]:
        return tuple(self.names.index(name) for name in names)

    def decode(self, ids: Sequence[int]) -> Tuple[str, ...]:
        return tuple(self.names[idx] for idx in ids)

    def to_json(self) -> dict:
        return {
            "names": list(self.names),
            "blank": self.blank_id,
            "background": self.background_id,
            "foreground": self.foreground_id
        }


# Последовательность индексов символьных классов длины U
LabelSequence = Tuple[int, ...]


class TrellisState(BaseModel):
    model_config = ConfigDict(frozen=True)

    class_id: int
    role: StateRole
    label_position: int


class StateTrellis(BaseModel):
    """Развернутая последовательность состояний с допустимыми переходами"""

    model_config = ConfigDict(frozen=True)

    kind: TopologyKind
    labels: Tuple[int, ...]
    states: Tuple[TrellisState, ...]
    predecessors: Tuple[Tuple[int, ...], ...]
    start_states: FrozenSet[int]
    end_states: FrozenSet[int]

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def class_ids(self) -> List[int]:
        return [state.class_id for state in self.states]

    def successors(self) -> List[List[int]]:
        """Списки последователей (включая петлю), в порядке возрастания"""
        result: List[List[int]] = [[] for _ in self.states]
        for state, preds in enumerate(self.predecessors):
            for pred in preds:
                result[pred].append(state)
        return [sorted(succ) for succ in result]

    def allows(self, source: int, target: int) -> bool:
        return source in self.predecessors[target]
