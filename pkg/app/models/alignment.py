from typing import Tuple, Dict, Any
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.topology import StateRole, Alphabet


class Segment(BaseModel):
    model_config = ConfigDict(frozen=True)

    class_id: int
    role: StateRole
    start_frame: int = Field(..., ge=0)
    end_frame: int = Field(..., ge=0)
    label_position: int = 0

    @model_validator(mode='after')
    def check_bounds(self):
        if self.end_frame < self.start_frame:
            raise ValueError('end_frame не может быть меньше start_frame')
        return self

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1

    def to_json(self, alphabet: Alphabet) -> Dict[str, Any]:
        return {
            "label": alphabet.names[self.class_id],
            "role": self.role.value,
            "start": self.start_frame,
            "end": self.end_frame
        }


class Alignment(BaseModel):
    """Путь Витерби по решетке"""

    model_config = ConfigDict(frozen=True)

    state_path: Tuple[int, ...]
    log_prob: float
    segments: Tuple[Segment, ...]


class PathSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    frames: int
    paths: Tuple[Tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.paths)
