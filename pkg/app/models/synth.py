from typing import Optional, Tuple, Dict, Any
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class SynthConfig(BaseModel):
    """Параметры синтетического генератора"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_classes: int = Field(10, ge=1)
    feature_dim: int = Field(32, ge=1)
    noise_sigma: float = Field(0.1, ge=0.0)
    char_dur: Tuple[int, int] = (8, 20)
    gap_dur: Tuple[int, int] = (2, 12)
    seq_len: Tuple[int, int] = (3, 6)
    seed: int = 0

    @field_validator('char_dur', 'gap_dur')
    @classmethod
    def check_duration_range(cls, v):
        low, high = v
        if low < 1 or high < low:
            raise ValueError(f'Некорректный диапазон длительностей: {v}')
        return v

    @field_validator('seq_len')
    @classmethod
    def check_length_range(cls, v):
        low, high = v
        if low < 0 or high < low:
            raise ValueError(f'Некорректный диапазон длины разметки: {v}')
        return v


class TrueSegment(BaseModel):
    """Истинный сегмент: класс символа или тишина (class_id=None)"""

    model_config = ConfigDict(frozen=True)

    class_id: Optional[int] = None
    start_frame: int
    end_frame: int

    @property
    def is_silence(self) -> bool:
        return self.class_id is None

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1

    def to_json(self) -> Dict[str, Any]:
        return {"class": self.class_id, "start": self.start_frame, "end": self.end_frame}


class SynthSample(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sample_id: str = ""
    features: np.ndarray
    labels: Tuple[int, ...]
    true_segments: Tuple[TrueSegment, ...]

    @property
    def n_frames(self) -> int:
        return int(self.features.shape[0])

    @property
    def silence_fraction(self) -> float:
        silence = sum(segment.length for segment in self.true_segments if segment.is_silence)
        return silence / self.n_frames

    def character_segments(self) -> Tuple[TrueSegment, ...]:
        return tuple(segment for segment in self.true_segments if not segment.is_silence)
