from typing import Dict, List, Optional, Tuple
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.config.settings import settings
from app.models.topology import Alphabet, TopologyKind


def layer_weight_names(layer: int) -> Tuple[str, str, str]:
    """Имена весов рекуррентного слоя: вход, рекуррентная связь, смещение"""
    return f"layers.{layer}.input", f"layers.{layer}.recurrent", f"layers.{layer}.bias"


OUTPUT_WEIGHT = "output.weight"
OUTPUT_BIAS = "output.bias"


class FrameStacking(BaseModel):
    """Склейка кадров, с которой обучалась модель"""

    model_config = ConfigDict(frozen=True)

    window: int = Field(gt=0)
    stride: int = Field(gt=0)


class RnnModel(BaseModel):
    """Стек tanh-рекуррентных слоев с аффинным выходным слоем"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    layer_sizes: List[int]
    weights: Dict[str, np.ndarray]
    alphabet: Alphabet
    topology: Optional[TopologyKind] = None
    stacking: Optional[FrameStacking] = None
    version: int = Field(default_factory=lambda: settings.model_version)

    @field_validator('layer_sizes')
    @classmethod
    def check_layer_sizes(cls, v):
        if len(v) < 3 or any(size <= 0 for size in v):
            raise ValueError('layer_sizes: нужны вход, хотя бы один скрытый слой и выход положительного размера')
        return v

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def hidden_sizes(self) -> List[int]:
        return self.layer_sizes[1:-1]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def expected_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes: Dict[str, Tuple[int, ...]] = {}
        for layer, (fan_in, hidden) in enumerate(zip(self.layer_sizes[:-2], self.layer_sizes[1:-1])):
            input_name, recurrent_name, bias_name = layer_weight_names(layer)
            shapes[input_name] = (hidden, fan_in)
            shapes[recurrent_name] = (hidden, hidden)
            shapes[bias_name] = (hidden,)
        shapes[OUTPUT_WEIGHT] = (self.n_outputs, self.layer_sizes[-2])
        shapes[OUTPUT_BIAS] = (self.n_outputs,)
        return shapes

    def copy_with(self, weights: Dict[str, np.ndarray]) -> 'RnnModel':
        return self.model_copy(update={'weights': weights})


class ForwardCache(BaseModel):
    """Активации прямого прохода, нужные для BPTT"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    layer_sizes: List[int]
    inputs: List[np.ndarray]   # вход каждого рекуррентного слоя, T x fan_in
    hidden: List[np.ndarray]   # выход каждого рекуррентного слоя, T x H

    @property
    def n_frames(self) -> int:
        return int(self.inputs[0].shape[0])


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default_factory=lambda: settings.epochs, ge=0)
    learning_rate: float = Field(default_factory=lambda: settings.learning_rate, ge=0.0)
    clip_norm: float = Field(default_factory=lambda: settings.clip_norm, gt=0.0)
    sortagrad: bool = Field(default_factory=lambda: settings.sortagrad)
    topology: TopologyKind = TopologyKind.TCS
    seed: int = Field(default_factory=lambda: settings.train_seed)


class EvaluationMetrics(BaseModel):
    sequence_accuracy: float
    boundary_accuracy: Optional[float] = None
    filler_occupancy: float
    silence_fraction: float
    n_samples: int


class EpochMetrics(BaseModel):
    epoch: int
    mean_nll: float
    held_out: Optional[EvaluationMetrics] = None
