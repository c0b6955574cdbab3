from typing import Dict, Any
import numpy as np
from pydantic import BaseModel, ConfigDict


class LatticeResult(BaseModel):
    """Результат прямого-обратного прохода по решетке"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    log_likelihood: float
    cross_entropy: float
    alpha: np.ndarray
    beta: np.ndarray
    frame_targets: np.ndarray
    gradient: np.ndarray

    @property
    def nll(self) -> float:
        return -self.log_likelihood

    def to_dump(self) -> Dict[str, Any]:
        return {
            "log_likelihood": self.log_likelihood,
            "frame_targets": self.frame_targets.tolist(),
            "gradient": self.gradient.tolist()
        }
