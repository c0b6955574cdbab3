import numpy as np

from app.models.topology import Alphabet


def encode(alphabet: Alphabet, text) -> tuple:
    """Строка символов в индексы классов, по одному символу на класс"""
    return alphabet.encode(list(text))


def uniform_probs(frames: int, classes: int) -> np.ndarray:
    return np.full((frames, classes), 1.0 / classes)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return float(np.linalg.norm(analytic - numeric) / max(scale, 1e-12))
