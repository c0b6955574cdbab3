from typing import List, Optional, Sequence, Tuple
import numpy as np
import structlog
from sklearn.metrics import pairwise_distances

from app.config.settings import settings
from app.models.synth import SynthConfig, SynthSample, TrueSegment
from app.utils.exceptions import ConfigurationError, ValidationError

logger = structlog.get_logger()

MIN_TEMPLATE_DISTANCE = 1.0
MAX_TEMPLATE_TRIES = 1000


class SynthService:
    """Детерминированный генератор размеченных последовательностей"""

    @staticmethod
    def _streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
        """Независимые потоки для шаблонов и для примеров"""
        template_seq, sample_seq = np.random.SeedSequence(seed).spawn(2)
        return np.random.default_rng(template_seq), np.random.default_rng(sample_seq)

    def make_templates(self, config: SynthConfig) -> np.ndarray:
        """Шаблоны классов, попарно удаленные не меньше чем на MIN_TEMPLATE_DISTANCE"""
        rng, _ = self._streams(config.seed)
        for attempt in range(1, MAX_TEMPLATE_TRIES + 1):
            templates = rng.standard_normal((config.n_classes, config.feature_dim))
            if config.n_classes < 2:
                return templates

            distances = pairwise_distances(templates)
            min_distance = distances[np.triu_indices(config.n_classes, k=1)].min()
            if min_distance >= MIN_TEMPLATE_DISTANCE:
                logger.debug("Templates drawn", attempts=attempt, min_distance=float(min_distance))
                return templates

        raise ConfigurationError(
            f'Не удалось получить различимые шаблоны за {MAX_TEMPLATE_TRIES} попыток',
            {'n_classes': config.n_classes, 'feature_dim': config.feature_dim}
        )

    def generate_sample(
            self,
            config: SynthConfig,
            rng: np.random.Generator,
            templates: Optional[np.ndarray] = None,
            sample_id: str = ""
    ) -> SynthSample:
        """Пример: тишина, символ, тишина, ..., символ, тишина"""
        if templates is None:
            templates = self.make_templates(config)

        n_labels = int(rng.integers(config.seq_len[0], config.seq_len[1] + 1))
        labels = rng.integers(0, config.n_classes, size=n_labels)
        char_durations = rng.integers(config.char_dur[0], config.char_dur[1] + 1, size=n_labels)
        gap_durations = rng.integers(config.gap_dur[0], config.gap_dur[1] + 1, size=n_labels + 1)

        blocks: List[np.ndarray] = []
        segments: List[TrueSegment] = []
        cursor = 0

        def add_block(class_id: Optional[int], duration: int) -> None:
            nonlocal cursor
            mean = np.zeros(config.feature_dim) if class_id is None else templates[class_id]
            noise = rng.normal(0.0, config.noise_sigma, size=(duration, config.feature_dim))
            blocks.append(mean + noise)
            segments.append(TrueSegment(class_id=class_id, start_frame=cursor, end_frame=cursor + duration - 1))
            cursor += duration

        add_block(None, int(gap_durations[0]))
        for position in range(n_labels):
            add_block(int(labels[position]), int(char_durations[position]))
            add_block(None, int(gap_durations[position + 1]))

        return SynthSample(
            sample_id=sample_id,
            features=np.vstack(blocks),
            labels=tuple(int(label) for label in labels),
            true_segments=tuple(segments)
        )

    def generate_dataset(self, config: SynthConfig, n_samples: int) -> List[SynthSample]:
        """n_samples примеров из потока, определяемого seed"""
        if n_samples < 0:
            raise ValidationError(f'Число примеров не может быть отрицательным: {n_samples}')

        templates = self.make_templates(config)
        _, rng = self._streams(config.seed)
        samples = [
            self.generate_sample(config, rng, templates, sample_id=f"{index:05d}")
            for index in range(n_samples)
        ]
        logger.info("Synthetic dataset generated", n_samples=n_samples, seed=config.seed)
        return samples

    @staticmethod
    def _stacking(window: Optional[int], stride: Optional[int]) -> Tuple[int, int]:
        window = settings.stack_window if window is None else window
        stride = settings.stack_stride if stride is None else stride
        if window < 1 or stride < 1:
            raise ValidationError(
                f'Окно и шаг склейки должны быть положительными: window={window}, stride={stride}',
                {'window': window, 'stride': stride}
            )
        return window, stride

    def stack_frames(self, features: np.ndarray, window: Optional[int] = None,
                     stride: Optional[int] = None) -> np.ndarray:
        """Суперкадры из window соседних кадров с шагом stride; хвост отбрасывается"""
        window, stride = self._stacking(window, stride)
        features = np.asarray(features, dtype=np.float64)
        frames, dims = features.shape
        if frames < window:
            raise ValidationError(
                f'Последовательность слишком коротка для склейки: {frames} < {window}',
                {'frames': frames, 'window': window}
            )

        windows = np.lib.stride_tricks.sliding_window_view(features, (window, dims))[::stride, 0]
        return windows.reshape(windows.shape[0], window * dims)

    @staticmethod
    def rescale_segments(segments: Sequence[TrueSegment], stride: int, n_super: int,
                         offset: int = 0) -> Tuple[TrueSegment, ...]:
        """Начала переводятся как floor((b - offset) / stride), концы - начало следующего минус 1"""
        starts = [min(max(segment.start_frame - offset, 0) // stride, n_super - 1) for segment in segments]
        rescaled: List[TrueSegment] = []
        for index, segment in enumerate(segments):
            start = starts[index]
            end = starts[index + 1] - 1 if index + 1 < len(segments) else n_super - 1
            end = min(end, n_super - 1)
            # Сегмент короче шага исчезает
            if end < start:
                continue
            rescaled.append(TrueSegment(class_id=segment.class_id, start_frame=start, end_frame=end))
        return tuple(rescaled)

    def stack_sample(self, sample: SynthSample, window: Optional[int] = None,
                     stride: Optional[int] = None) -> SynthSample:
        """Склеить признаки примера и пересчитать истинные границы"""
        window, stride = self._stacking(window, stride)
        stacked = self.stack_frames(sample.features, window, stride)
        # Граница переходит на первый суперкадр, у которого новый сегмент занимает около половины окна
        offset = max(0, (window - stride) // 2) if settings.stack_center_labels else 0
        return sample.model_copy(update={
            'features': stacked,
            'true_segments': self.rescale_segments(sample.true_segments, stride, stacked.shape[0], offset)
        })


# Глобальный экземпляр сервиса
synth_service = SynthService()
