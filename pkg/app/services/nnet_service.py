from typing import Dict, List, Optional, Sequence, Tuple
import numpy as np
import structlog

from app.config.settings import settings
from app.models.alignment import Segment
from app.models.nnet import (
    EpochMetrics, EvaluationMetrics, ForwardCache, RnnModel, TrainConfig,
    OUTPUT_BIAS, OUTPUT_WEIGHT, layer_weight_names
)
from app.models.synth import SynthSample, TrueSegment
from app.models.topology import Alphabet, StateRole, TopologyKind
from app.services.decoder_service import decoder_service
from app.services.lattice_service import lattice_service
from app.services.topology_service import topology_service
from app.utils.exceptions import DimensionMismatchError, InfeasibleLabelError, ValidationError
from app.utils.validators import MatrixValidator

logger = structlog.get_logger()

Gradients = Dict[str, np.ndarray]


class NnetService:
    """Рекуррентная сеть с ручным BPTT, обучаемая градиентом решетки"""

    def init_model(
            self,
            layer_sizes: Sequence[int],
            alphabet: Alphabet,
            topology: Optional[TopologyKind] = None,
            seed: int = 0
    ) -> RnnModel:
        """Веса равномерно в ±1/sqrt(fan_in), смещения нулевые, кроме выходного смещения foreground"""
        layer_sizes = list(layer_sizes)
        if len(layer_sizes) < 3:
            raise ValidationError(f'Нужен хотя бы один скрытый слой, получено layer_sizes={layer_sizes}')
        if layer_sizes[-1] != alphabet.size:
            raise DimensionMismatchError(
                f'Размер выхода {layer_sizes[-1]} не совпадает с размером алфавита {alphabet.size}'
            )

        rng = np.random.default_rng(seed)
        model = RnnModel(layer_sizes=layer_sizes, weights={}, alphabet=alphabet, topology=topology)
        weights: Dict[str, np.ndarray] = {}
        for name, shape in model.expected_shapes().items():
            if len(shape) == 1:
                weights[name] = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[1])
                weights[name] = rng.uniform(-bound, bound, size=shape)

        # На старте foreground менее вероятен, чем фон
        if alphabet.foreground_id is not None:
            weights[OUTPUT_BIAS][alphabet.foreground_id] = settings.foreground_bias_init

        logger.info("Model initialized", layer_sizes=layer_sizes, seed=seed)
        return model.copy_with(weights)

    def check_model(self, model: RnnModel) -> None:
        for name, shape in model.expected_shapes().items():
            if name not in model.weights:
                raise DimensionMismatchError(f'Отсутствует вес {name}')
            if model.weights[name].shape != shape:
                raise DimensionMismatchError(
                    f'Вес {name}: ожидается форма {shape}, получено {model.weights[name].shape}'
                )
            if not np.all(np.isfinite(model.weights[name])):
                raise ValidationError(f'Вес {name} содержит нечисловые значения')

    def rnn_forward(self, model: RnnModel, features: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        """Однонаправленные tanh-слои с нулевым начальным состоянием и аффинный выход"""
        features = np.asarray(features, dtype=np.float64)
        validation_result = MatrixValidator.validate_features(features, model.input_dim)
        if not validation_result['is_valid']:
            raise DimensionMismatchError('; '.join(validation_result['errors']))

        inputs: List[np.ndarray] = []
        hidden: List[np.ndarray] = []
        layer_input = features
        for layer, size in enumerate(model.hidden_sizes):
            input_name, recurrent_name, bias_name = layer_weight_names(layer)
            w_in = model.weights[input_name]
            w_rec = model.weights[recurrent_name]
            pre = layer_input @ w_in.T + model.weights[bias_name]

            states = np.zeros((layer_input.shape[0], size))
            previous = np.zeros(size)
            for t in range(layer_input.shape[0]):
                previous = np.tanh(pre[t] + w_rec @ previous)
                states[t] = previous

            inputs.append(layer_input)
            hidden.append(states)
            layer_input = states

        logits = layer_input @ model.weights[OUTPUT_WEIGHT].T + model.weights[OUTPUT_BIAS]
        return logits, ForwardCache(layer_sizes=list(model.layer_sizes), inputs=inputs, hidden=hidden)

    def rnn_backward(self, model: RnnModel, cache: ForwardCache, output_grad: np.ndarray) -> Gradients:
        """Полный BPTT по всем весам"""
        if cache.layer_sizes != list(model.layer_sizes):
            raise DimensionMismatchError('Кэш получен от модели другой архитектуры')
        output_grad = np.asarray(output_grad, dtype=np.float64)
        if output_grad.shape != (cache.n_frames, model.n_outputs):
            raise DimensionMismatchError(
                f'Градиент выхода формы {output_grad.shape}, ожидается {(cache.n_frames, model.n_outputs)}'
            )

        grads: Gradients = {
            OUTPUT_WEIGHT: output_grad.T @ cache.hidden[-1],
            OUTPUT_BIAS: output_grad.sum(axis=0)
        }
        upstream = output_grad @ model.weights[OUTPUT_WEIGHT]

        for layer in range(len(model.hidden_sizes) - 1, -1, -1):
            input_name, recurrent_name, bias_name = layer_weight_names(layer)
            w_rec = model.weights[recurrent_name]
            states = cache.hidden[layer]
            frames, size = states.shape

            pre_grad = np.zeros((frames, size))
            carry = np.zeros(size)
            for t in range(frames - 1, -1, -1):
                pre_grad[t] = (upstream[t] + carry) * (1.0 - states[t] ** 2)
                carry = w_rec.T @ pre_grad[t]

            previous_states = np.vstack([np.zeros((1, size)), states[:-1]])
            grads[recurrent_name] = pre_grad.T @ previous_states
            grads[input_name] = pre_grad.T @ cache.inputs[layer]
            grads[bias_name] = pre_grad.sum(axis=0)
            upstream = pre_grad @ model.weights[input_name]

        return grads

    @staticmethod
    def global_norm(grads: Gradients) -> float:
        return float(np.sqrt(sum(np.sum(grad ** 2) for grad in grads.values())))

    def clip_gradients(self, grads: Gradients, clip_norm: Optional[float] = None) -> Gradients:
        """Масштабировать все градиенты, если глобальная норма больше clip_norm"""
        if clip_norm is None:
            clip_norm = settings.clip_norm
        norm = self.global_norm(grads)
        if norm <= clip_norm:
            return grads
        scale = clip_norm / norm
        return {name: grad * scale for name, grad in grads.items()}

    def labels_for(self, sample: SynthSample, alphabet: Alphabet) -> Tuple[int, ...]:
        """Индексы классов генератора в индексы символьных классов алфавита"""
        character_ids = alphabet.character_ids
        return tuple(character_ids[label] for label in sample.labels)

    def posteriors(self, model: RnnModel, features: np.ndarray) -> np.ndarray:
        logits, _ = self.rnn_forward(model, features)
        return lattice_service.softmax_frames(logits)

    def _check_feasible(self, dataset: Sequence[SynthSample], alphabet: Alphabet, kind: TopologyKind) -> None:
        for sample in dataset:
            trellis = topology_service.expand(self.labels_for(sample, alphabet), alphabet, kind)
            min_frames = topology_service.min_frames(trellis)
            if sample.n_frames < min_frames:
                raise InfeasibleLabelError(
                    f'Пример {sample.sample_id}: {sample.n_frames} кадров, min_frames={min_frames}',
                    {'sample_id': sample.sample_id, 'frames': sample.n_frames, 'min_frames': min_frames}
                )

    def _epoch_order(self, dataset: Sequence[SynthSample], epoch: int, sortagrad: bool,
                     rng: np.random.Generator) -> List[int]:
        """SortaGrad: первая эпоха по возрастанию длины, далее случайный порядок"""
        if epoch == 0 and sortagrad:
            return sorted(range(len(dataset)), key=lambda index: dataset[index].n_frames)
        return rng.permutation(len(dataset)).tolist()

    def train(
            self,
            model: RnnModel,
            dataset: Sequence[SynthSample],
            config: TrainConfig,
            held_out: Optional[Sequence[SynthSample]] = None
    ) -> Tuple[RnnModel, List[EpochMetrics]]:
        """Поэлементный SGD: прямой проход, решетка, BPTT, ограничение нормы, шаг"""
        if not dataset:
            raise ValidationError('Набор данных для обучения пуст')
        self.check_model(model)
        kind = TopologyKind(config.topology)
        alphabet = model.alphabet
        if not alphabet.supports(kind):
            raise ValidationError(f'Алфавит модели не поддерживает топологию {kind.value}')
        self._check_feasible(dataset, alphabet, kind)

        weights = {name: value.copy() for name, value in model.weights.items()}
        current = model.copy_with(weights)
        rng = np.random.default_rng(config.seed)
        history: List[EpochMetrics] = []

        logger.info("Training started",
                    topology=kind.value,
                    epochs=config.epochs,
                    samples=len(dataset),
                    learning_rate=config.learning_rate,
                    sortagrad=config.sortagrad)

        for epoch in range(config.epochs):
            total_nll = 0.0
            for index in self._epoch_order(dataset, epoch, config.sortagrad, rng):
                sample = dataset[index]
                logits, cache = self.rnn_forward(current, sample.features)
                result = lattice_service.loss_and_gradient(
                    logits, self.labels_for(sample, alphabet), alphabet, kind
                )
                total_nll += result.nll

                grads = self.clip_gradients(self.rnn_backward(current, cache, result.gradient), config.clip_norm)
                for name, grad in grads.items():
                    weights[name] -= config.learning_rate * grad

            metrics = EpochMetrics(
                epoch=epoch + 1,
                mean_nll=total_nll / len(dataset),
                held_out=self.evaluate(current, held_out, kind) if held_out else None
            )
            history.append(metrics)
            logger.info("Epoch finished",
                        epoch=metrics.epoch,
                        mean_nll=metrics.mean_nll,
                        held_out_accuracy=metrics.held_out.sequence_accuracy if metrics.held_out else None)

        return current.model_copy(update={'topology': kind}), history

    @staticmethod
    def _boundary_hits(predicted: Sequence[Segment], truth: Sequence[TrueSegment], tolerance: int) -> Tuple[int, int]:
        """Число совпавших границ символов (начала и концы) и общее число границ"""
        hits = total = 0
        for segment, true_segment in zip(predicted, truth):
            hits += abs(segment.start_frame - true_segment.start_frame) <= tolerance
            hits += abs(segment.end_frame - true_segment.end_frame) <= tolerance
            total += 2
        return hits, total

    def evaluate(
            self,
            model: RnnModel,
            dataset: Sequence[SynthSample],
            kind: Optional[TopologyKind] = None,
            tolerance: Optional[int] = None
    ) -> EvaluationMetrics:
        """Точность последовательностей, точность границ и доля кадров фона/blank"""
        kind = TopologyKind(kind or model.topology or TopologyKind.TCS)
        if tolerance is None:
            tolerance = settings.boundary_tolerance
        alphabet = model.alphabet
        if not alphabet.supports(kind):
            raise ValidationError(f'Алфавит модели не поддерживает топологию {kind.value}')
        # Занятость считается только по фону (TCS) или blank (CTC), foreground - это речь
        filler_id = alphabet.background_id if kind == TopologyKind.TCS else alphabet.blank_id

        correct = filler_frames = silence_frames = total_frames = 0
        boundary_hits = boundary_total = 0
        for sample in dataset:
            logits, _ = self.rnn_forward(model, sample.features)
            probs = lattice_service.softmax_frames(logits)
            target = self.labels_for(sample, alphabet)

            correct += decoder_service.greedy_decode(probs, alphabet, kind) == target
            filler_frames += int(np.count_nonzero(np.argmax(probs, axis=1) == filler_id))
            silence_frames += sum(segment.length for segment in sample.true_segments if segment.is_silence)
            total_frames += sample.n_frames

            try:
                alignment = decoder_service.align_logits(logits, target, alphabet, kind)
            except InfeasibleLabelError:
                logger.warning("Sample skipped in boundary metric", sample_id=sample.sample_id)
                continue
            characters = [segment for segment in alignment.segments if segment.role == StateRole.CHARACTER]
            hits, total = self._boundary_hits(characters, sample.character_segments(), tolerance)
            boundary_hits += hits
            boundary_total += total

        n_samples = len(dataset)
        return EvaluationMetrics(
            sequence_accuracy=correct / n_samples if n_samples else 0.0,
            boundary_accuracy=boundary_hits / boundary_total if boundary_total else None,
            filler_occupancy=filler_frames / total_frames if total_frames else 0.0,
            silence_fraction=silence_frames / total_frames if total_frames else 0.0,
            n_samples=n_samples
        )


# Глобальный экземпляр сервиса
nnet_service = NnetService()
