import argparse
import json
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple
import numpy as np
import structlog
from pydantic import ValidationError as PydanticValidationError

from app.config.settings import settings, parse_sizes
from app.models.nnet import FrameStacking, TrainConfig
from app.models.synth import SynthConfig, SynthSample
from app.models.topology import Alphabet, TopologyKind
from app.services.decoder_service import decoder_service
from app.services.file_service import file_service, char_names_for
from app.services.lattice_service import lattice_service
from app.services.nnet_service import nnet_service
from app.services.oracle_service import oracle_service
from app.services.synth_service import synth_service
from app.services.topology_service import topology_service
from app.utils.exceptions import (
    TcsBaseException, FileValidationError, FileStorageError, ValidationError, ConfigurationError,
    DimensionMismatchError, InfeasibleLabelError, OracleGuardError
)
from app.utils.validators import validate_label_names, validate_training_request

logger = structlog.get_logger()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_GUARD = 4


def handle_command_error(e: Exception) -> int:
    """Обработчик ошибок команд: код выхода и сообщение в stderr"""
    if isinstance(e, (FileValidationError, ValidationError, ConfigurationError, DimensionMismatchError,
                      PydanticValidationError)):
        code, error_type = EXIT_INPUT, 'input_error'
    elif isinstance(e, InfeasibleLabelError):
        code, error_type = EXIT_INFEASIBLE, 'infeasible_label'
    elif isinstance(e, OracleGuardError):
        code, error_type = EXIT_GUARD, 'oracle_guard'
    elif isinstance(e, FileStorageError):
        code, error_type = EXIT_FAILURE, 'storage_error'
    else:
        logger.error("Unexpected command error", error=str(e), error_type=type(e).__name__)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE

    details = e.details if isinstance(e, TcsBaseException) else {}
    logger.warning("Command failed", error=str(e), error_type=error_type, **details)
    print(f"error: {e}", file=sys.stderr)
    return code


def emit_json(data: Any) -> None:
    sys.stdout.write(json.dumps(data, ensure_ascii=False) + "\n")


def _load_lattice_inputs(args: argparse.Namespace) -> Tuple[np.ndarray, Alphabet, TopologyKind]:
    logits = file_service.read_matrix_csv(args.logits)
    alphabet = file_service.read_alphabet(args.alphabet)
    kind = TopologyKind(args.topology)
    if logits.shape[1] != alphabet.size:
        raise FileValidationError(
            f'Число столбцов {logits.shape[1]} не совпадает с размером алфавита {alphabet.size}'
        )
    return logits, alphabet, kind


def _parse_labels(raw_labels: str, alphabet: Alphabet) -> List[int]:
    validation_result = validate_label_names(alphabet.names, raw_labels)
    if not validation_result['is_valid']:
        raise ValidationError('; '.join(validation_result['errors']))
    return validation_result['ids']


def cmd_loss(args: argparse.Namespace) -> int:
    """NLL и перекрестная энтропия; по запросу градиент и проверка оракулом"""
    logits, alphabet, kind = _load_lattice_inputs(args)
    labels = _parse_labels(args.labels, alphabet)

    result = lattice_service.loss_and_gradient(logits, labels, alphabet, kind)
    output: Dict[str, Any] = {"nll": result.nll, "cross_entropy": result.cross_entropy}

    if args.grad:
        file_service.write_matrix_csv(result.gradient, args.grad)
    if args.dump:
        file_service.write_json(result.to_dump(), args.dump)

    if args.verify:
        trellis = topology_service.expand(labels, alphabet, kind)
        probs = lattice_service.softmax_frames(logits)
        oracle_nll = -oracle_service.brute_force_log_likelihood(probs, trellis)
        output["oracle_nll"] = oracle_nll
        output["abs_diff"] = abs(oracle_nll - result.nll)

    emit_json(output)
    return EXIT_OK


def cmd_align(args: argparse.Namespace) -> int:
    """Сегменты принудительного выравнивания"""
    logits, alphabet, kind = _load_lattice_inputs(args)
    labels = _parse_labels(args.labels, alphabet)

    alignment = decoder_service.align_logits(logits, labels, alphabet, kind)
    segments = list(alignment.segments)
    if args.speech_span:
        segments = decoder_service.speech_spans(segments)

    emit_json(decoder_service.segments_to_json(segments, alphabet))
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    """Жадное декодирование"""
    logits, alphabet, kind = _load_lattice_inputs(args)
    labels = decoder_service.greedy_decode(lattice_service.softmax_frames(logits), alphabet, kind)
    emit_json({"labels": list(alphabet.decode(labels))})
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """Сгенерировать набор данных в каталог"""
    config = file_service.read_synth_config(args.config) if args.config else SynthConfig()
    if args.seed is not None:
        config = config.model_copy(update={'seed': args.seed})
    if args.n < 0:
        raise ValidationError(f'Число примеров не может быть отрицательным: {args.n}')

    samples = synth_service.generate_dataset(config, args.n)
    root = file_service.save_dataset(samples, config, args.out)
    emit_json({"out": str(root), "n_samples": len(samples), "seed": config.seed})
    return EXIT_OK


def _prepare_samples(samples: Sequence[SynthSample], stacking: Optional[FrameStacking]) -> List[SynthSample]:
    if stacking is None:
        return list(samples)
    return [synth_service.stack_sample(sample, stacking.window, stacking.stride) for sample in samples]


def _split(samples: Sequence[SynthSample], held_out_fraction: float) -> Tuple[List[SynthSample], List[SynthSample]]:
    """Последние примеры набора - отложенная выборка"""
    n_held_out = int(len(samples) * held_out_fraction)
    cut = len(samples) - n_held_out
    return list(samples[:cut]), list(samples[cut:])


def cmd_train(args: argparse.Namespace) -> int:
    """Обучить модель и вывести метрики по эпохам"""
    config, samples = file_service.load_dataset(args.data)
    validation_result = validate_training_request(len(samples), args.held_out_fraction)
    if not validation_result['is_valid']:
        raise ValidationError('; '.join(validation_result['errors']))

    kind = TopologyKind(args.topology)
    stacking = None if args.no_stack else FrameStacking(window=settings.stack_window, stride=settings.stack_stride)
    samples = _prepare_samples(samples, stacking)
    train_set, held_out = _split(samples, args.held_out_fraction)

    alphabet = Alphabet.for_topology(kind, char_names_for(config.n_classes))
    hidden = parse_sizes(args.hidden) if args.hidden else settings.get_hidden_sizes_list()
    layer_sizes = [train_set[0].features.shape[1], *hidden, alphabet.size]
    model = nnet_service.init_model(layer_sizes, alphabet, kind, seed=args.seed)
    model = model.model_copy(update={'stacking': stacking})

    train_config = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        clip_norm=args.clip_norm,
        sortagrad=args.sortagrad,
        topology=kind,
        seed=args.seed
    )
    model, history = nnet_service.train(model, train_set, train_config, held_out or None)
    file_service.save_model(model, args.model_out)

    emit_json({
        "epochs": [metrics.model_dump(mode='json') for metrics in history],
        "model": args.model_out
    })
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Метрики модели на наборе данных"""
    model = file_service.load_model(args.model)
    nnet_service.check_model(model)
    _, samples = file_service.load_dataset(args.data)
    samples = _prepare_samples(samples, model.stacking)
    if args.held_out_fraction is not None:
        _, samples = _split(samples, args.held_out_fraction)

    metrics = nnet_service.evaluate(model, samples, TopologyKind(args.topology) if args.topology else None)
    emit_json(metrics.model_dump(mode='json'))
    return EXIT_OK


def cmd_posteriors(args: argparse.Namespace) -> int:
    """Покадровые апостериорные вероятности классов в CSV; склейка кадров берется из модели"""
    model = file_service.load_model(args.model)
    nnet_service.check_model(model)
    features = file_service.read_matrix_csv(args.input)
    if model.stacking is not None:
        features = synth_service.stack_frames(features, model.stacking.window, model.stacking.stride)

    file_service.write_matrix_csv(nnet_service.posteriors(model, features), stream=sys.stdout)
    return EXIT_OK


def add_lattice_arguments(parser: argparse.ArgumentParser, with_labels: bool = True) -> None:
    parser.add_argument("--logits", required=True, help="CSV логитов T x K")
    if with_labels:
        parser.add_argument("--labels", required=True, help="Метки через запятую (индексы или имена)")
    parser.add_argument("--alphabet", required=True, help="JSON алфавита")
    parser.add_argument("--topology", required=True, choices=[kind.value for kind in TopologyKind])


def create_parser() -> argparse.ArgumentParser:
    """Создание и настройка парсера командной строки"""
    parser = argparse.ArgumentParser(
        prog="tcs",
        description="Решетки CTC и TCS: потеря, выравнивание, декодирование, синтетические данные, обучение"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    loss = subparsers.add_parser("loss", help="NLL и градиент")
    add_lattice_arguments(loss)
    loss.add_argument("--grad", help="CSV для градиента")
    loss.add_argument("--dump", help="JSON с целями и градиентом")
    loss.add_argument("--verify", action="store_true", help="Сверить с переборным оракулом")
    loss.set_defaults(handler=cmd_loss)

    align = subparsers.add_parser("align", help="Принудительное выравнивание")
    add_lattice_arguments(align)
    align.add_argument("--speech-span", action="store_true", help="Присоединить foreground к символу")
    align.set_defaults(handler=cmd_align)

    decode = subparsers.add_parser("decode", help="Жадное декодирование")
    add_lattice_arguments(decode, with_labels=False)
    decode.set_defaults(handler=cmd_decode)

    synth = subparsers.add_parser("synth", help="Сгенерировать синтетический набор")
    synth.add_argument("--out", required=True)
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--config", help="JSON конфигурации генератора")
    synth.set_defaults(handler=cmd_synth)

    train = subparsers.add_parser("train", help="Обучить рекуррентную сеть")
    train.add_argument("--data", required=True)
    train.add_argument("--topology", required=True, choices=[kind.value for kind in TopologyKind])
    train.add_argument("--epochs", type=int, default=settings.epochs)
    train.add_argument("--seed", type=int, default=settings.train_seed)
    train.add_argument("--sortagrad", action="store_true", default=settings.sortagrad)
    train.add_argument("--model-out", required=True)
    train.add_argument("--learning-rate", type=float, default=settings.learning_rate)
    train.add_argument("--clip-norm", type=float, default=settings.clip_norm)
    train.add_argument("--hidden", help="Размеры скрытых слоев через запятую")
    train.add_argument("--held-out-fraction", type=float, default=settings.held_out_fraction)
    train.add_argument("--no-stack", action="store_true", help="Не склеивать кадры в суперкадры")
    train.set_defaults(handler=cmd_train)

    evaluate = subparsers.add_parser("evaluate", help="Оценить модель")
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--topology", choices=[kind.value for kind in TopologyKind])
    evaluate.add_argument("--held-out-fraction", type=float)
    evaluate.set_defaults(handler=cmd_evaluate)

    posteriors = subparsers.add_parser("posteriors", help="Апостериорные вероятности по кадрам")
    posteriors.add_argument("--model", required=True)
    posteriors.add_argument("--input", required=True, help="CSV признаков")
    posteriors.set_defaults(handler=cmd_posteriors)

    return parser


def run_command(argv: Sequence[str]) -> int:
    """Разобрать аргументы и выполнить команду"""
    parser = create_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    try:
        return args.handler(args)
    except Exception as e:
        return handle_command_error(e)
