from typing import List, Optional, Dict, Any, Sequence

import numpy as np

from app.config.settings import settings


class AlphabetValidator:
    """Валидатор для алфавита классов"""

    @staticmethod
    def validate_alphabet(
            names: Sequence[str],
            blank_id: Optional[int],
            background_id: Optional[int],
            foreground_id: Optional[int]
    ) -> Dict[str, Any]:
        """Валидация алфавита: специальные классы различны и в диапазоне"""
        result = {
            'is_valid': True,
            'errors': []
        }

        n_classes = len(names)
        if n_classes < 2:
            result['is_valid'] = False
            result['errors'].append('Алфавит должен содержать минимум 2 класса')

        if len(set(names)) != n_classes:
            result['is_valid'] = False
            result['errors'].append('Имена классов должны быть уникальны')

        specials = {
            'blank': blank_id,
            'background': background_id,
            'foreground': foreground_id
        }
        present = [idx for idx in specials.values() if idx is not None]

        for role, idx in specials.items():
            if idx is not None and not 0 <= idx < n_classes:
                result['is_valid'] = False
                result['errors'].append(f'Индекс {role}={idx} вне диапазона [0, {n_classes})')

        if len(set(present)) != len(present):
            result['is_valid'] = False
            result['errors'].append('Специальные классы должны иметь различные индексы')

        if (background_id is None) != (foreground_id is None):
            result['is_valid'] = False
            result['errors'].append('background и foreground задаются только вместе')

        if blank_id is None and background_id is None:
            result['is_valid'] = False
            result['errors'].append('Алфавит должен задавать blank (CTC) или background/foreground (TCS)')

        return result


class LabelValidator:
    """Валидатор для последовательностей меток"""

    @staticmethod
    def validate_labels(ids: Sequence[int], n_classes: int, special_ids: Sequence[int]) -> Dict[str, Any]:
        """Все метки - символьные классы алфавита"""
        result = {
            'is_valid': True,
            'errors': []
        }

        for position, label_id in enumerate(ids):
            if not isinstance(label_id, (int, np.integer)) or isinstance(label_id, bool):
                result['is_valid'] = False
                result['errors'].append(f'Метка в позиции {position} не является индексом: {label_id!r}')
                continue

            if not 0 <= label_id < n_classes:
                result['is_valid'] = False
                result['errors'].append(f'Метка {label_id} в позиции {position} вне диапазона [0, {n_classes})')
            elif label_id in special_ids:
                result['is_valid'] = False
                result['errors'].append(f'Метка {label_id} в позиции {position} является специальным классом')

        return result

    @staticmethod
    def validate_class_path(path: Sequence[int], n_classes: int) -> Dict[str, Any]:
        """Проверка диапазона индексов покадрового пути"""
        result = {
            'is_valid': True,
            'errors': []
        }

        bad = [int(idx) for idx in path if not 0 <= int(idx) < n_classes]
        if bad:
            result['is_valid'] = False
            result['errors'].append(f'Индексы классов вне диапазона [0, {n_classes}): {bad[:5]}')

        return result


class MatrixValidator:
    """Валидатор для покадровых матриц"""

    @staticmethod
    def validate_logits(values: np.ndarray, n_classes: Optional[int] = None) -> Dict[str, Any]:
        """Валидация матрицы логитов T x K"""
        result = {
            'is_valid': True,
            'errors': []
        }

        if values.ndim != 2:
            result['is_valid'] = False
            result['errors'].append(f'Ожидается матрица T x K, получено измерений: {values.ndim}')
            return result

        frames, classes = values.shape
        if frames < 1:
            result['is_valid'] = False
            result['errors'].append('Матрица должна содержать минимум 1 кадр')

        if classes < 2:
            result['is_valid'] = False
            result['errors'].append('Матрица должна содержать минимум 2 класса')

        if n_classes is not None and classes != n_classes:
            result['is_valid'] = False
            result['errors'].append(f'Число столбцов {classes} не совпадает с размером алфавита {n_classes}')

        if not np.all(np.isfinite(values)):
            result['is_valid'] = False
            result['errors'].append('Матрица содержит нечисловые или бесконечные значения')

        return result

        if np.any(values < 0.0):
            result['is_valid'] = False
            result['errors'].append('Вероятности не могут быть отрицательными')

        row_sums = values.sum(axis=1)
        if not np.allclose(row_sums, 1.0, atol=1e-6):
            result['is_valid'] = False
            result['errors'].append('Строки матрицы вероятностей должны суммироваться в 1')

        return result

    @staticmethod
    def validate_features(values: np.ndarray, feature_dim: Optional[int] = None) -> Dict[str, Any]:
        """Валидация матрицы признаков T x D"""
        result = {
            'is_valid': True,
            'errors': []
        }

        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            result['is_valid'] = False
            result['errors'].append(f'Ожидается непустая матрица T x D, получена форма {values.shape}')
            return result

        if feature_dim is not None and values.shape[1] != feature_dim:
            result['is_valid'] = False
            result['errors'].append(
                f'Неверная размерность признаков. Ожидается: {feature_dim}, получено: {values.shape[1]}'
            )

        if not np.all(np.isfinite(values)):
            result['is_valid'] = False
            result['errors'].append('Признаки содержат нечисловые или бесконечные значения')

        return result


class OracleValidator:
    """Валидатор для параметров оракулов"""

    @staticmethod
    def validate_step(h: float) -> bool:
        """Шаг конечных разностей"""
        return 1e-6 <= h <= 1e-4

    @staticmethod
    def validate_frames(frames: int) -> bool:
        """Число кадров для перебора"""
        return frames >= 1


def validate_label_names(names: Sequence[str], raw_labels: str) -> Dict[str, Any]:
    """Разбор списка меток из командной строки: индексы или имена классов"""
    result = {
        'is_valid': True,
        'errors': [],
        'ids': []
    }

    tokens = [token.strip() for token in raw_labels.split(',')] if raw_labels.strip() else []
    ids: List[int] = []
    for token in tokens:
        if token in names:
            ids.append(list(names).index(token))
            continue
        try:
            ids.append(int(token))
        except ValueError:
            result['is_valid'] = False
            result['errors'].append(f'Неизвестная метка: {token!r}')

    result['ids'] = ids
    return result


def validate_lattice_request(
        logits: np.ndarray,
        labels: Sequence[int],
        n_classes: int,
        special_ids: Sequence[int]
) -> Dict[str, Any]:
    """Комплексная валидация запроса на вычисление решетки"""
    result = {
        'is_valid': True,
        'errors': []
    }

    logits_result = MatrixValidator.validate_logits(logits, n_classes)
    if not logits_result['is_valid']:
        result['is_valid'] = False
        result['errors'].extend(logits_result['errors'])

    labels_result = LabelValidator.validate_labels(labels, n_classes, special_ids)
    if not labels_result['is_valid']:
        result['is_valid'] = False
        result['errors'].extend(labels_result['errors'])

    return result


def validate_training_request(n_samples: int, held_out_fraction: Optional[float] = None) -> Dict[str, Any]:
    """Валидация запроса на обучение"""
    result = {
        'is_valid': True,
        'errors': []
    }

    if held_out_fraction is None:
        held_out_fraction = settings.held_out_fraction

    if n_samples < 1:
        result['is_valid'] = False
        result['errors'].append('Набор данных пуст')
        return result

    if not 0.0 <= held_out_fraction < 1.0:
        result['is_valid'] = False
        result['errors'].append('Доля отложенной выборки должна лежать в [0, 1)')
    elif n_samples - int(n_samples * held_out_fraction) < 1:
        result['is_valid'] = False
        result['errors'].append('После отделения отложенной выборки не осталось обучающих примеров')

    return result
