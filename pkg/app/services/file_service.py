import io
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple
import numpy as np
import structlog
from pydantic import ValidationError as PydanticValidationError

from app.config.settings import settings
from app.models.nnet import RnnModel
from app.models.synth import SynthConfig, SynthSample, TrueSegment
from app.models.topology import Alphabet
from app.utils.exceptions import FileStorageError, FileValidationError
from app.utils.validators import MatrixValidator

logger = structlog.get_logger()

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"
FEATURES_DIR = "features"


def char_names_for(n_classes: int) -> Tuple[str, ...]:
    """Имена символьных классов генератора: "0", "1", ..."""
    return tuple(str(index) for index in range(n_classes))


class FileService:
    """Сервис для чтения и записи файлов: CSV-матрицы, JSON, наборы данных, модели"""

    def read_json(self, path: str) -> Any:
        """Прочитать JSON-файл"""
        file_path = Path(path)
        if not file_path.is_file():
            raise FileValidationError(f'Файл не найден: {path}')
        try:
            return json.loads(file_path.read_text(encoding='utf-8'))
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise FileValidationError(f'Некорректный JSON в файле {path}: {str(e)}')

    def write_json(self, data: Any, path: str) -> None:
        """Записать JSON-файл"""
        try:
            file_path = Path(path)
            file_path.parent.mkdir(parents=True, exist_ok=True)
            file_path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding='utf-8')
        except OSError as e:
            logger.error("Failed to write file", path=path, error=str(e))
            raise FileStorageError(f'Не удалось сохранить файл {path}: {str(e)}')

    def read_matrix_csv(self, path: str) -> np.ndarray:
        """CSV без заголовка: строка на кадр, значения через запятую"""
        file_path = Path(path)
        if not file_path.is_file():
            raise FileValidationError(f'Файл не найден: {path}')

        rows: List[List[float]] = []
        try:
            for line_number, line in enumerate(file_path.read_text(encoding='utf-8').splitlines(), start=1):
                if not line.strip():
                    continue
                rows.append([float(value) for value in line.split(',')])
        except ValueError as e:
            raise FileValidationError(f'Некорректное число в {path}, строка {line_number}: {str(e)}')
        except UnicodeDecodeError as e:
            raise FileValidationError(f'Файл {path} не в кодировке UTF-8: {str(e)}')

        if not rows:
            raise FileValidationError(f'Файл {path} не содержит ни одной строки')
        if len({len(row) for row in rows}) != 1:
            raise FileValidationError(f'Строки файла {path} имеют разное число столбцов')

        matrix = np.array(rows, dtype=np.float64)
        validation_result = MatrixValidator.validate_features(matrix)
        if not validation_result['is_valid']:
            raise FileValidationError('; '.join(validation_result['errors']))
        return matrix

    def format_matrix_csv(self, matrix: np.ndarray) -> str:
        """Числа с 17 значащими цифрами для точного обратного чтения"""
        buffer = io.StringIO()
        np.savetxt(buffer, np.atleast_2d(matrix), fmt=settings.float_format(), delimiter=',')
        return buffer.getvalue()

    def write_matrix_csv(self, matrix: np.ndarray, target: Optional[str] = None,
                         stream: Optional[TextIO] = None) -> None:
        """Записать матрицу в файл или поток"""
        content = self.format_matrix_csv(matrix)
        if stream is not None:
            stream.write(content)
            return
        try:
            file_path = Path(target)
            file_path.parent.mkdir(parents=True, exist_ok=True)
            file_path.write_text(content, encoding='utf-8')
        except OSError as e:
            logger.error("Failed to write matrix", path=target, error=str(e))
            raise FileStorageError(f'Не удалось сохранить матрицу {target}: {str(e)}')

    def read_alphabet(self, path: str) -> Alphabet:
        """{"names": [...], "blank": idx|null, "background": idx|null, "foreground": idx|null}"""
        data = self.read_json(path)
        try:
            return Alphabet.model_validate(data)
        except PydanticValidationError as e:
            raise FileValidationError(f'Некорректный алфавит в {path}: {str(e)}')

    def read_synth_config(self, path: str) -> SynthConfig:
        data = self.read_json(path)
        try:
            return SynthConfig.model_validate(data)
        except PydanticValidationError as e:
            raise FileValidationError(f'Некорректная конфигурация генератора в {path}: {str(e)}')

    def save_dataset(self, samples: Sequence[SynthSample], config: SynthConfig, out_dir: str) -> Path:
        """Каталог набора: features/<id>.csv, manifest.json, config.json"""
        root = Path(out_dir)
        features_dir = root / FEATURES_DIR
        try:
            features_dir.mkdir(parents=True, exist_ok=True)
            # Файлы прошлой генерации в этом каталоге не должны попасть в новый набор
            for stale in features_dir.glob("*.csv"):
                stale.unlink()
        except OSError as e:
            raise FileStorageError(f'Не удалось создать каталог {out_dir}: {str(e)}')

        char_names = char_names_for(config.n_classes)
        separator = "" if all(len(name) == 1 for name in char_names) else " "
        manifest: List[Dict[str, Any]] = []
        for sample in samples:
            self.write_matrix_csv(sample.features, str(features_dir / f"{sample.sample_id}.csv"))
            manifest.append({
                "id": sample.sample_id,
                "label": separator.join(char_names[label] for label in sample.labels),
                "label_ids": list(sample.labels),
                "true_segments": [segment.to_json() for segment in sample.true_segments]
            })

        self.write_json(manifest, str(root / MANIFEST_NAME))
        self.write_json(config.model_dump(mode='json'), str(root / CONFIG_NAME))
        logger.info("Dataset saved", path=str(root), n_samples=len(manifest))
        return root

    def load_dataset(self, data_dir: str) -> Tuple[SynthConfig, List[SynthSample]]:
        """Прочитать каталог набора данных"""
        root = Path(data_dir)
        if not root.is_dir():
            raise FileValidationError(f'Каталог набора данных не найден: {data_dir}')

        config = self.read_synth_config(str(root / CONFIG_NAME))
        manifest = self.read_json(str(root / MANIFEST_NAME))
        if not isinstance(manifest, list):
            raise FileValidationError('manifest.json должен содержать список примеров')

        samples: List[SynthSample] = []
        for entry in manifest:
            try:
                sample_id = str(entry["id"])
                features = self.read_matrix_csv(str(root / FEATURES_DIR / f"{sample_id}.csv"))
                segments = tuple(
                    TrueSegment(class_id=segment["class"], start_frame=segment["start"], end_frame=segment["end"])
                    for segment in entry["true_segments"]
                )
                samples.append(SynthSample(
                    sample_id=sample_id,
                    features=features,
                    labels=tuple(int(label) for label in entry["label_ids"]),
                    true_segments=segments
                ))
            except (KeyError, TypeError, PydanticValidationError) as e:
                raise FileValidationError(f'Некорректная запись манифеста: {str(e)}')

        logger.info("Dataset loaded", path=str(root), n_samples=len(samples))
        return config, samples

    def save_model(self, model: RnnModel, path: str) -> None:
        """{"version", "layer_sizes", "weights", "alphabet", "topology", "stacking"}"""
        self.write_json({
            "version": model.version,
            "layer_sizes": list(model.layer_sizes),
            "weights": {name: value.tolist() for name, value in sorted(model.weights.items())},
            "alphabet": model.alphabet.to_json(),
            "topology": model.topology.value if model.topology else None,
            "stacking": model.stacking.model_dump() if model.stacking else None
        }, path)
        logger.info("Model saved", path=path, layer_sizes=model.layer_sizes)

    def load_model(self, path: str) -> RnnModel:
        data = self.read_json(path)
        try:
            if data.get("version") != settings.model_version:
                raise FileValidationError(f'Неподдерживаемая версия модели: {data.get("version")}')
            return RnnModel(
                version=data["version"],
                layer_sizes=data["layer_sizes"],
                weights={name: np.array(value, dtype=np.float64) for name, value in data["weights"].items()},
                alphabet=Alphabet.model_validate(data["alphabet"]),
                topology=data.get("topology"),
                stacking=data.get("stacking")
            )
        except (KeyError, TypeError, AttributeError, PydanticValidationError) as e:
            raise FileValidationError(f'Некорректный файл модели {path}: {str(e)}')


# Глобальный экземпляр сервиса
file_service = FileService()
