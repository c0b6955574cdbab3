from typing import Optional, Dict, Any


class TcsBaseException(Exception):
    """Базовое исключение для библиотеки CTC/TCS"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


class FileValidationError(TcsBaseException):
    """Ошибка разбора входного файла"""
    pass


class FileStorageError(TcsBaseException):
    """Ошибка сохранения файла"""
    pass


class ValidationError(TcsBaseException):
    """Ошибка валидации данных"""
    pass


class ConfigurationError(TcsBaseException):
    """Невыполнимая конфигурация"""
    pass


class DimensionMismatchError(TcsBaseException):
    """Несовпадение размерностей модели, признаков или кэша"""
    pass


class InfeasibleLabelError(TcsBaseException):
    """Разметка не помещается в заданное число кадров"""
    pass


class OracleGuardError(TcsBaseException):
    """Превышен лимит перебора путей"""
    pass
