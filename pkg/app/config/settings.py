from typing import List
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field, field_validator


def parse_sizes(value: str) -> List[int]:
    """Разобрать список размеров слоев вида "128,128,128" """
    return [int(size.strip()) for size in value.split(',') if size.strip()]


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="TCS_",
        case_sensitive=False,
        extra="ignore"  # Игнорируем дополнительные поля из .env
    )

    # Logging
    log_level: str = Field("INFO")

    # Topology settings
    tcs_optional_background: bool = Field(True)

    # Oracle settings
    oracle_max_paths: int = Field(1_000_000, gt=0)
    fd_step: float = Field(1e-5)

    # Frame stacking (8 кадров в суперкадр каждые 2 кадра)
    stack_window: int = Field(8, gt=0)
    stack_stride: int = Field(2, gt=0)
    stack_center_labels: bool = Field(True)

    # Network and training
    hidden_sizes: str = Field("32")  # Через запятую, например "128,128,128"
    learning_rate: float = Field(0.01, ge=0.0)
    epochs: int = Field(30, ge=0)
    clip_norm: float = Field(5.0, gt=0.0)
    foreground_bias_init: float = Field(-3.0, le=0.0)
    train_seed: int = Field(0)
    sortagrad: bool = Field(False)
    held_out_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    boundary_tolerance: int = Field(3, ge=0)
    model_version: int = Field(1)

    # Output
    csv_precision: int = Field(17, gt=0)

    @field_validator('hidden_sizes')
    @classmethod
    def check_hidden_sizes(cls, v):
        try:
            sizes = parse_sizes(v)
        except ValueError:
            raise ValueError('hidden_sizes должен быть списком целых чисел через запятую')
        if not sizes or any(size <= 0 for size in sizes):
            raise ValueError('hidden_sizes должен содержать положительные размеры')
        return v

    @field_validator('fd_step')
    @classmethod
    def check_fd_step(cls, v):
        if not 1e-6 <= v <= 1e-4:
            raise ValueError('fd_step должен лежать в диапазоне [1e-6, 1e-4]')
        return v

    @field_validator('log_level')
    @classmethod
    def normalize_log_level(cls, v):
        return v.upper()

    def get_hidden_sizes_list(self) -> List[int]:
        """Получить список размеров скрытых слоев"""
        return parse_sizes(self.hidden_sizes)

    def float_format(self) -> str:
        """Формат чисел для CSV"""
        return f"%.{self.csv_precision}g"


# Глобальный экземпляр настроек
settings = Settings()
