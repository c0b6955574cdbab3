import logging
import sys
from typing import Optional, Sequence

import structlog

from app.config.settings import settings
from app.commands.cli import run_command


def configure_logging(level: Optional[str] = None) -> None:
    """Настройка логирования: JSON-события в stderr, stdout остается для результатов"""
    level = (level or settings.log_level).upper()
    logging.basicConfig(stream=sys.stderr, level=level, format="%(message)s", force=True)

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer()
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Точка входа командной строки"""
    configure_logging()
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
