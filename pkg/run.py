#!/usr/bin/env python3
"""
Скрипт запуска командной строки CTC/TCS
"""
import os
import sys
from pathlib import Path

# Обучение однопоточное и детерминированное; задаем до импорта numpy
os.environ.setdefault('OMP_NUM_THREADS', '1')
os.environ.setdefault('OPENBLAS_NUM_THREADS', '1')

# Добавляем корневую директорию в PYTHONPATH
sys.path.insert(0, str(Path(__file__).parent))

from app.main import main


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nОстановлено пользователем", file=sys.stderr)
        sys.exit(130)
