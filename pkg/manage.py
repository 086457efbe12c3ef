#!/usr/bin/env python
"""Точка входа: `python manage.py ftcal <команда>` и служебные команды Django."""
import os
import sys


def main():
    """Запуск административных и калибровочных команд."""
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Не удалось импортировать Django. Установлены ли зависимости из "
            "requirements.txt и активировано ли виртуальное окружение?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
