"""
Исключения инструментария калибровки.

Каждый класс несет код выхода CLI; команда `ftcal` превращает их в CommandError.
"""

EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3


class CalibrationToolError(Exception):
    """Базовая ошибка вычислительного конвейера"""

    exit_code = 1


class DataError(CalibrationToolError):
    exit_code = 7


class EmptyDataset(DataError):
    """Нет ни одного отсчета"""


class DimensionMismatch(DataError):
    """Размерности входных массивов не согласованы"""


class ParseError(DataError):
    """Ошибка разбора файла лога; хранит номер строки"""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"строка {line}: {message}"
        super().__init__(message)


class NoValidSamples(DataError):
    """После фильтрации по норме гравитации не осталось отсчетов"""


class GravityOutOfBand(DataError):
    """Норма гравитации внутри оценщика вне двойной полосы допуска"""


class SignalTooShort(DataError):
    """Сигнал короче окна фильтра"""


class BadWindow(DataError):
    """Недопустимое окно или порядок фильтра Савицкого-Голея"""


class ConfigError(CalibrationToolError):
    """Ошибка конфигурации или использования команды"""

    exit_code = EXIT_CONFIG_ERROR


class MissingInput(ConfigError):
    """Входной файл не найден"""
