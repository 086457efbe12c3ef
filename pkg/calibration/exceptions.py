from sensors.exceptions import CalibrationToolError


class DegenerateSpan(CalibrationToolError):
    """Ориентации не возбудили трехмерное аффинное подпространство"""

    exit_code = 5


class RankDeficientSystem(CalibrationToolError):
    """Система для смещения не имеет полного столбцового ранга"""

    exit_code = 4


class NotIdentifiable(CalibrationToolError):
    """
    Калибровочная матрица неидентифицируема; diagnostics - отчет о ранге Theta
    """

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics
        super().__init__(message)


class IllConditioned(CalibrationToolError):
    """Решение получено, но число обусловленности выше порога"""

    exit_code = 6

    def __init__(self, message, estimate=None):
        self.estimate = estimate
        super().__init__(message)
