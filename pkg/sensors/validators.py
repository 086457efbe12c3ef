import logging

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from sensors.exceptions import GravityOutOfBand


logger = logging.getLogger(__name__)


def validate_vector(value, size, name="вектор"):
    """
    Приводит значение к float-массиву заданной длины и проверяет конечность
    """
    array = np.asarray(value, dtype=float)
    if array.shape != (size,):
        raise ValidationError(
            f"{name}: ожидалась длина {size}, получена форма {array.shape}."
        )
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name}: все элементы должны быть конечными.")
    return array


def validate_mass(value):
    """
    Масса должна быть конечной и неотрицательной
    """
    mass = float(value)
    if not np.isfinite(mass) or mass < 0:
        raise ValidationError(f"Масса должна быть конечной и неотрицательной: {mass}.")
    return mass


def validate_invertible(matrix, rcond_floor=None):
    """
    Проверяет обратимость матрицы по обратному числу обусловленности
    """
    rcond_floor = settings.FTCAL_RCOND_FLOOR if rcond_floor is None else rcond_floor
    if not np.all(np.isfinite(matrix)):
        raise ValidationError("Калибровочная матрица содержит нечисловые элементы.")
    rcond = 1.0 / np.linalg.cond(matrix)
    if not rcond > rcond_floor:
        raise ValidationError(
            f"Калибровочная матрица вырождена: rcond={rcond:.3e} <= {rcond_floor:.1e}."
        )
    return rcond


class GravityNormValidator:
    """
    Проверка нормы ускорения свободного падения в отсчетах акселерометра.

    При загрузке логов выход за полосу допуска - предупреждение, за двойную
    полосу - отбрасывание отсчета. Внутри оценщиков двойная полоса - жесткая ошибка.
    """

    def __init__(self, gravity_norm=None, tolerance=None):
        self.gravity_norm = (
            settings.FTCAL_GRAVITY_NORM if gravity_norm is None else gravity_norm
        )
        self.tolerance = (
            settings.FTCAL_GRAVITY_TOLERANCE if tolerance is None else tolerance
        )

    def relative_deviation(self, gravity):
        norms = np.linalg.norm(np.atleast_2d(gravity), axis=1)
        return np.abs(norms - self.gravity_norm) / self.gravity_norm

    def classify(self, gravity):
        """
        Возвращает маски (в полосе допуска, в двойной полосе)
        """
        deviation = self.relative_deviation(gravity)
        return deviation <= self.tolerance, deviation <= 2 * self.tolerance

    def validate_strict(self, gravity):
        """
        Жесткая проверка для оценщиков: неверная норма g портит масштаб решения
        """
        _, usable = self.classify(gravity)
        if not np.all(usable):
            bad = int(np.count_nonzero(~usable))
            raise GravityOutOfBand(
                f"{bad} отсчетов гравитации вне полосы "
                f"±{2 * self.tolerance:.0%} вокруг {self.gravity_norm} м/с²."
            )
