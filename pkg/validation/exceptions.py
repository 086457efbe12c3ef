from sensors.exceptions import CalibrationToolError


class GeometryError(CalibrationToolError):
    exit_code = 8


class DegeneratePointSet(GeometryError):
    """Слишком мало точек или точки лежат в одной плоскости"""


class NonEllipsoidQuadric(GeometryError):
    """Подогнанная квадрика не является эллипсоидом - признак плохих данных"""


class InertialRankDeficient(CalibrationToolError):
    """Направлений гравитации недостаточно для оценки (m, mc)"""

    exit_code = 4
