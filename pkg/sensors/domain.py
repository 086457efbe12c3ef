"""
Доменные типы и алгебра модели датчика силы-момента.

Аффинная модель датчика: w = C (r - o), где r - сырые отсчеты (6 каналов),
o - смещение, C - обратимая калибровочная матрица 6x6.
Статический гравитационный винт твердого тела: w = M(m, c) g,
M(m, c) = m [I3; c×].

vec() складывает столбцы матрицы (column-major), так что
vec(A X B) = (B^T ⊗ A) vec(X). От этого порядка зависят все
векторизованные системы в приложении calibration.
"""

from dataclasses import dataclass, field

import numpy as np
from django.core.exceptions import ValidationError

from .exceptions import DimensionMismatch, EmptyDataset
from .validators import validate_invertible, validate_mass, validate_vector


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class RawReading:
    """Сырые отсчеты датчика, 6 каналов"""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _frozen(validate_vector(self.values, 6, "RawReading"))
        )


@dataclass(frozen=True, eq=False)
class GravitySample:
    """Ускорение свободного падения в системе датчика, м/с²"""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _frozen(validate_vector(self.values, 3, "GravitySample"))
        )

    @property
    def norm(self):
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True, eq=False)
class Wrench:
    """Силовой винт в системе датчика: сила (Н) и момент (Н·м)"""

    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "force", _frozen(validate_vector(self.force, 3, "force"))
        )
        object.__setattr__(
            self, "torque", _frozen(validate_vector(self.torque, 3, "torque"))
        )

    @classmethod
    def from_vector(cls, vector):
        vector = validate_vector(vector, 6, "Wrench")
        return cls(force=vector[:3], torque=vector[3:])

    def as_vector(self):
        return np.concatenate([self.force, self.torque])


@dataclass(frozen=True, eq=False)
class CalibrationModel:
    """Пара (C, o): калибровочная матрица и смещение в сырых единицах"""

    C: np.ndarray
    o: np.ndarray
    rcond_floor: float = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        matrix = np.asarray(self.C, dtype=float)
        if matrix.shape != (6, 6):
            raise ValidationError(
                f"Калибровочная матрица должна быть 6x6, получено {matrix.shape}."
            )
        validate_invertible(matrix, self.rcond_floor)
        object.__setattr__(self, "C", _frozen(matrix))
        object.__setattr__(self, "o", _frozen(validate_vector(self.o, 6, "offset")))

    @classmethod
    def identity(cls):
        return cls(C=np.eye(6), o=np.zeros(6))


@dataclass(frozen=True, eq=False)
class InertialParams:
    """Масса (кг) и центр масс (м) в системе датчика"""

    mass: float
    com: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mass", validate_mass(self.mass))
        object.__setattr__(self, "com", _frozen(validate_vector(self.com, 3, "com")))

    @property
    def first_moment(self):
        """m·c - величина, которую напрямую оценивают линейные системы"""
        return self.mass * self.com


@dataclass(frozen=True, eq=False)
class AddedMassSpec(InertialParams):
    """
    Известная добавочная масса и положение ее центра масс.
    Нулевая масса допустима: набор данных без добавочного груза.
    """

    def same_as(self, other, mass_tol, com_tol):
        return abs(self.mass - other.mass) <= mass_tol and bool(
            np.all(np.abs(self.com - other.com) <= com_tol)
        )


NO_ADDED_MASS = AddedMassSpec(mass=0.0, com=np.zeros(3))


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Синхронизированные пары (r, g) одной конфигурации добавочной массы.

    Отсчеты хранятся массивами raw (N, 6) и gravity (N, 3); samples отдает
    их парами RawReading/GravitySample.
    """

    raw: np.ndarray
    gravity: np.ndarray
    added_mass: AddedMassSpec = NO_ADDED_MASS
    label: str = ""

    def __post_init__(self):
        raw = np.atleast_2d(np.asarray(self.raw, dtype=float))
        gravity = np.atleast_2d(np.asarray(self.gravity, dtype=float))
        if raw.size == 0 or gravity.size == 0:
            raise EmptyDataset(f"Набор '{self.label}' не содержит отсчетов.")
        if raw.shape[1] != 6 or gravity.shape[1] != 3 or len(raw) != len(gravity):
            raise DimensionMismatch(
                f"Набор '{self.label}': raw {raw.shape} и gravity {gravity.shape} "
                f"не согласованы."
            )
        if not (np.all(np.isfinite(raw)) and np.all(np.isfinite(gravity))):
            raise ValidationError(f"Набор '{self.label}' содержит нечисловые отсчеты.")
        object.__setattr__(self, "raw", _frozen(raw))
        object.__setattr__(self, "gravity", _frozen(gravity))

    def __len__(self):
        return len(self.raw)

    @classmethod
    def from_samples(cls, samples, added_mass=NO_ADDED_MASS, label=""):
        samples = list(samples)
        if not samples:
            raise EmptyDataset(f"Набор '{label}' не содержит отсчетов.")
        raw = np.array([reading.values for reading, _ in samples])
        gravity = np.array([sample.values for _, sample in samples])
        return cls(raw=raw, gravity=gravity, added_mass=added_mass, label=label)

    @property
    def samples(self):
        return [
            (RawReading(r), GravitySample(g)) for r, g in zip(self.raw, self.gravity)
        ]


def skew(vector):
    """Матрица векторного произведения: skew(c) @ v == c × v"""
    x, y, z = np.asarray(vector, dtype=float)
    return np.array(
        [
            [0.0, -z, y],
            [z, 0.0, -x],
            [-y, x, 0.0],
        ]
    )


def wrench_map(params):
    """
    M(m, c) = m [I3; c×], матрица 6x3.
    При m > 0 ранг ровно 3; при m = 0 - нулевая матрица.
    """
    return params.mass * np.vstack([np.eye(3), skew(params.com)])


def predict_wrench(model, reading):
    """w = C (r - o)"""
    values = reading.values if isinstance(reading, RawReading) else reading
    return Wrench.from_vector(model.C @ (np.asarray(values, dtype=float) - model.o))


def gravitational_wrench(params, gravity):
    """w = M(m, c) g"""
    values = gravity.values if isinstance(gravity, GravitySample) else gravity
    return Wrench.from_vector(wrench_map(params) @ np.asarray(values, dtype=float))


def vec(matrix):
    """Векторизация по столбцам"""
    return np.asarray(matrix, dtype=float).reshape(-1, order="F")


def unvec(vector, rows, cols):
    """Обратная операция к vec()"""
    return np.asarray(vector, dtype=float).reshape((rows, cols), order="F")


def kronecker(a, b):
    """Произведение Кронекера: блок (i, j) равен a[i, j] * b"""
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))
