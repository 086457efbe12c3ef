"""
Трехмерное аффинное подпространство гравитационных отсчетов.

Все статические отсчеты лежат в o + span(C^-1 M): r = r_m + U1 λ.
SVD определяет только span(U1); знак столбцов фиксируется так, чтобы
наибольший по модулю элемент был положительным. Все последующие вычисления
инвариантны к выбору базиса внутри span(U1).
"""

import logging
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from sensors.domain import RawReading
from sensors.exceptions import DimensionMismatch, EmptyDataset

from .exceptions import DegenerateSpan


logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AffineBasis:
    r_m: np.ndarray
    U1: np.ndarray
    singular_values: np.ndarray

    @property
    def projector(self):
        return self.U1 @ self.U1.T


@dataclass(frozen=True)
class SubspaceDiagnostics:
    sigma_ratio: float
    sample_count: int
    in_plane_rms: float


def as_raw_matrix(samples):
    """Список RawReading или массив (N, 6) -> массив (N, 6)"""
    if isinstance(samples, np.ndarray):
        raw = np.atleast_2d(np.asarray(samples, dtype=float))
    else:
        samples = list(samples)
        if not samples:
            raise EmptyDataset("Нет отсчетов для построения подпространства.")
        raw = np.array(
            [s.values if isinstance(s, RawReading) else s for s in samples],
            dtype=float,
        )
    if raw.size == 0:
        raise EmptyDataset("Нет отсчетов для построения подпространства.")
    if raw.ndim != 2 or raw.shape[1] != 6:
        raise DimensionMismatch(f"Ожидались отсчеты формы (N, 6), получено {raw.shape}.")
    return raw


def centroid(samples):
    """Средняя точка r_m - устойчивая к шуму точка подпространства"""
    return as_raw_matrix(samples).mean(axis=0)


def _fix_signs(U1):
    pivots = np.argmax(np.abs(U1), axis=0)
    signs = np.sign(U1[pivots, np.arange(U1.shape[1])])
    signs[signs == 0] = 1.0
    return U1 * signs


def svd_basis(samples, r_m, threshold=None, noisy=False):
    """
    Базис U1 из трех старших левых сингулярных векторов матрицы (r_i - r_m).

    Подпространство считается трехмерным при sigma_3/sigma_1 > threshold;
    sigma_4/sigma_3 только сообщается, шум всегда его завышает.
    """
    if threshold is None:
        threshold = (
            settings.FTCAL_NOISY_SPAN_THRESHOLD if noisy else settings.FTCAL_SPAN_THRESHOLD
        )
    raw = as_raw_matrix(samples)
    if len(raw) < 4:
        raise DegenerateSpan(
            f"Для трехмерного подпространства нужно не меньше 4 отсчетов, есть {len(raw)}."
        )

    centered = (raw - np.asarray(r_m, dtype=float)).T
    U, s, _ = np.linalg.svd(centered, full_matrices=False)
    singular_values = np.zeros(6)
    singular_values[: len(s)] = s

    if singular_values[0] == 0 or singular_values[2] / singular_values[0] <= threshold:
        ratio = singular_values[2] / singular_values[0] if singular_values[0] else 0.0
        raise DegenerateSpan(
            f"sigma_3/sigma_1 = {ratio:.3e} <= {threshold:.1e}: ориентации не "
            f"возбуждают три измерения, расширьте диапазон поворотов."
        )

    return AffineBasis(
        r_m=np.asarray(r_m, dtype=float).copy(),
        U1=_fix_signs(U[:, :3]),
        singular_values=singular_values,
    )


def project(basis, r):
    """λ = U1^T (r - r_m); принимает один вектор или массив (N, 6)"""
    values = r.values if isinstance(r, RawReading) else np.asarray(r, dtype=float)
    return (values - basis.r_m) @ basis.U1


def lift(basis, lam):
    """r = r_m + U1 λ"""
    return basis.r_m + np.asarray(lam, dtype=float) @ basis.U1.T


def diagnostics(basis, samples):
    """
    in_plane_rms - СКО отклонения отсчетов от плоскости r_m + span(U1)
    (ноль для идеальных статических данных)
    """
    raw = as_raw_matrix(samples)
    sigma_3, sigma_4 = basis.singular_values[2], basis.singular_values[3]
    residual = (raw - basis.r_m) - project(basis, raw) @ basis.U1.T
    return SubspaceDiagnostics(
        sigma_ratio=float(sigma_4 / sigma_3) if sigma_3 > 0 else 0.0,
        sample_count=len(raw),
        in_plane_rms=float(np.sqrt(np.mean(np.sum(residual**2, axis=1)))),
    )


def fit_subspace(samples, threshold=None, noisy=False):
    """centroid -> svd_basis"""
    raw = as_raw_matrix(samples)
    basis = svd_basis(raw, centroid(raw), threshold=threshold, noisy=noisy)
    logger.debug(
        f"Подпространство: sigma = {np.array2string(basis.singular_values, precision=3)}"
    )
    return basis
