"""
Идентификация калибровочной матрицы C и инерционных параметров тела.

Для набора j с известной добавочной массой: C R_j = (M_b + M_a^j) G_j, где
столбцы R_j - отсчеты без смещения, G_j - векторы гравитации. Через vec()
и перестановочную матрицу H (vec(M_b) = H (m, mc)) все наборы складываются
в систему Θ x = β, x = (vec(C), m, mc_1, mc_2, mc_3) - 40 неизвестных,
β - блоки vec(M_a^j G_j) длины 6 N_j.

Необходимое условие единственности решения - не меньше трех наборов с
разными добавочными массами; достаточность проверяется численно по рангу Θ.

Шум отсчетов входит в Θ, поэтому обычные наименьшие квадраты (solver="ols")
дают смещенную оценку C, и смещение не уменьшается с ростом числа поз.
Решатель "iv" использует векторы гравитации как инструментальные переменные:
R_j заменяется проекцией на строчное пространство G_j, после чего блок набора
сжимается до трех псевдоотсчетов R_j Q_j, G_j Q_j (G_j^T = Q_j T_j).
Без шума оба решателя дают одно и то же решение.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from django.conf import settings

from sensors.domain import InertialParams, kronecker, unvec, vec, wrench_map
from sensors.exceptions import ConfigError, DimensionMismatch, EmptyDataset
from sensors.validators import GravityNormValidator

from .exceptions import IllConditioned, NotIdentifiable


logger = logging.getLogger(__name__)

UNKNOWN_COUNT = 40
SOLVERS = ("ols", "iv")

# (строка vec(M_b), столбец (m, mc1, mc2, mc3), знак), индексы с нуля
_H_ENTRIES = (
    (0, 0, 1.0),
    (4, 3, 1.0),
    (5, 2, -1.0),
    (7, 0, 1.0),
    (9, 3, -1.0),
    (11, 1, 1.0),
    (14, 0, 1.0),
    (15, 2, 1.0),
    (16, 1, -1.0),
)


@dataclass(frozen=True, eq=False)
class HMatrix:
    H: np.ndarray


@dataclass(frozen=True, eq=False)
class CalibSystem:
    Theta: np.ndarray
    beta: np.ndarray
    dataset_sizes: tuple
    added_masses: tuple = ()
    solver: str = "ols"

    @property
    def total_samples(self):
        return sum(self.dataset_sizes)


@dataclass(frozen=True)
class IdentifiabilityReport:
    nd_ok: bool
    rank: int
    full_rank: bool
    condition: float
    n_datasets: int
    distinct_ok: bool = True

    @property
    def identifiable(self):
        return self.nd_ok and self.full_rank and self.distinct_ok


@dataclass(frozen=True, eq=False)
class CalibEstimate:
    C_hat: np.ndarray
    mass: float
    first_moment: np.ndarray
    com: Optional[np.ndarray]
    residual_rms: float
    theta_condition: float
    theta_rank: int
    ill_conditioned: bool = False
    solver: str = "ols"

    @property
    def body(self):
        """Оценка тела; None, если масса ниже порога и центр масс не определен"""
        if self.com is None:
            return None
        return InertialParams(mass=max(self.mass, 0.0), com=self.com)


def build_H():
    """
    Перестановочная матрица 18x4: vec(m [I3; c×]) = H (m, mc)
    """
    H = np.zeros((18, 4))
    for row, column, sign in _H_ENTRIES:
        H[row, column] = sign
    return HMatrix(H=H)


def inertial_vector(params):
    return np.concatenate([[params.mass], params.first_moment])


def _check_solver(solver):
    if solver not in SOLVERS:
        raise ConfigError(
            f"Неизвестный решатель '{solver}': допустимы {', '.join(SOLVERS)}."
        )
    return solver


def instrument_block(R, G):
    """
    Проекция R на строчное пространство G в сжатом виде: (R Q, G Q),
    где G^T = Q T - экономное QR-разложение
    """
    Q, _ = scipy.linalg.qr(G.T, mode="economic")
    return R @ Q, G @ Q


def build_calib_system(datasets, offset, gravity_norm=None, solver="ols"):
    """
    Блок набора j: строки (R_j^T ⊗ I6 | -(G_j^T ⊗ I6) H), правая часть
    vec(M_a^j G_j); столбцы R_j - отсчеты за вычетом offset.
    При solver="iv" каждый блок предварительно сжимается instrument_block.
    """
    _check_solver(solver)
    datasets = list(datasets)
    if not datasets:
        raise EmptyDataset("Для калибровки не передано ни одного набора.")
    offset = np.asarray(offset, dtype=float)
    if offset.shape != (6,):
        raise DimensionMismatch(f"Смещение должно иметь длину 6, получено {offset.shape}.")

    validator = GravityNormValidator(gravity_norm)
    H = build_H().H
    identity = np.eye(6)
    theta_blocks, beta_blocks = [], []
    for dataset in datasets:
        validator.validate_strict(dataset.gravity)
        R = (dataset.raw - offset).T
        G = dataset.gravity.T
        if solver == "iv":
            R, G = instrument_block(R, G)
        theta_blocks.append(
            np.hstack([kronecker(R.T, identity), -kronecker(G.T, identity) @ H])
        )
        beta_blocks.append(vec(wrench_map(dataset.added_mass) @ G))

    return CalibSystem(
        Theta=np.vstack(theta_blocks),
        beta=np.concatenate(beta_blocks),
        dataset_sizes=tuple(len(dataset) for dataset in datasets),
        added_masses=tuple(dataset.added_mass for dataset in datasets),
        solver=solver,
    )


def _column_scales(Theta, equilibrate):
    if not equilibrate:
        return np.ones(Theta.shape[1])
    norms = np.linalg.norm(Theta, axis=0)
    norms[norms == 0] = 1.0
    return norms


def _distinct_added_masses(added_masses, mass_tol=None, com_tol=None):
    mass_tol = settings.FTCAL_DISTINCT_MASS_TOL if mass_tol is None else mass_tol
    com_tol = settings.FTCAL_DISTINCT_COM_TOL if com_tol is None else com_tol
    distinct = []
    for added in added_masses:
        if not any(added.same_as(other, mass_tol, com_tol) for other in distinct):
            distinct.append(added)
    return len(distinct)


def check_identifiability(system, n_datasets=None, rank_tol=None, equilibrate=None):
    """
    Численный ранг Θ при пороге sigma_1 · rank_tol; Θ предварительно
    масштабируется по столбцам, если включено выравнивание
    """
    rank_tol = settings.FTCAL_THETA_RANK_TOL if rank_tol is None else rank_tol
    equilibrate = settings.FTCAL_EQUILIBRATE if equilibrate is None else equilibrate
    n_datasets = len(system.dataset_sizes) if n_datasets is None else n_datasets

    Theta = system.Theta / _column_scales(system.Theta, equilibrate)
    singular_values = np.linalg.svd(Theta, compute_uv=False)
    rank = int(np.count_nonzero(singular_values > singular_values[0] * rank_tol))
    smallest = singular_values[UNKNOWN_COUNT - 1] if rank == UNKNOWN_COUNT else 0.0
    condition = singular_values[0] / smallest if smallest > 0 else np.inf

    distinct_ok = True
    if system.added_masses:
        distinct_ok = _distinct_added_masses(system.added_masses) > 1

    return IdentifiabilityReport(
        nd_ok=n_datasets >= 3,
        rank=rank,
        full_rank=rank == UNKNOWN_COUNT,
        condition=float(condition),
        n_datasets=n_datasets,
        distinct_ok=distinct_ok,
    )


def solve_calibration(
    system, condition_max=None, mass_floor=None, equilibrate=None, rank_tol=None
):
    """
    Решение Θ x = β методом наименьших квадратов.

    Неидентифицируемая система - NotIdentifiable с отчетом о ранге. Плохая
    обусловленность не прерывает решение: оценка помечается ill_conditioned.
    """
    if condition_max is None:
        condition_max = settings.FTCAL_THETA_CONDITION_MAX
    mass_floor = settings.FTCAL_MASS_FLOOR if mass_floor is None else mass_floor
    equilibrate = settings.FTCAL_EQUILIBRATE if equilibrate is None else equilibrate

    report = check_identifiability(system, rank_tol=rank_tol, equilibrate=equilibrate)
    if not report.identifiable:
        reason = f"ранг Θ = {report.rank} из {UNKNOWN_COUNT}"
        if not report.distinct_ok:
            reason = "все наборы имеют одинаковую добавочную массу"
        raise NotIdentifiable(
            f"Калибровочная матрица неидентифицируема ({reason}): нужны не меньше "
            f"трех наборов с разными добавочными массами (N_D >= 3), "
            f"передано {report.n_datasets}.",
            diagnostics=report,
        )

    scales = _column_scales(system.Theta, equilibrate)
    y, _, _, _ = scipy.linalg.lstsq(
        system.Theta / scales, system.beta, lapack_driver="gelsy"
    )
    x = y / scales
    residual = system.Theta @ x - system.beta

    mass = float(x[36])
    first_moment = x[37:40]
    com = first_moment / mass if mass > mass_floor else None
    if com is None:
        logger.warning(f"Оценка массы {mass:.3e} ниже порога: центр масс не определен")

    ill_conditioned = report.condition > condition_max
    if ill_conditioned:
        logger.warning(
            f"Θ плохо обусловлена: cond = {report.condition:.3e} > {condition_max:.1e}"
        )

    return CalibEstimate(
        C_hat=unvec(x[:36], 6, 6),
        mass=mass,
        first_moment=first_moment,
        com=com,
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        theta_condition=report.condition,
        theta_rank=report.rank,
        ill_conditioned=ill_conditioned,
        solver=system.solver,
    )


def calibrate(
    datasets, offset, strict=False, gravity_norm=None, solver=None, **solver_options
):
    """
    build_calib_system -> solve_calibration; strict=True превращает плохую
    обусловленность в IllConditioned. solver - "ols" или "iv" (по умолчанию
    FTCAL_SOLVER), solver_options передаются в solve_calibration
    (condition_max, mass_floor, equilibrate, rank_tol).
    """
    solver = settings.FTCAL_SOLVER if solver is None else solver
    system = build_calib_system(datasets, offset, gravity_norm=gravity_norm, solver=solver)
    estimate = solve_calibration(system, **solver_options)
    logger.info(
        f"Калибровка ({solver}) по {len(system.dataset_sizes)} наборам "
        f"({system.total_samples} отсчетов): rank = {estimate.theta_rank}, "
        f"cond = {estimate.theta_condition:.2e}"
    )
    if strict and estimate.ill_conditioned:
        raise IllConditioned(
            f"Θ плохо обусловлена (cond = {estimate.theta_condition:.3e}).",
            estimate=estimate,
        )
    return estimate
