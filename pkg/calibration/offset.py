"""
Оценка смещения датчика без знания C, m и c.

Для каждого отсчета U1^T (r_i - r_m) = K g_i + λ_o, K := U1^T C^-1 M.
Через vec(K g) = (g^T ⊗ I3) vec(K) отсчеты складываются в систему
r̄ = Γ x, x = (vec(K), λ_o), откуда o = r_m + U1 λ_o.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from django.conf import settings

from sensors.exceptions import DimensionMismatch, EmptyDataset
from sensors.validators import GravityNormValidator
from sensors.domain import kronecker, unvec

from . import subspace
from .exceptions import RankDeficientSystem


logger = logging.getLogger(__name__)

# относительный разброс оценок по наборам, выше которого пишется предупреждение
SPREAD_WARNING = 1e-3


@dataclass(frozen=True, eq=False)
class OffsetSystem:
    Gamma: np.ndarray
    rbar: np.ndarray
    basis: subspace.AffineBasis

    @property
    def sample_count(self):
        return len(self.rbar) // 3


@dataclass(frozen=True, eq=False)
class OffsetEstimate:
    o_hat: np.ndarray
    lambda_o: np.ndarray
    K_hat: np.ndarray
    residual_rms: float
    condition_number: float
    basis: subspace.AffineBasis
    label: str = ""


@dataclass(frozen=True, eq=False)
class OffsetEnsemble:
    """
    Оценки по отдельным наборам и их среднее.
    spread - стандартное отклонение оценок по компонентам (нули для одного набора).
    """

    o_hat: np.ndarray
    spread: np.ndarray
    members: tuple

    @property
    def condition_number(self):
        return max(member.condition_number for member in self.members)

    @property
    def residual_rms(self):
        return float(np.sqrt(np.mean([m.residual_rms**2 for m in self.members])))


def build_offset_system(basis, raw, gravity, gravity_norm=None):
    """
    Γ складывается из блоков (g_i^T ⊗ I3 | I3), r̄ - из U1^T (r_i - r_m);
    порядок неизвестных: vec(K) по столбцам, затем λ_o
    """
    raw = subspace.as_raw_matrix(raw)
    gravity = np.atleast_2d(np.asarray(gravity, dtype=float))
    if gravity.shape != (len(raw), 3):
        raise DimensionMismatch(
            f"Число отсчетов raw {raw.shape} и gravity {gravity.shape} не совпадает."
        )
    if len(raw) < settings.FTCAL_OFFSET_MIN_SAMPLES:
        raise DimensionMismatch(
            f"Для 12 неизвестных нужно не меньше "
            f"{settings.FTCAL_OFFSET_MIN_SAMPLES} отсчетов, есть {len(raw)}."
        )
    if len(raw) < settings.FTCAL_OFFSET_RECOMMENDED_SAMPLES:
        logger.warning(
            f"Всего {len(raw)} отсчетов; рекомендуется не меньше "
            f"{settings.FTCAL_OFFSET_RECOMMENDED_SAMPLES}"
        )
    GravityNormValidator(gravity_norm).validate_strict(gravity)

    identity = np.eye(3)
    # блок отсчета i: (g_i^T ⊗ I3 | I3)
    Gamma = np.hstack([kronecker(gravity, identity), np.tile(identity, (len(gravity), 1))])
    rbar = subspace.project(basis, raw).reshape(-1)
    return OffsetSystem(Gamma=Gamma, rbar=rbar, basis=basis)


def solve_offset(system, condition_max=None, label=""):
    """
    Наименьшие квадраты через полную ортогональную факторизацию (gelsy)
    """
    if condition_max is None:
        condition_max = settings.FTCAL_OFFSET_CONDITION_MAX

    singular_values = np.linalg.svd(system.Gamma, compute_uv=False)
    condition = (
        singular_values[0] / singular_values[-1] if singular_values[-1] > 0 else np.inf
    )
    if len(singular_values) < 12 or not condition <= condition_max:
        raise RankDeficientSystem(
            f"Система для смещения вырождена (cond = {condition:.3e}): недостаточно "
            f"разнообразия ориентаций, расширьте диапазон поворотов."
        )

    x, _, _, _ = scipy.linalg.lstsq(system.Gamma, system.rbar, lapack_driver="gelsy")
    residual = system.Gamma @ x - system.rbar
    lambda_o = x[9:]
    return OffsetEstimate(
        o_hat=subspace.lift(system.basis, lambda_o),
        lambda_o=lambda_o,
        K_hat=unvec(x[:9], 3, 3),
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        condition_number=float(condition),
        basis=system.basis,
        label=label,
    )


def estimate_dataset_offset(
    raw,
    gravity,
    label="",
    noisy=False,
    gravity_norm=None,
    threshold=None,
    condition_max=None,
):
    """centroid -> svd_basis -> build -> solve для одного набора отсчетов"""
    basis = subspace.fit_subspace(raw, threshold=threshold, noisy=noisy)
    system = build_offset_system(basis, raw, gravity, gravity_norm=gravity_norm)
    estimate = solve_offset(system, condition_max=condition_max, label=label)
    logger.info(
        f"Смещение '{label}': cond = {estimate.condition_number:.2e}, "
        f"rms = {estimate.residual_rms:.2e}"
    )
    return estimate


def estimate_offset(
    datasets,
    pooled=False,
    noisy=False,
    jobs=1,
    gravity_norm=None,
    threshold=None,
    condition_max=None,
):
    """
    Смещение по нескольким наборам.

    pooled=True объединяет все отсчеты в одну систему (корректно, только если
    подпространства наборов совпадают, т.е. одинаковая добавочная масса).
    По умолчанию смещение оценивается по каждому набору и усредняется;
    разброс оценок - проверка согласованности наборов.
    """
    datasets = list(datasets)
    if not datasets:
        raise EmptyDataset("Не передано ни одного набора данных.")

    options = dict(
        noisy=noisy,
        gravity_norm=gravity_norm,
        threshold=threshold,
        condition_max=condition_max,
    )
    if pooled:
        raw = np.vstack([dataset.raw for dataset in datasets])
        gravity = np.vstack([dataset.gravity for dataset in datasets])
        label = "+".join(dataset.label for dataset in datasets)
        return estimate_dataset_offset(raw, gravity, label, **options)

    def run(dataset):
        return estimate_dataset_offset(
            dataset.raw, dataset.gravity, dataset.label, **options
        )

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        members = tuple(executor.map(run, datasets))

    if len(members) == 1:
        return members[0]

    estimates = np.array([member.o_hat for member in members])
    mean = estimates.mean(axis=0)
    spread = estimates.std(axis=0)
    logger.info(f"Смещение по {len(members)} наборам: max разброс {spread.max():.3e}")
    if spread.max() > SPREAD_WARNING * max(np.linalg.norm(mean), 1.0):
        logger.warning(
            f"Оценки смещения по наборам расходятся: max разброс {spread.max():.3e}"
        )
    return OffsetEnsemble(o_hat=mean, spread=spread, members=members)
