"""
Синтетический стенд: твердое тело с датчиком силы-момента и акселерометром.

Каждый отсчет - независимая статическая поза, динамика не моделируется:
g = T^T (0, 0, -|g|), r = C^-1 (M_b + M_a) g + o + шум.

Генераторы полностью детерминированы зерном; независимые зерна для наборов
получаются через np.random.SeedSequence(seed).spawn(n).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from scipy.spatial.transform import Rotation
from scipy.stats import ortho_group

from sensors.domain import (
    AddedMassSpec,
    CalibrationModel,
    Dataset,
    InertialParams,
    NO_ADDED_MASS,
    wrench_map,
)


logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    model: CalibrationModel
    body: InertialParams
    gravity_norm: float = 9.80665

    def __post_init__(self):
        if self.body.mass <= 0:
            raise ValidationError("Масса тела в эталоне должна быть положительной.")
        if not 1.0 / np.linalg.cond(self.model.C) > 1e-6:
            raise ValidationError("Эталонная матрица C слишком плохо обусловлена.")

    def total_wrench_map(self, added=NO_ADDED_MASS):
        return wrench_map(self.body) + wrench_map(added)


@dataclass(frozen=True)
class SweepSpec:
    """
    Сетка ориентаций: наклон вперед-назад (вокруг y) и боковой наклон (вокруг x).
    Диапазоны в градусах, центрированы на нуле. При random=True то же число поз
    выбирается равномерно внутри диапазонов по зерну seed.
    """

    frontback_range: float = 70.0
    lateral_range: float = 90.0
    frontback_steps: int = 5
    lateral_steps: int = 10
    seed: int = 0
    random: bool = False

    def __post_init__(self):
        if self.frontback_range <= 0 or self.lateral_range <= 0:
            raise ValidationError("Диапазоны углов должны быть положительными.")
        if self.frontback_steps < 2 or self.lateral_steps < 2:
            raise ValidationError("Число шагов по каждой оси должно быть не меньше 2.")

    @property
    def pose_count(self):
        return self.frontback_steps * self.lateral_steps


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    raw_sigma: np.ndarray = field(default_factory=lambda: np.zeros(6))
    accel_sigma: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int = 0

    def __post_init__(self):
        raw_sigma = np.broadcast_to(np.asarray(self.raw_sigma, dtype=float), (6,))
        accel_sigma = np.broadcast_to(np.asarray(self.accel_sigma, dtype=float), (3,))
        if np.any(raw_sigma < 0) or np.any(accel_sigma < 0):
            raise ValidationError("Уровни шума должны быть неотрицательными.")
        object.__setattr__(self, "raw_sigma", raw_sigma.copy())
        object.__setattr__(self, "accel_sigma", accel_sigma.copy())

    @property
    def is_silent(self):
        return not (np.any(self.raw_sigma) or np.any(self.accel_sigma))


NOISELESS = NoiseSpec()


def make_ground_truth(seed, conditioning=10.0, gravity_norm=None):
    """
    Псевдослучайный эталон: C с логарифмически распределенными сингулярными
    числами на [1, conditioning], случайное смещение, масса тела 0.5-5 кг,
    |c| <= 0.5 м
    """
    if conditioning < 1:
        raise ValidationError("conditioning должно быть не меньше 1.")
    if gravity_norm is None:
        gravity_norm = settings.FTCAL_GRAVITY_NORM
    rng = np.random.default_rng(seed)

    left = ortho_group.rvs(6, random_state=rng)
    right = ortho_group.rvs(6, random_state=rng)
    singular_values = np.logspace(0.0, np.log10(conditioning), 6)
    C = left @ np.diag(singular_values) @ right.T
    offset = rng.normal(scale=100.0, size=6)

    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    body = InertialParams(
        mass=rng.uniform(0.5, 5.0),
        com=direction * rng.uniform(0.0, 0.5),
    )
    return GroundTruth(
        model=CalibrationModel(C=C, o=offset), body=body, gravity_norm=gravity_norm
    )


def orientation_sweep(sweep):
    """
    Повороты: композиция наклона вперед-назад (ось y) и бокового наклона
    (ось x) по сетке или случайной выборке
    """
    half_fb = sweep.frontback_range / 2.0
    half_lat = sweep.lateral_range / 2.0
    if sweep.random:
        rng = np.random.default_rng(sweep.seed)
        angles = np.column_stack(
            [
                rng.uniform(-half_fb, half_fb, sweep.pose_count),
                rng.uniform(-half_lat, half_lat, sweep.pose_count),
            ]
        )
    else:
        frontback = np.linspace(-half_fb, half_fb, sweep.frontback_steps)
        lateral = np.linspace(-half_lat, half_lat, sweep.lateral_steps)
        grid = np.meshgrid(frontback, lateral, indexing="ij")
        angles = np.column_stack([grid[0].ravel(), grid[1].ravel()])
    return list(Rotation.from_euler("yx", angles, degrees=True).as_matrix())


def gravity_directions(rotations, gravity_norm):
    down = np.array([0.0, 0.0, -gravity_norm])
    return np.einsum("nji,j->ni", np.asarray(rotations), down)


def generate_dataset(
    truth, added=NO_ADDED_MASS, sweep=None, noise=NOISELESS, label=""
):
    """
    Набор статических отсчетов по модели r = C^-1 M g + o
    """
    sweep = sweep or SweepSpec()
    gravity = gravity_directions(orientation_sweep(sweep), truth.gravity_norm)
    wrenches = gravity @ truth.total_wrench_map(added).T
    raw = np.linalg.solve(truth.model.C, wrenches.T).T + truth.model.o

    if not noise.is_silent:
        rng = np.random.default_rng(noise.seed)
        raw = raw + rng.normal(size=raw.shape) * noise.raw_sigma
        gravity = gravity + rng.normal(size=gravity.shape) * noise.accel_sigma

    logger.debug(f"Сгенерирован набор '{label}': {len(raw)} поз")
    return Dataset(raw=raw, gravity=gravity, added_mass=added, label=label)


def relative_noise(level, truth, added=NO_ADDED_MASS, sweep=None, seed=0):
    """
    Шум уровня level относительно СКО центрированного сигнала по каждому каналу;
    шум акселерометра level·|g|/sqrt(3) на ось
    """
    clean = generate_dataset(truth, added, sweep)
    centered = clean.raw - clean.raw.mean(axis=0)
    raw_scale = np.sqrt(np.mean(centered**2, axis=0))
    return NoiseSpec(
        raw_sigma=level * raw_scale,
        accel_sigma=np.full(3, level * truth.gravity_norm / np.sqrt(3.0)),
        seed=seed,
    )


# Конфигурации добавочных масс: 4 калибровочных и 4 проверочных набора.
# Положения проверочных грузов совпадают с эталонными значениями для стопы.
CALIBRATION_MASSES = (
    ("dataset_1", AddedMassSpec(mass=0.0, com=[0.0, 0.0, 0.0])),
    ("dataset_2", AddedMassSpec(mass=0.51, com=[0.30, 0.05, 0.04])),
    ("dataset_3", AddedMassSpec(mass=0.51, com=[0.10, -0.08, 0.06])),
    ("dataset_4", AddedMassSpec(mass=0.51, com=[-0.05, 0.06, 0.05])),
)
VALIDATION_MASSES = (
    ("dataset_5", AddedMassSpec(mass=0.51, com=[0.39, -0.035, 0.029])),
    ("dataset_6", AddedMassSpec(mass=0.51, com=[0.21, 0.0, 0.063])),
    ("dataset_7", AddedMassSpec(mass=0.0, com=[0.0, 0.0, 0.0])),
    ("dataset_8", AddedMassSpec(mass=0.51, com=[-0.04, 0.0, 0.063])),
)


def standard_scenario(
    seed, sweep=None, noise_level=0.0, conditioning=10.0, gravity_norm=None
):
    """
    Сценарий из восьми наборов: возвращает (эталон, калибровочные, проверочные)
    """
    sweep = sweep or SweepSpec()
    truth = make_ground_truth(seed, conditioning, gravity_norm)
    children = np.random.SeedSequence(seed).spawn(
        len(CALIBRATION_MASSES) + len(VALIDATION_MASSES)
    )

    datasets = []
    configurations = CALIBRATION_MASSES + VALIDATION_MASSES
    for (label, added), child in zip(configurations, children):
        child_seed = int(child.generate_state(1)[0])
        noise = NOISELESS
        if noise_level > 0:
            noise = relative_noise(noise_level, truth, added, sweep, seed=child_seed)
        datasets.append(generate_dataset(truth, added, sweep, noise, label=label))

    split = len(CALIBRATION_MASSES)
    logger.info(f"Сценарий из {len(datasets)} наборов сгенерирован (seed={seed})")
    return truth, datasets[:split], datasets[split:]


def ground_truth_to_dict(truth):
    return {
        "_comment": "Эталон синтетического стенда - только для тестовых сценариев",
        "C": truth.model.C.tolist(),
        "offset": truth.model.o.tolist(),
        "body_mass_kg": truth.body.mass,
        "body_com_m": truth.body.com.tolist(),
        "gravity_norm": truth.gravity_norm,
    }
