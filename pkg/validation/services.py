"""
Проверка калибровки на отложенных наборах данных.

Для каждого набора: сферичность откалиброванных сил, эллипсоид проекции
сырых отсчетов на подпространство U1 и оценка массы и центра масс
добавочного груза по калибровке (C, o).
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg
from django.conf import settings
from django.core.exceptions import ValidationError

from calibration import subspace
from calibration.identification import build_H
from calibration.serializers import SCHEMA_VERSION
from sensors.domain import InertialParams, kronecker
from sensors.exceptions import EmptyDataset
from sensors.validators import validate_vector

from .exceptions import InertialRankDeficient
from .geometry import fit_ellipsoid, sphericity


logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class InertialRecovery:
    """
    Оценка массы и центра масс по одному набору.

    Если задана оценка тела, mass_est и com_est относятся к добавочному грузу
    (relative_to_baseline=True), иначе к телу вместе с грузом.
    """

    mass_est: float
    com_est: Optional[np.ndarray]
    mass_truth: Optional[float] = None
    com_truth: Optional[np.ndarray] = None
    total_mass: float = 0.0
    total_first_moment: np.ndarray = field(default_factory=lambda: np.zeros(3))
    relative_to_baseline: bool = False

    @property
    def mass_error(self):
        if self.mass_truth is None:
            return None
        return self.mass_est - self.mass_truth


@dataclass(frozen=True, eq=False)
class ValidationRow:
    label: str
    added_mass: InertialParams
    sphericity: object
    projected: object
    projected_offset_distance: float
    inertial: InertialRecovery
    forces: np.ndarray
    projected_points: np.ndarray
    reference_sphericity: object = None
    reference_inertial: Optional[InertialRecovery] = None


@dataclass(frozen=True, eq=False)
class ValidationReport:
    sensor: str
    rows: tuple
    body: Optional[InertialParams] = None
    baseline_label: Optional[str] = None
    has_reference: bool = False


def calibrated_wrenches(C, offset, raw):
    """w_i = C (r_i - o) для всех отсчетов, массив (N, 6)"""
    return (np.asarray(raw, dtype=float) - offset) @ np.asarray(C, dtype=float).T


def estimate_inertial(C, offset, dataset, body=None, mass_floor=None):
    """
    Наименьшие квадраты по (m, mc) для M(m, c) g_i = C (r_i - o).

    Каждый отсчет дает блок (g_i^T ⊗ I6) H; при одном направлении гравитации
    ранг системы равен 3, и момент вдоль g не определяется.
    """
    mass_floor = settings.FTCAL_MASS_FLOOR if mass_floor is None else mass_floor
    offset = validate_vector(offset, 6, "offset")

    H = build_H().H
    identity = np.eye(6)
    A = np.vstack(
        [kronecker(g[np.newaxis, :], identity) @ H for g in dataset.gravity]
    )
    rank = np.linalg.matrix_rank(A)
    if len(dataset) < 4 or rank < 4:
        raise InertialRankDeficient(
            f"{dataset.label}: ранг системы для (m, mc) равен {rank} из 4; "
            f"нужно не меньше двух разных направлений гравитации."
        )

    wrenches = calibrated_wrenches(C, offset, dataset.raw)
    theta, _, _, _ = scipy.linalg.lstsq(A, wrenches.reshape(-1), lapack_driver="gelsy")
    total_mass, total_first_moment = float(theta[0]), theta[1:]

    mass, first_moment, truth = total_mass, total_first_moment, None
    if body is not None:
        mass = total_mass - body.mass
        first_moment = total_first_moment - body.first_moment
        truth = dataset.added_mass

    return InertialRecovery(
        mass_est=mass,
        com_est=first_moment / mass if mass > mass_floor else None,
        mass_truth=truth.mass if truth is not None else None,
        com_truth=truth.com if truth is not None and truth.mass > mass_floor else None,
        total_mass=total_mass,
        total_first_moment=total_first_moment,
        relative_to_baseline=body is not None,
    )


def _baseline_body(C, offset, datasets, baseline_label):
    for dataset in datasets:
        if dataset.label == baseline_label:
            recovery = estimate_inertial(C, offset, dataset)
            if recovery.com_est is None:
                raise ValidationError(
                    f"Базовый набор '{baseline_label}' дает нулевую массу тела."
                )
            return InertialParams(mass=recovery.total_mass, com=recovery.com_est)
    raise ValidationError(f"Базовый набор '{baseline_label}' не найден.")


def _validate_dataset(C, offset, dataset, body, reference, reference_body):
    forces = calibrated_wrenches(C, offset, dataset.raw)[:, :3]
    basis = subspace.fit_subspace(dataset.raw)
    projected_points = subspace.project(basis, dataset.raw)
    projected = fit_ellipsoid(projected_points)
    distance = float(np.linalg.norm(projected.center - subspace.project(basis, offset)))

    reference_sphericity = reference_inertial = None
    if reference is not None:
        reference_forces = calibrated_wrenches(reference.C, reference.o, dataset.raw)
        reference_sphericity = sphericity(reference_forces[:, :3])
        reference_inertial = estimate_inertial(
            reference.C, reference.o, dataset, body=reference_body
        )

    return ValidationRow(
        label=dataset.label,
        added_mass=dataset.added_mass,
        sphericity=sphericity(forces),
        projected=projected,
        projected_offset_distance=distance,
        inertial=estimate_inertial(C, offset, dataset, body=body),
        forces=forces,
        projected_points=projected_points,
        reference_sphericity=reference_sphericity,
        reference_inertial=reference_inertial,
    )


def validation_report(
    C,
    offset,
    datasets,
    body=None,
    baseline_label=None,
    reference=None,
    sensor="",
    jobs=1,
):
    """
    Отчет по проверочным наборам.

    body - оценка тела из калибровки; baseline_label заменяет ее оценкой по
    набору без добавочной массы. reference - вторая калибровка (например,
    заводская), оцениваемая на тех же наборах.
    """
    datasets = list(datasets)
    if not datasets:
        raise EmptyDataset("Для проверки не передано ни одного набора.")
    C = np.asarray(C, dtype=float)
    offset = validate_vector(offset, 6, "offset")

    if baseline_label:
        body = _baseline_body(C, offset, datasets, baseline_label)
    reference_body = None
    if reference is not None and baseline_label:
        reference_body = _baseline_body(reference.C, reference.o, datasets, baseline_label)

    def run(dataset):
        return _validate_dataset(C, offset, dataset, body, reference, reference_body)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        rows = tuple(executor.map(run, datasets))

    for row in rows:
        logger.info(
            f"{row.label}: анизотропия {row.sphericity.anisotropy:.2e}, "
            f"m = {row.inertial.mass_est:.4f} кг"
        )
    return ValidationReport(
        sensor=sensor,
        rows=rows,
        body=body,
        baseline_label=baseline_label,
        has_reference=reference is not None,
    )


def _format_com(com):
    if com is None:
        return "     -       -       -"
    return " ".join(f"{100 * value:7.2f}" for value in com)


def render_table(report):
    """
    Текстовая таблица по JSON-отчету проверки: датчик, набор, добавочная масса,
    полуоси эллипсоида сил, оценки массы и центра масс (см)
    """
    header = (
        f"{'sensor':<8} {'dataset':<12} {'m_a [kg]':>8} "
        f"{'semiaxes [N]':>26} {'m_est [kg]':>10} {'c_est [cm]':>23}"
    )
    if report["has_reference"]:
        header += f" {'ref semiaxes [N]':>26} {'ref m [kg]':>10}"
    lines = [header, "-" * len(header)]

    for row in report["rows"]:
        semiaxes = " ".join(f"{value:8.3f}" for value in row["sphericity"]["semiaxes"])
        line = (
            f"{report['sensor']:<8} {row['label']:<12} "
            f"{row['added_mass']['mass']:8.3f} {semiaxes:>26} "
            f"{row['inertial']['mass_est']:10.4f} "
            f"{_format_com(row['inertial']['com_est']):>23}"
        )
        if report["has_reference"]:
            reference = " ".join(
                f"{value:8.3f}" for value in row["reference_sphericity"]["semiaxes"]
            )
            line += f" {reference:>26} {row['reference_inertial']['mass_est']:10.4f}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def _write_points(path, header, points):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([[repr(float(value)) for value in point] for point in points])


def write_point_clouds(report, directory):
    """
    Облака точек для внешних графиков: откалиброванные силы и проекции
    сырых отсчетов на U1
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for row in report.rows:
        forces_path = directory / f"{row.label}_forces.csv"
        projected_path = directory / f"{row.label}_projected.csv"
        _write_points(forces_path, ["fx", "fy", "fz"], row.forces)
        _write_points(projected_path, ["l1", "l2", "l3"], row.projected_points)
        written += [forces_path, projected_path]
    return written


def _vector(values):
    return None if values is None else [float(x) for x in values]


def _sphericity_dict(report):
    if report is None:
        return None
    return {
        "semiaxes": _vector(report.semiaxes),
        "anisotropy": report.anisotropy,
        "mean_force_norm": report.mean_force_norm,
    }


def _inertial_dict(recovery):
    if recovery is None:
        return None
    return {
        "mass_est": recovery.mass_est,
        "com_est": _vector(recovery.com_est),
        "mass_truth": recovery.mass_truth,
        "com_truth": _vector(recovery.com_truth),
        "total_mass": recovery.total_mass,
        "total_first_moment": _vector(recovery.total_first_moment),
        "relative_to_baseline": recovery.relative_to_baseline,
    }


def report_to_dict(report):
    """JSON-представление отчета; схема - ValidationReportSerializer"""
    rows = []
    for row in report.rows:
        rows.append(
            {
                "label": row.label,
                "added_mass": {
                    "mass": row.added_mass.mass,
                    "com": _vector(row.added_mass.com),
                },
                "sphericity": _sphericity_dict(row.sphericity),
                "projected_ellipsoid": {
                    "center": _vector(row.projected.center),
                    "semiaxes": _vector(row.projected.semiaxes),
                    "axes": row.projected.axes.tolist(),
                    "rms_residual": row.projected.rms_residual,
                },
                "projected_offset_distance": row.projected_offset_distance,
                "inertial": _inertial_dict(row.inertial),
                "reference_sphericity": _sphericity_dict(row.reference_sphericity),
                "reference_inertial": _inertial_dict(row.reference_inertial),
            }
        )
    body = None
    if report.body is not None:
        body = {"mass": report.body.mass, "com": _vector(report.body.com)}
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "validation",
        "sensor": report.sensor,
        "has_reference": report.has_reference,
        "baseline_label": report.baseline_label,
        "body": body,
        "rows": rows,
    }
