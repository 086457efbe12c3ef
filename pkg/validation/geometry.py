"""
Подгонка эллипсоида к облаку точек и проверка сферичности сил.

Алгебраический метод наименьших квадратов по 10 коэффициентам квадрики
a x² + b y² + c z² + d xy + e xz + f yz + g x + h y + i z + j = 0
при ||коэффициенты|| = 1, затем проверка положительной определенности и
разложение квадратичной формы на центр, оси и полуоси. Алгебраическое решение
служит стартом для минимизации радиальных отклонений (scipy.optimize).
Точки предварительно центрируются и нормируются, результат переводится обратно.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .exceptions import DegeneratePointSet, NonEllipsoidQuadric

MIN_POINTS = 10
COPLANAR_RATIO = 1e-9
_TRIL = np.tril_indices(3)


@dataclass(frozen=True, eq=False)
class EllipsoidFit:
    center: np.ndarray
    semiaxes: np.ndarray
    axes: np.ndarray
    rms_residual: float

    @property
    def shape_matrix(self):
        """Q: (x - center)^T Q (x - center) = 1"""
        return self.axes @ np.diag(1.0 / self.semiaxes**2) @ self.axes.T

    def radial_residuals(self, points):
        """
        Отклонение точки от поверхности вдоль луча из центра
        """
        offsets = np.asarray(points, dtype=float) - self.center
        rho = np.sqrt(np.einsum("ij,jk,ik->i", offsets, self.shape_matrix, offsets))
        distances = np.linalg.norm(offsets, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(rho > 0, distances * (1.0 - 1.0 / rho), distances)


@dataclass(frozen=True, eq=False)
class SphericityReport:
    semiaxes: np.ndarray
    anisotropy: float
    mean_force_norm: float
    fit: EllipsoidFit = None


def _as_points(points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.ndim != 2 or points.shape[1] != 3:
        raise DegeneratePointSet(f"Ожидались точки формы (N, 3), получено {points.shape}.")
    if len(points) < MIN_POINTS:
        raise DegeneratePointSet(
            f"Для подгонки эллипсоида нужно не меньше {MIN_POINTS} точек, "
            f"есть {len(points)}."
        )
    return points


def _quadric_design(points):
    x, y, z = points.T
    return np.column_stack(
        [x * x, y * y, z * z, x * y, x * z, y * z, x, y, z, np.ones(len(points))]
    )


def _radial_residuals(center, factor, points):
    """
    Радиальные отклонения для формы Q = L L^T, заданной нижнетреугольным L
    """
    offsets = points - center
    rho = np.linalg.norm(offsets @ factor, axis=1)
    distances = np.linalg.norm(offsets, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rho > 0, distances * (1.0 - 1.0 / rho), distances)


def _unpack(params):
    factor = np.zeros((3, 3))
    factor[_TRIL] = params[3:]
    return params[:3], factor


def _pack(center, factor):
    return np.concatenate([center, factor[_TRIL]])


def _ellipsoid_residuals(params, points):
    center, factor = _unpack(params)
    return _radial_residuals(center, factor, points)


def _rms(residuals):
    return float(np.sqrt(np.mean(residuals**2)))


@dataclass(frozen=True, eq=False)
class SphereFit:
    center: np.ndarray
    radius: float
    rms_residual: float


def _normalize(points):
    mean = points.mean(axis=0)
    centered = points - mean
    spread = np.linalg.svd(centered, compute_uv=False)
    if spread[0] == 0 or spread[2] / spread[0] < COPLANAR_RATIO:
        raise DegeneratePointSet("Точки лежат в одной плоскости или совпадают.")
    scale = np.sqrt(np.mean(np.sum(centered**2, axis=1)))
    return mean, scale, centered / scale


def _fit_normalized_sphere(normalized):
    # линейное начальное приближение: |x|^2 = 2 c·x + k
    design = np.column_stack([2.0 * normalized, np.ones(len(normalized))])
    solution, _, _, _ = scipy.linalg.lstsq(design, np.sum(normalized**2, axis=1))
    center = solution[:3]
    radius = np.sqrt(max(solution[3] + center @ center, 0.0)) or 1.0

    result = scipy.optimize.least_squares(
        lambda params: np.linalg.norm(normalized - params[:3], axis=1) - params[3],
        np.concatenate([center, [radius]]),
    )
    return result.x[:3], abs(result.x[3]), result.fun


def fit_sphere(points):
    """
    Сфера, минимизирующая отклонения |x - center| - radius
    """
    points = _as_points(points)
    mean, scale, normalized = _normalize(points)
    center, radius, residuals = _fit_normalized_sphere(normalized)
    return SphereFit(
        center=mean + scale * center,
        radius=float(scale * radius),
        rms_residual=scale * _rms(residuals),
    )


def _algebraic_quadric(normalized):
    _, _, vt = np.linalg.svd(_quadric_design(normalized), full_matrices=False)
    a, b, c, d, e, f, g, h, i, j = vt[-1]
    A = np.array(
        [
            [a, d / 2, e / 2],
            [d / 2, b, f / 2],
            [e / 2, f / 2, c],
        ]
    )
    linear = np.array([g, h, i])

    try:
        center = -0.5 * np.linalg.solve(A, linear)
    except np.linalg.LinAlgError as e:
        raise NonEllipsoidQuadric("Квадрика не имеет центра.") from e
    level = center @ A @ center + linear @ center + j
    if level == 0:
        raise NonEllipsoidQuadric("Квадрика вырождена в точку или конус.")

    Q = A / -level
    if np.any(np.linalg.eigvalsh(Q) <= 0):
        raise NonEllipsoidQuadric(
            "Подогнанная квадрика не является эллипсоидом: форма не положительно "
            "определена. Проверьте данные (знак акселерометра, покрытие ориентаций)."
        )
    return center, Q


def fit_ellipsoid(points):
    """
    Алгебраическая подгонка задает класс квадрики и начальное приближение,
    затем радиальные отклонения минимизируются least_squares. Старт - лучший
    из алгебраического эллипсоида и геометрической сферы, поэтому
    rms_residual не больше, чем у fit_sphere.
    """
    points = _as_points(points)
    mean, scale, normalized = _normalize(points)

    center, Q = _algebraic_quadric(normalized)
    starts = [_pack(center, np.linalg.cholesky(Q))]
    sphere_center, radius, _ = _fit_normalized_sphere(normalized)
    starts.append(_pack(sphere_center, np.eye(3) / radius))
    start = min(starts, key=lambda params: _rms(_ellipsoid_residuals(params, normalized)))

    refined = scipy.optimize.least_squares(_ellipsoid_residuals, start, args=(normalized,))
    best = min(
        (start, refined.x),
        key=lambda params: _rms(_ellipsoid_residuals(params, normalized)),
    )
    center, factor = _unpack(best)
    eigenvalues, eigenvectors = np.linalg.eigh(factor @ factor.T)
    if np.any(eigenvalues <= 0):
        raise NonEllipsoidQuadric("Уточненная форма эллипсоида вырождена.")

    # eigh сортирует по возрастанию: наименьшее собственное число - наибольшая полуось
    axes = eigenvectors.copy()
    if np.linalg.det(axes) < 0:
        axes[:, -1] *= -1

    return EllipsoidFit(
        center=mean + scale * center,
        semiaxes=scale / np.sqrt(eigenvalues),
        axes=axes,
        rms_residual=scale * _rms(_ellipsoid_residuals(best, normalized)),
    )


def sphericity(forces):
    """
    Силы, откалиброванные верной матрицей, лежат на сфере радиуса m|g|;
    anisotropy = (max - min) / mean полуосей
    """
    forces = _as_points(forces)
    fit = fit_ellipsoid(forces)
    return SphericityReport(
        semiaxes=fit.semiaxes,
        anisotropy=float((fit.semiaxes.max() - fit.semiaxes.min()) / fit.semiaxes.mean()),
        mean_force_norm=float(np.mean(np.linalg.norm(forces, axis=1))),
        fit=fit,
    )
