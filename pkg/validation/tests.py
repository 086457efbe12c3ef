import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from scipy.stats import ortho_group

from sensors.domain import CalibrationModel, Dataset, InertialParams
from sensors.exceptions import EmptyDataset
from synthetic.services import SweepSpec, standard_scenario
from validation.exceptions import (
    DegeneratePointSet,
    InertialRankDeficient,
    NonEllipsoidQuadric,
)
from validation.geometry import fit_ellipsoid, fit_sphere, sphericity
from validation.serializers import ValidationReportSerializer
from validation.services import (
    calibrated_wrenches,
    estimate_inertial,
    render_table,
    report_to_dict,
    validation_report,
    write_point_clouds,
)

WIDE_SWEEP = SweepSpec(frontback_range=120, lateral_range=150)


def sphere_points(count=100, seed=0):
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(count, 3))
    return points / np.linalg.norm(points, axis=1, keepdims=True)


class EllipsoidFitTest(SimpleTestCase):
    """Тесты подгонки эллипсоида"""

    def test_unit_sphere(self):
        """Тест единичной сферы: центр 0, полуоси 1"""
        fit = fit_ellipsoid(sphere_points())
        np.testing.assert_allclose(fit.center, np.zeros(3), atol=1e-8)
        np.testing.assert_allclose(fit.semiaxes, np.ones(3), atol=1e-8)
        self.assertLess(fit.rms_residual, 1e-10)

    def test_axis_aligned_ellipsoid(self):
        """Тест эллипсоида diag(2, 1, 0.5) со сдвигом (1, 2, 3)"""
        center = np.array([1.0, 2.0, 3.0])
        points = sphere_points(200, seed=1) * [2.0, 1.0, 0.5] + center
        fit = fit_ellipsoid(points)
        np.testing.assert_allclose(fit.center, center, atol=1e-8)
        np.testing.assert_allclose(fit.semiaxes, [2.0, 1.0, 0.5], atol=1e-8)
        np.testing.assert_allclose(np.abs(fit.axes), np.eye(3), atol=1e-8)
        self.assertAlmostEqual(np.linalg.det(fit.axes), 1.0, delta=1e-12)

    def test_rotation_translation_invariance(self):
        """Тест инвариантности полуосей к повороту и сдвигу"""
        base = sphere_points(150, seed=2) * [3.0, 1.5, 0.7]
        rotation = ortho_group.rvs(3, random_state=3)
        shift = np.array([-4.0, 0.5, 10.0])
        first = fit_ellipsoid(base)
        second = fit_ellipsoid(base @ rotation.T + shift)
        np.testing.assert_allclose(second.semiaxes, first.semiaxes, rtol=1e-8)
        np.testing.assert_allclose(second.center, shift, atol=1e-8)
        np.testing.assert_allclose(
            second.shape_matrix,
            rotation @ first.shape_matrix @ rotation.T,
            atol=1e-8,
        )

    def test_radial_residuals(self):
        """Тест радиального отклонения точек вне поверхности"""
        fit = fit_ellipsoid(sphere_points())
        residuals = fit.radial_residuals([[2.0, 0.0, 0.0], [0.0, 0.5, 0.0]])
        np.testing.assert_allclose(residuals, [1.0, -0.5], atol=1e-8)

    def test_sphere_fit(self):
        """Тест сферы радиуса 2 с центром (1, -1, 0.5)"""
        center = np.array([1.0, -1.0, 0.5])
        fit = fit_sphere(2.0 * sphere_points(80, seed=5) + center)
        np.testing.assert_allclose(fit.center, center, atol=1e-8)
        self.assertAlmostEqual(fit.radius, 2.0, delta=1e-8)
        self.assertLess(fit.rms_residual, 1e-10)

    def test_residual_not_worse_than_sphere(self):
        """Тест зашумленных точек: остаток эллипсоида не больше остатка сферы"""
        rng = np.random.default_rng(11)
        for seed in range(5):
            points = sphere_points(60, seed=seed) * (1.0 + 0.15 * rng.normal(size=(60, 1)))
            ellipsoid = fit_ellipsoid(points)
            sphere = fit_sphere(points)
            self.assertLessEqual(ellipsoid.rms_residual, sphere.rms_residual + 1e-12)
            residuals = ellipsoid.radial_residuals(points)
            self.assertAlmostEqual(
                ellipsoid.rms_residual, np.sqrt(np.mean(residuals**2)), delta=1e-9
            )

    def test_coplanar_points_raise_degenerate_point_set(self):
        """Тест точек в одной плоскости"""
        angles = np.linspace(0, 2 * np.pi, 30, endpoint=False)
        points = np.column_stack([np.cos(angles), np.sin(angles), np.zeros(30)])
        with self.assertRaises(DegeneratePointSet):
            fit_ellipsoid(points)

    def test_too_few_points_raise_degenerate_point_set(self):
        """Тест менее десяти точек"""
        with self.assertRaises(DegeneratePointSet) as cm:
            fit_ellipsoid(sphere_points(9))
        self.assertEqual(cm.exception.exit_code, 8)
        with self.assertRaises(DegeneratePointSet):
            fit_ellipsoid(np.zeros((20, 2)))

    def test_hyperboloid_raises_non_ellipsoid_quadric(self):
        """Тест однополостного гиперболоида x² + y² - z² = 1"""
        u, v = np.meshgrid(
            np.linspace(0, 2 * np.pi, 12, endpoint=False), np.linspace(-1, 1, 5)
        )
        points = np.column_stack(
            [
                (np.cosh(v) * np.cos(u)).ravel(),
                (np.cosh(v) * np.sin(u)).ravel(),
                np.sinh(v).ravel(),
            ]
        )
        with self.assertRaises(NonEllipsoidQuadric):
            fit_ellipsoid(points)


class SphericityTest(SimpleTestCase):
    """Тесты сферичности откалиброванных сил"""

    def setUp(self):
        self.truth, _, self.validation = standard_scenario(4, sweep=WIDE_SWEEP)
        self.dataset = self.validation[0]

    def forces(self, C):
        return calibrated_wrenches(C, self.truth.model.o, self.dataset.raw)[:, :3]

    def test_true_calibration_gives_sphere(self):
        """Тест верной калибровки: сфера радиуса (m_b + m_a)|g|"""
        report = sphericity(self.forces(self.truth.model.C))
        radius = (self.truth.body.mass + self.dataset.added_mass.mass) * 9.80665
        self.assertLess(report.anisotropy, 1e-8)
        np.testing.assert_allclose(report.semiaxes, radius, rtol=1e-8)
        self.assertAlmostEqual(report.mean_force_norm, radius, delta=1e-8 * radius)

    def test_scaled_force_row_breaks_sphericity(self):
        """Тест удвоенной первой строки C: анизотропия больше 0.3"""
        C = self.truth.model.C.copy()
        C[0] *= 2.0
        self.assertGreater(sphericity(self.forces(C)).anisotropy, 0.3)

    def test_anisotropy_grows_with_scaling_error(self):
        """Тест монотонного роста анизотропии с ошибкой масштаба"""
        anisotropy = []
        for epsilon in (0.0, 0.01, 0.05, 0.1, 0.3):
            C = self.truth.model.C.copy()
            C[0] *= 1.0 + epsilon
            anisotropy.append(sphericity(self.forces(C)).anisotropy)
        self.assertTrue(np.all(np.diff(anisotropy) > 0))


class InertialRecoveryTest(SimpleTestCase):
    """Тесты оценки массы и центра масс по калибровке"""

    def setUp(self):
        self.truth, _, self.validation = standard_scenario(6)
        self.C, self.o = self.truth.model.C, self.truth.model.o

    def test_total_mass_without_body(self):
        """Тест оценки тела вместе с грузом"""
        dataset = self.validation[0]
        recovery = estimate_inertial(self.C, self.o, dataset)
        expected = self.truth.body.mass + dataset.added_mass.mass
        self.assertAlmostEqual(recovery.total_mass, expected, delta=1e-9)
        self.assertAlmostEqual(recovery.mass_est, expected, delta=1e-9)
        self.assertFalse(recovery.relative_to_baseline)
        self.assertIsNone(recovery.mass_error)

    def test_added_mass_relative_to_body(self):
        """Тест оценки добавочного груза за вычетом тела"""
        dataset = self.validation[0]
        recovery = estimate_inertial(self.C, self.o, dataset, body=self.truth.body)
        self.assertAlmostEqual(recovery.mass_est, 0.51, delta=1e-9)
        np.testing.assert_allclose(recovery.com_est, dataset.added_mass.com, atol=1e-8)
        self.assertAlmostEqual(recovery.mass_error, 0.0, delta=1e-9)
        self.assertTrue(recovery.relative_to_baseline)

    def test_zero_added_mass_has_no_com(self):
        """Тест набора без груза: центр масс не определен"""
        dataset = self.validation[2]
        recovery = estimate_inertial(self.C, self.o, dataset, body=self.truth.body)
        self.assertAlmostEqual(recovery.mass_est, 0.0, delta=1e-9)
        self.assertIsNone(recovery.com_est)
        self.assertIsNone(recovery.com_truth)

    def test_single_gravity_direction_raises_rank_deficient(self):
        """Тест одного направления гравитации: ранг 3 из 4"""
        dataset = Dataset(
            raw=np.tile(self.validation[0].raw[0], (10, 1)),
            gravity=np.tile(self.validation[0].gravity[0], (10, 1)),
        )
        with self.assertRaises(InertialRankDeficient) as cm:
            estimate_inertial(self.C, self.o, dataset)
        self.assertEqual(cm.exception.exit_code, 4)


class ValidationReportTest(SimpleTestCase):
    """Тесты отчета проверки"""

    def setUp(self):
        self.truth, _, self.validation = standard_scenario(8, sweep=WIDE_SWEEP)
        self.C, self.o = self.truth.model.C, self.truth.model.o

    def test_rows_and_projected_center(self):
        """Тест строк отчета: центр эллипсоида проекций совпадает с проекцией смещения"""
        report = validation_report(
            self.C, self.o, self.validation, body=self.truth.body, sensor="right"
        )
        self.assertEqual([row.label for row in report.rows], [d.label for d in self.validation])
        for row in report.rows:
            self.assertLess(row.projected_offset_distance, 1e-6)
            self.assertLess(row.sphericity.anisotropy, 1e-8)
            self.assertAlmostEqual(
                row.inertial.mass_est, row.added_mass.mass, delta=1e-8
            )
        self.assertFalse(report.has_reference)

    def test_baseline_dataset_replaces_body(self):
        """Тест оценки тела по набору без груза"""
        report = validation_report(
            self.C, self.o, self.validation, baseline_label="dataset_7"
        )
        self.assertAlmostEqual(report.body.mass, self.truth.body.mass, delta=1e-9)
        np.testing.assert_allclose(report.body.com, self.truth.body.com, atol=1e-9)
        self.assertEqual(report.baseline_label, "dataset_7")

    def test_unknown_baseline_raises_validation_error(self):
        """Тест несуществующего базового набора"""
        with self.assertRaises(ValidationError):
            validation_report(self.C, self.o, self.validation, baseline_label="nope")

    def test_empty_datasets_raise(self):
        """Тест пустого списка наборов"""
        with self.assertRaises(EmptyDataset):
            validation_report(self.C, self.o, [])

    def test_reference_calibration_columns(self):
        """Тест сравнения с заводской калибровкой"""
        C = self.C.copy()
        C[1] *= 1.2
        reference = CalibrationModel(C=C, o=self.o)
        report = validation_report(
            self.C,
            self.o,
            self.validation,
            baseline_label="dataset_7",
            reference=reference,
            jobs=2,
        )
        self.assertTrue(report.has_reference)
        for row in report.rows:
            self.assertGreater(
                row.reference_sphericity.anisotropy, row.sphericity.anisotropy
            )
            self.assertTrue(row.reference_inertial.relative_to_baseline)

        data = report_to_dict(report)
        table = render_table(data)
        self.assertIn("ref semiaxes", table)
        self.assertEqual(len(table.splitlines()), 2 + len(self.validation))

    def test_report_dict_matches_schema(self):
        """Тест JSON-представления отчета"""
        body = InertialParams(mass=self.truth.body.mass, com=self.truth.body.com)
        report = validation_report(self.C, self.o, self.validation, body=body, sensor="left")
        data = report_to_dict(report)
        serializer = ValidationReportSerializer(data=data)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(data["kind"], "validation")
        self.assertEqual(data["rows"][0]["inertial"]["mass_truth"], 0.51)
        table = render_table(data)
        self.assertIn("dataset_5", table)
        self.assertTrue(table.startswith("sensor"))

    def test_point_clouds_written(self):
        """Тест записи облаков точек"""
        report = validation_report(self.C, self.o, self.validation[:1])
        with tempfile.TemporaryDirectory() as directory:
            written = write_point_clouds(report, directory)
            self.assertEqual(
                sorted(path.name for path in written),
                ["dataset_5_forces.csv", "dataset_5_projected.csv"],
            )
            lines = (Path(directory) / "dataset_5_forces.csv").read_text().splitlines()
            self.assertEqual(lines[0], "fx,fy,fz")
            self.assertEqual(len(lines), 1 + len(self.validation[0]))
