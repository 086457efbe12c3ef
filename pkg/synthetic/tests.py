import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from sensors.domain import NO_ADDED_MASS, AddedMassSpec, wrench_map
from synthetic.services import (
    CALIBRATION_MASSES,
    NOISELESS,
    VALIDATION_MASSES,
    NoiseSpec,
    SweepSpec,
    generate_dataset,
    gravity_directions,
    ground_truth_to_dict,
    make_ground_truth,
    orientation_sweep,
    relative_noise,
    standard_scenario,
)


class GroundTruthTest(SimpleTestCase):
    """Тесты эталона синтетического стенда"""

    def test_same_seed_gives_identical_truth(self):
        """Тест детерминированности по зерну"""
        first, second = make_ground_truth(11), make_ground_truth(11)
        np.testing.assert_array_equal(first.model.C, second.model.C)
        np.testing.assert_array_equal(first.model.o, second.model.o)
        self.assertEqual(first.body.mass, second.body.mass)
        self.assertFalse(np.array_equal(first.model.C, make_ground_truth(12).model.C))

    def test_conditioning_controls_condition_number(self):
        """Тест числа обусловленности C"""
        well = make_ground_truth(1, 1.0).model.C
        poor = make_ground_truth(1, 100.0).model.C
        self.assertAlmostEqual(np.linalg.cond(well), 1.0, delta=1e-10)
        self.assertAlmostEqual(np.linalg.cond(poor), 100.0, delta=1.0)

    def test_body_within_physical_ranges(self):
        """Тест диапазонов массы и центра масс тела"""
        for seed in range(20):
            body = make_ground_truth(seed).body
            self.assertTrue(0.5 <= body.mass <= 5.0)
            self.assertLessEqual(np.linalg.norm(body.com), 0.5)

    def test_conditioning_below_one_raises_validation_error(self):
        """Тест недопустимого conditioning"""
        with self.assertRaises(ValidationError):
            make_ground_truth(0, conditioning=0.5)

    def test_ground_truth_dict_marked_as_test_only(self):
        """Тест словаря эталона для тестовых сценариев"""
        data = ground_truth_to_dict(make_ground_truth(0))
        self.assertIn("_comment", data)
        self.assertEqual(np.array(data["C"]).shape, (6, 6))
        self.assertEqual(len(data["offset"]), 6)


class SweepTest(SimpleTestCase):
    """Тесты сетки ориентаций"""

    def test_corner_rotations(self):
        """Тест сетки 2x2: повороты в угловых точках диапазонов"""
        rotations = orientation_sweep(
            SweepSpec(frontback_range=70, lateral_range=90, frontback_steps=2, lateral_steps=2)
        )
        self.assertEqual(len(rotations), 4)
        down = gravity_directions(rotations, 1.0)
        # поворот вокруг y на -35°, затем вокруг неподвижной оси x на -45°
        pitch, roll = np.radians(-35.0), np.radians(-45.0)
        Ry = np.array(
            [[np.cos(pitch), 0, np.sin(pitch)], [0, 1, 0], [-np.sin(pitch), 0, np.cos(pitch)]]
        )
        Rx = np.array(
            [[1, 0, 0], [0, np.cos(roll), -np.sin(roll)], [0, np.sin(roll), np.cos(roll)]]
        )
        np.testing.assert_allclose(rotations[0], Rx @ Ry, atol=1e-12)
        np.testing.assert_allclose(down[0], (Rx @ Ry).T @ [0, 0, -1.0], atol=1e-12)

    def test_rotations_orthonormal(self):
        """Тест ортонормированности поворотов"""
        for sweep in (SweepSpec(), SweepSpec(random=True, seed=5)):
            for rotation in orientation_sweep(sweep):
                np.testing.assert_allclose(rotation.T @ rotation, np.eye(3), atol=1e-12)
                self.assertAlmostEqual(np.linalg.det(rotation), 1.0, delta=1e-12)

    def test_gravity_directions_span_three_dimensions(self):
        """Тест трехмерности направлений гравитации на сетке 10x10"""
        sweep = SweepSpec(frontback_steps=10, lateral_steps=10)
        gravity = gravity_directions(orientation_sweep(sweep), 9.81)
        singular_values = np.linalg.svd(gravity, compute_uv=False)
        self.assertGreater(singular_values[2], 0.05 * singular_values[0])

    def test_random_sweep_is_seeded(self):
        """Тест случайной выборки ориентаций"""
        first = orientation_sweep(SweepSpec(random=True, seed=3))
        second = orientation_sweep(SweepSpec(random=True, seed=3))
        self.assertEqual(len(first), 50)
        np.testing.assert_array_equal(np.array(first), np.array(second))

    def test_invalid_sweep_raises_validation_error(self):
        """Тест проверки параметров сетки"""
        with self.assertRaises(ValidationError):
            SweepSpec(frontback_range=0)
        with self.assertRaises(ValidationError):
            SweepSpec(lateral_steps=1)


class GenerateDatasetTest(SimpleTestCase):
    """Тесты генерации наборов"""

    def setUp(self):
        self.truth = make_ground_truth(4)
        self.added = AddedMassSpec(mass=0.51, com=[0.2, -0.05, 0.04])

    def test_noiseless_samples_satisfy_model(self):
        """Тест модели C (r - o) = (M_b + M_a) g без шума"""
        dataset = generate_dataset(self.truth, self.added)
        M = wrench_map(self.truth.body) + wrench_map(self.added)
        wrenches = (dataset.raw - self.truth.model.o) @ self.truth.model.C.T
        residual = wrenches - dataset.gravity @ M.T
        self.assertLess(np.abs(residual).max(), 1e-10)
        np.testing.assert_allclose(
            np.linalg.norm(dataset.gravity, axis=1), self.truth.gravity_norm, rtol=1e-14
        )

    def test_no_added_mass_reduces_to_body(self):
        """Тест набора без добавочной массы"""
        dataset = generate_dataset(self.truth, NO_ADDED_MASS)
        wrenches = (dataset.raw - self.truth.model.o) @ self.truth.model.C.T
        expected = dataset.gravity @ wrench_map(self.truth.body).T
        np.testing.assert_allclose(wrenches, expected, atol=1e-10)

    def test_noise_is_seeded(self):
        """Тест воспроизводимости шума"""
        noise = NoiseSpec(raw_sigma=0.1, accel_sigma=0.01, seed=9)
        first = generate_dataset(self.truth, self.added, noise=noise)
        second = generate_dataset(self.truth, self.added, noise=noise)
        clean = generate_dataset(self.truth, self.added, noise=NOISELESS)
        np.testing.assert_array_equal(first.raw, second.raw)
        self.assertFalse(np.array_equal(first.raw, clean.raw))

    def test_negative_noise_raises_validation_error(self):
        """Тест отрицательного уровня шума"""
        with self.assertRaises(ValidationError):
            NoiseSpec(raw_sigma=-1.0)

    def test_relative_noise_scales_with_signal(self):
        """Тест шума относительно СКО сигнала"""
        noise = relative_noise(0.01, self.truth, self.added)
        clean = generate_dataset(self.truth, self.added)
        scale = clean.raw.std(axis=0)
        np.testing.assert_allclose(noise.raw_sigma, 0.01 * scale, rtol=1e-12)
        np.testing.assert_allclose(
            noise.accel_sigma, 0.01 * self.truth.gravity_norm / np.sqrt(3.0)
        )


class StandardScenarioTest(SimpleTestCase):
    """Тесты сценария из восьми наборов"""

    def test_scenario_layout(self):
        """Тест состава сценария: 4 калибровочных и 4 проверочных набора"""
        truth, calibration, validation = standard_scenario(7)
        self.assertEqual(
            [d.label for d in calibration], [label for label, _ in CALIBRATION_MASSES]
        )
        self.assertEqual(
            [d.label for d in validation], [label for label, _ in VALIDATION_MASSES]
        )
        masses = {d.added_mass.mass for d in calibration + validation}
        self.assertEqual(masses, {0.0, 0.51})
        self.assertTrue(all(len(d) == 50 for d in calibration + validation))

    def test_scenario_is_deterministic(self):
        """Тест детерминированности зашумленного сценария"""
        _, first, _ = standard_scenario(3, noise_level=0.01)
        _, second, _ = standard_scenario(3, noise_level=0.01)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.raw, b.raw)
            np.testing.assert_array_equal(a.gravity, b.gravity)
