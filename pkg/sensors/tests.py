import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from sensors.domain import (
    AddedMassSpec,
    CalibrationModel,
    Dataset,
    GravitySample,
    InertialParams,
    RawReading,
    Wrench,
    gravitational_wrench,
    kronecker,
    predict_wrench,
    skew,
    unvec,
    vec,
    wrench_map,
)
from sensors.exceptions import (
    BadWindow,
    DimensionMismatch,
    EmptyDataset,
    GravityOutOfBand,
    NoValidSamples,
    ParseError,
    SignalTooShort,
)
from sensors.filters import savitzky_golay
from sensors.services import LOG_HEADER, IngestConfig, LogIngestService, sidecar_path
from sensors.validators import GravityNormValidator
from synthetic.services import SweepSpec, generate_dataset, make_ground_truth


def random_params(rng):
    return InertialParams(mass=rng.uniform(0.1, 5.0), com=rng.uniform(-0.5, 0.5, 3))


class DomainTest(SimpleTestCase):
    """Тесты доменных типов и алгебры модели"""

    def setUp(self):
        self.rng = np.random.default_rng(42)

    def test_skew_matches_cross_product(self):
        """Тест матрицы векторного произведения"""
        c, v = self.rng.normal(size=3), self.rng.normal(size=3)
        np.testing.assert_allclose(skew(c) @ v, np.cross(c, v), atol=1e-14)

    def test_wrench_map_rank(self):
        """Тест ранга M(m, c): 3 при m > 0, нулевая матрица при m = 0"""
        M = wrench_map(random_params(self.rng))
        self.assertEqual(M.shape, (6, 3))
        self.assertEqual(np.linalg.matrix_rank(M), 3)
        zero = wrench_map(AddedMassSpec(mass=0.0, com=[0.1, 0.2, 0.3]))
        np.testing.assert_array_equal(zero, np.zeros((6, 3)))

    def test_wrench_map_pair_is_singular(self):
        """Тест вырожденности блочной матрицы (M1 | M2) для любых параметров"""
        for _ in range(100):
            M1 = wrench_map(random_params(self.rng))
            M2 = wrench_map(random_params(self.rng))
            det = np.linalg.det(np.hstack([M1, M2]))
            scale = np.linalg.norm(M1) ** 3 * np.linalg.norm(M2) ** 3
            self.assertLess(abs(det) / scale, 1e-9)

    def test_vec_is_column_major(self):
        """Тест порядка vec и тождества vec(AXB) = (B^T ⊗ A) vec(X)"""
        np.testing.assert_array_equal(vec([[1, 2], [3, 4]]), [1, 3, 2, 4])
        A = self.rng.normal(size=(6, 6))
        X = self.rng.normal(size=(6, 3))
        B = self.rng.normal(size=(3, 5))
        np.testing.assert_allclose(
            vec(A @ X @ B), kronecker(B.T, A) @ vec(X), atol=1e-12
        )
        np.testing.assert_array_equal(unvec(vec(X), 6, 3), X)

    def test_predict_wrench_and_gravitational_wrench(self):
        """Тест w = C (r - o) и w = M g"""
        model = CalibrationModel(C=2 * np.eye(6), o=np.ones(6))
        wrench = predict_wrench(model, RawReading(np.arange(6.0)))
        np.testing.assert_array_equal(wrench.as_vector(), 2 * (np.arange(6.0) - 1))

        params = InertialParams(mass=2.0, com=[0.0, 0.0, 0.1])
        wrench = gravitational_wrench(params, GravitySample([0.0, -9.81, 0.0]))
        np.testing.assert_allclose(wrench.force, [0.0, -19.62, 0.0])
        np.testing.assert_allclose(wrench.torque, np.cross([0.0, 0.0, 0.2], [0, -9.81, 0]))

    def test_wrench_round_trip(self):
        """Тест преобразования винта в вектор и обратно"""
        vector = self.rng.normal(size=6)
        np.testing.assert_array_equal(Wrench.from_vector(vector).as_vector(), vector)

    def test_value_objects_reject_bad_input(self):
        """Тест проверки размерностей, конечности и обратимости"""
        with self.assertRaises(ValidationError):
            RawReading([1.0, 2.0])
        with self.assertRaises(ValidationError):
            GravitySample([0.0, np.nan, 9.81])
        with self.assertRaises(ValidationError):
            InertialParams(mass=-1.0, com=np.zeros(3))
        singular = np.eye(6)
        singular[5] = singular[4]
        with self.assertRaises(ValidationError):
            CalibrationModel(C=singular, o=np.zeros(6))

    def test_value_objects_are_read_only(self):
        """Тест неизменяемости массивов в доменных типах"""
        reading = RawReading(np.zeros(6))
        with self.assertRaises(ValueError):
            reading.values[0] = 1.0

    def test_added_mass_same_as(self):
        """Тест сравнения добавочных масс с допуском"""
        first = AddedMassSpec(mass=0.51, com=[0.1, 0.0, 0.0])
        self.assertTrue(first.same_as(AddedMassSpec(mass=0.51, com=[0.1, 0, 0]), 1e-9, 1e-9))
        self.assertFalse(first.same_as(AddedMassSpec(mass=0.51, com=[0.2, 0, 0]), 1e-9, 1e-9))


class DatasetTest(SimpleTestCase):
    """Тесты набора данных"""

    def test_empty_dataset_raises_empty_dataset(self):
        """Тест пустого набора"""
        with self.assertRaises(EmptyDataset):
            Dataset(raw=np.empty((0, 6)), gravity=np.empty((0, 3)))
        with self.assertRaises(EmptyDataset):
            Dataset.from_samples([])

    def test_mismatched_lengths_raise_dimension_mismatch(self):
        """Тест несогласованных размерностей"""
        with self.assertRaises(DimensionMismatch):
            Dataset(raw=np.zeros((3, 6)), gravity=np.zeros((2, 3)))
        with self.assertRaises(DimensionMismatch):
            Dataset(raw=np.zeros((3, 5)), gravity=np.zeros((3, 3)))

    def test_samples_round_trip(self):
        """Тест представления набора парами отсчетов"""
        raw = np.arange(18.0).reshape(3, 6)
        gravity = np.tile([0.0, 0.0, -9.81], (3, 1))
        dataset = Dataset(raw=raw, gravity=gravity, label="a")
        restored = Dataset.from_samples(dataset.samples, label="a")
        self.assertEqual(len(restored), 3)
        np.testing.assert_array_equal(restored.raw, raw)
        np.testing.assert_array_equal(restored.gravity, gravity)


class GravityNormValidatorTest(SimpleTestCase):
    """Тесты проверки нормы гравитации"""

    def test_classify_bands(self):
        """Тест полосы допуска и двойной полосы"""
        validator = GravityNormValidator(gravity_norm=10.0, tolerance=0.05)
        gravity = np.array([[0, 0, 10.0], [0, 0, 10.7], [0, 0, 12.0]])
        in_band, usable = validator.classify(gravity)
        np.testing.assert_array_equal(in_band, [True, False, False])
        np.testing.assert_array_equal(usable, [True, True, False])

    def test_validate_strict_raises_data_error(self):
        """Тест жесткой проверки внутри оценщиков: ошибка данных с кодом 7"""
        validator = GravityNormValidator(gravity_norm=10.0, tolerance=0.05)
        validator.validate_strict(np.array([[0, 0, 10.5]]))
        with self.assertRaises(GravityOutOfBand) as cm:
            validator.validate_strict(np.array([[0, 0, 5.0]]))
        self.assertEqual(cm.exception.exit_code, 7)


class SavitzkyGolayTest(SimpleTestCase):
    """Тесты фильтра Савицкого-Голея"""

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_constant_signal_unchanged(self):
        """Тест сохранения постоянного сигнала"""
        signal = np.full(50, 3.5)
        np.testing.assert_allclose(savitzky_golay(signal, 11, 3), signal, atol=1e-12)

    def test_cubic_reproduced(self):
        """Тест точного воспроизведения кубики фильтром 3-го порядка"""
        t = np.linspace(-1.0, 1.0, 400)
        signal = 2 * t**3 - t**2 + 0.5 * t - 1
        filtered = savitzky_golay(signal, 301, 3)
        np.testing.assert_allclose(filtered[150:-150], signal[150:-150], atol=1e-9)

    def test_matches_per_window_polynomial_fit(self):
        """Тест совпадения с прямой подгонкой полинома в каждом окне"""
        window, order, half = 31, 3, 15
        signal = self.rng.normal(size=200)
        filtered = savitzky_golay(signal, window, order)
        offsets = np.arange(-half, half + 1)
        for center in range(half, len(signal) - half):
            coefficients = np.polyfit(offsets, signal[center - half : center + half + 1], order)
            self.assertAlmostEqual(filtered[center], coefficients[-1], delta=1e-10)

    def test_linearity(self):
        """Тест линейности фильтра"""
        x, y = self.rng.normal(size=(2, 500))
        combined = savitzky_golay(2.0 * x - 3.0 * y, 51, 3)
        separate = 2.0 * savitzky_golay(x, 51, 3) - 3.0 * savitzky_golay(y, 51, 3)
        np.testing.assert_allclose(combined, separate, atol=1e-10)

    def test_noise_variance_reduced(self):
        """Тест подавления белого шума окном 301"""
        noise = self.rng.normal(size=10000)
        filtered = savitzky_golay(noise, 301, 3)
        self.assertGreaterEqual(noise.var() / filtered[150:-150].var(), 20)

    def test_filters_each_column(self):
        """Тест поканальной фильтрации массива (N, k)"""
        channels = self.rng.normal(size=(100, 3))
        filtered = savitzky_golay(channels, 11, 3)
        np.testing.assert_allclose(filtered[:, 1], savitzky_golay(channels[:, 1], 11, 3))

    def test_bad_window_raises_bad_window(self):
        """Тест недопустимого окна и порядка"""
        with self.assertRaises(BadWindow):
            savitzky_golay(np.zeros(50), 10, 3)
        with self.assertRaises(BadWindow):
            savitzky_golay(np.zeros(50), 5, 5)

    def test_short_signal_raises_signal_too_short(self):
        """Тест сигнала короче окна"""
        with self.assertRaises(SignalTooShort):
            savitzky_golay(np.zeros(100), 301, 3)


class IngestTest(SimpleTestCase):
    """Тесты загрузки логов"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.directory = Path(self.tmp.name)
        self.truth = make_ground_truth(3)
        self.added = AddedMassSpec(mass=0.51, com=[0.1, 0.02, 0.05])

    def make_dataset(self, frontback_steps=5, lateral_steps=10):
        sweep = SweepSpec(frontback_steps=frontback_steps, lateral_steps=lateral_steps)
        return generate_dataset(self.truth, self.added, sweep, label="ds")

    def write_rows(self, rows, name="log.csv"):
        path = self.directory / name
        lines = [",".join(LOG_HEADER)] + [",".join(str(x) for x in row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        LogIngestService.write_sidecar(sidecar_path(path), self.added, "manual")
        return path

    def static_rows(self, count, accel=(0.0, 0.0, 9.80665)):
        return [[0.01 * i, *np.arange(6.0), *accel] for i in range(count)]

    def test_decimation_keeps_every_kth_sample(self):
        """Тест прореживания: 1000 строк, шаг 10 -> 100 отсчетов"""
        dataset = self.make_dataset(frontback_steps=20, lateral_steps=50)
        path = LogIngestService.write_dataset(dataset, self.directory / "ds.csv")
        config = IngestConfig.from_settings(smooth=False, decimation=10)

        loaded = LogIngestService.load_dataset(path, config=config)

        self.assertEqual(len(loaded), 100)
        np.testing.assert_array_equal(loaded.raw, dataset.raw[::10])
        np.testing.assert_allclose(loaded.gravity, dataset.gravity[::10], atol=1e-15)

    def test_round_trip_reads_sidecar(self):
        """Тест записи и чтения набора с файлом метаданных"""
        dataset = self.make_dataset()
        path = LogIngestService.write_dataset(dataset, self.directory / "ds.csv")

        config = IngestConfig.from_settings(smooth=False)
        loaded = LogIngestService.load_dataset(path, config=config)

        self.assertEqual(loaded.label, "ds")
        self.assertEqual(loaded.added_mass.mass, 0.51)
        np.testing.assert_array_equal(loaded.added_mass.com, self.added.com)
        np.testing.assert_array_equal(loaded.raw, dataset.raw)

    def test_filtered_round_trip_interior_samples(self):
        """Тест фильтрации удержанных поз: центры блоков не искажаются"""
        dataset = self.make_dataset()
        hold = 7
        path = LogIngestService.write_dataset(dataset, self.directory / "ds.csv", hold=hold)
        config = IngestConfig.from_settings(sg_window=5, sg_order=3, norm_tolerance=0.45)

        loaded = LogIngestService.load_dataset(path, config=config)

        self.assertEqual(len(loaded), len(dataset) * hold)
        centers = np.arange(len(dataset)) * hold + hold // 2
        np.testing.assert_allclose(loaded.raw[centers], dataset.raw, atol=1e-9)
        np.testing.assert_allclose(loaded.gravity[centers], dataset.gravity, atol=1e-9)

    def test_accel_sign_convention(self):
        """Тест знака акселерометра: удельная сила инвертируется"""
        path = self.write_rows(self.static_rows(10))
        specific = LogIngestService.load_dataset(
            path, config=IngestConfig.from_settings(smooth=False)
        )
        direct = LogIngestService.load_dataset(
            path,
            config=IngestConfig.from_settings(smooth=False, accel_is_specific_force=False),
        )
        np.testing.assert_array_equal(specific.gravity[0], [0.0, 0.0, -9.80665])
        np.testing.assert_array_equal(direct.gravity[0], [0.0, 0.0, 9.80665])

    def test_load_is_deterministic(self):
        """Тест повторной загрузки одного файла"""
        dataset = self.make_dataset()
        path = LogIngestService.write_dataset(dataset, self.directory / "ds.csv", hold=3)
        config = IngestConfig.from_settings(sg_window=5, norm_tolerance=0.45)
        first = LogIngestService.load_dataset(path, config=config)
        second = LogIngestService.load_dataset(path, config=config)
        np.testing.assert_array_equal(first.raw, second.raw)

    def test_malformed_row_raises_parse_error_with_line(self):
        """Тест ошибки разбора с номером строки"""
        rows = self.static_rows(10)
        rows[3][4] = "abc"
        path = self.write_rows(rows)
        with self.assertRaises(ParseError) as cm:
            LogIngestService.load_dataset(path, config=IngestConfig.from_settings(smooth=False))
        self.assertEqual(cm.exception.line, 5)
        self.assertIn("строка 5", str(cm.exception))

    def test_missing_column_raises_parse_error(self):
        """Тест строки с неполным набором столбцов"""
        path = self.write_rows(self.static_rows(5) + [[1.0, 2.0, 3.0]])
        with self.assertRaises(ParseError) as cm:
            LogIngestService.read_records(path)
        self.assertEqual(cm.exception.line, 7)

    def test_bad_header_raises_parse_error(self):
        """Тест неверного заголовка"""
        path = self.directory / "bad.csv"
        path.write_text("time,a,b\n1,2,3\n", encoding="utf-8")
        with self.assertRaises(ParseError) as cm:
            LogIngestService.read_records(path)
        self.assertEqual(cm.exception.line, 1)

    def test_non_increasing_timestamps_raise_parse_error(self):
        """Тест строгого возрастания меток времени"""
        rows = self.static_rows(5)
        rows[2][0] = rows[1][0]
        with self.assertRaises(ParseError):
            LogIngestService.read_records(self.write_rows(rows))

    def test_out_of_band_samples_dropped_with_warning(self):
        """Тест отбрасывания отсчетов с нормой g вне двойной полосы"""
        rows = self.static_rows(10)
        rows[4][7:10] = [0.0, 0.0, 15.0]
        path = self.write_rows(rows)
        with self.assertLogs("sensors.services", level="WARNING"):
            loaded = LogIngestService.load_dataset(
                path, config=IngestConfig.from_settings(smooth=False)
            )
        self.assertEqual(len(loaded), 9)

    def test_all_samples_dropped_raises_no_valid_samples(self):
        """Тест набора без пригодных отсчетов"""
        path = self.write_rows(self.static_rows(10, accel=(0.0, 0.0, 1.0)))
        with self.assertRaises(NoValidSamples):
            LogIngestService.load_dataset(path, config=IngestConfig.from_settings(smooth=False))

    def test_explicit_added_mass_overrides_sidecar(self):
        """Тест явной добавочной массы без файла метаданных"""
        path = self.write_rows(self.static_rows(10))
        sidecar_path(path).unlink()
        added = AddedMassSpec(mass=1.0, com=[0.0, 0.0, 0.1])
        loaded = LogIngestService.load_dataset(
            path, added=added, config=IngestConfig.from_settings(smooth=False)
        )
        self.assertEqual(loaded.added_mass.mass, 1.0)
        self.assertEqual(loaded.label, "log")

    def test_invalid_config_raises_validation_error(self):
        """Тест проверки параметров предобработки"""
        with self.assertRaises(ValidationError):
            IngestConfig.from_settings(sg_window=4)
        with self.assertRaises(ValidationError):
            IngestConfig.from_settings(decimation=0)
        with self.assertRaises(ValidationError):
            IngestConfig.from_settings(sg_window=5, sg_order=5)
