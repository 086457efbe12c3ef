import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from sensors.domain import Dataset
from sensors.services import LogIngestService
from synthetic.services import generate_dataset, make_ground_truth


def run(*args):
    stdout, stderr = StringIO(), StringIO()
    call_command("ftcal", *[str(arg) for arg in args], stdout=stdout, stderr=stderr)
    return stdout.getvalue(), stderr.getvalue()


class FtcalCommandTest(SimpleTestCase):
    """Тесты команды ftcal на синтетических логах"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.directory = Path(tempfile.mkdtemp())
        cls.data = cls.directory / "data"
        run("synth", "--preset", "paper", "--seed", 7, "--out", cls.data)
        cls.truth = json.loads((cls.data / "ground_truth.json").read_text())

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.directory, ignore_errors=True)
        super().tearDownClass()

    def paths(self, *numbers):
        return [self.data / f"dataset_{number}.csv" for number in numbers]

    def assertExitCode(self, code, *args):
        with self.assertRaises(CommandError) as cm:
            run(*args)
        self.assertEqual(cm.exception.returncode, code)
        return cm.exception

    def test_synth_writes_logs_and_metadata(self):
        """Тест synth: восемь логов с метаданными и эталон"""
        names = sorted(path.name for path in self.data.iterdir())
        for number in range(1, 9):
            self.assertIn(f"dataset_{number}.csv", names)
            self.assertIn(f"dataset_{number}.meta", names)
        self.assertIn("ground_truth.json", names)
        self.assertEqual(len(names), 17)

    def test_synth_is_deterministic(self):
        """Тест synth: одно зерно дает побайтно одинаковые логи"""
        other = self.directory / "again"
        run("synth", "--seed", 7, "--out", other)
        for number in range(1, 9):
            name = f"dataset_{number}.csv"
            self.assertEqual(
                (self.data / name).read_bytes(), (other / name).read_bytes()
            )

    def test_full_pipeline(self):
        """Тест offset -> calibrate -> validate на логах без шума"""
        offset_path = self.directory / "offset.json"
        calibration_path = self.directory / "calibration.json"
        validation_path = self.directory / "validation.json"
        table_path = self.directory / "table.txt"
        points = self.directory / "points"

        run("offset", *self.paths(1, 2, 3, 4), "--no-smooth", "--out", offset_path)
        offset = json.loads(offset_path.read_text())
        self.assertEqual(offset["kind"], "offset")
        self.assertEqual(len(offset["members"]), 4)
        true_offset = np.array(self.truth["offset"])
        np.testing.assert_allclose(offset["o_hat"], true_offset, rtol=1e-8, atol=1e-8)

        run(
            "calibrate",
            *self.paths(1, 2, 3, 4),
            "--no-smooth",
            "--offset-report",
            offset_path,
            "--sensor",
            "right",
            "--out",
            calibration_path,
        )
        calibration = json.loads(calibration_path.read_text())
        self.assertEqual(calibration["offset_source"], "report")
        self.assertEqual(calibration["sensor"], "right")
        self.assertEqual(calibration["theta_rank"], 40)
        C = np.array(self.truth["C"])
        error = np.linalg.norm(np.array(calibration["C_hat"]) - C) / np.linalg.norm(C)
        self.assertLess(error, 1e-8)
        mass = self.truth["body_mass_kg"]
        self.assertAlmostEqual(calibration["m_hat"], mass, delta=1e-8 * mass)

        stdout, _ = run(
            "validate",
            *self.paths(5, 6, 7, 8),
            "--no-smooth",
            "--calibration",
            calibration_path,
            "--out",
            validation_path,
            "--table",
            table_path,
            "--points-dir",
            points,
        )
        validation = json.loads(validation_path.read_text())
        self.assertEqual(len(validation["rows"]), 4)
        for row in validation["rows"]:
            self.assertLess(row["sphericity"]["anisotropy"], 1e-8)
            self.assertAlmostEqual(
                row["inertial"]["mass_est"], row["added_mass"]["mass"], delta=1e-8
            )
        self.assertEqual(stdout, table_path.read_text())
        self.assertIn("dataset_8", stdout)
        self.assertEqual(len(list(points.glob("*.csv"))), 8)

    def test_calibrate_estimates_offset_without_report(self):
        """Тест calibrate без отчета о смещении: отчет в stdout"""
        stdout, _ = run("calibrate", *self.paths(1, 2, 3, 4), "--no-smooth")
        report = json.loads(stdout)
        self.assertEqual(report["offset_source"], "estimated")
        self.assertEqual(report["solver"], "ols")
        self.assertFalse(report["ill_conditioned"])

    def test_calibrate_with_offset_flag(self):
        """Тест calibrate со смещением из флага"""
        offset = ",".join(repr(value) for value in self.truth["offset"])
        stdout, _ = run(
            "calibrate", *self.paths(1, 2, 3, 4), "--no-smooth", f"--offset={offset}"
        )
        report = json.loads(stdout)
        self.assertEqual(report["offset_source"], "flag")
        np.testing.assert_allclose(report["offset"], self.truth["offset"])

    def test_calibrate_with_instrumental_solver(self):
        """Тест calibrate --solver iv: решатель записан в отчет"""
        stdout, _ = run("calibrate", *self.paths(1, 2, 3, 4), "--no-smooth", "--solver", "iv")
        report = json.loads(stdout)
        self.assertEqual(report["solver"], "iv")
        C = np.array(self.truth["C"])
        error = np.linalg.norm(np.array(report["C_hat"]) - C) / np.linalg.norm(C)
        self.assertLess(error, 1e-8)

    def test_config_file(self):
        """Тест параметров из файла --config"""
        config = self.directory / "run.conf"
        config.write_text("# логи без сглаживания\nsmooth = false\nsensor = left\n")
        stdout, _ = run("offset", *self.paths(1), "--config", config)
        self.assertEqual(json.loads(stdout)["sensor"], "left")

    def test_two_datasets_exit_not_identifiable(self):
        """Тест кода выхода 4: два набора"""
        error = self.assertExitCode(4, "calibrate", *self.paths(1, 2), "--no-smooth")
        self.assertIn("N_D >= 3", str(error))

    def test_identical_added_masses_exit_not_identifiable(self):
        """Тест кода выхода 4: одинаковые добавочные массы"""
        self.assertExitCode(4, "calibrate", *self.paths(2, 2, 2), "--no-smooth")

    def test_single_orientation_exit_degenerate_span(self):
        """Тест кода выхода 5: одна ориентация"""
        first = generate_dataset(make_ground_truth(0))
        flat = Dataset(
            raw=np.tile(first.raw[0], (30, 1)),
            gravity=np.tile(first.gravity[0], (30, 1)),
            label="flat",
        )
        path = LogIngestService.write_dataset(flat, self.directory / "flat.csv")
        self.assertExitCode(5, "offset", path, "--no-smooth")

    def test_ill_conditioned_exit_and_force(self):
        """Тест кода выхода 6 и флага --force"""
        args = ("calibrate", *self.paths(1, 2, 3, 4), "--no-smooth", "--condition-max", 1)
        self.assertExitCode(6, *args)
        stdout, stderr = run(*args, "--force")
        self.assertTrue(json.loads(stdout)["ill_conditioned"])
        self.assertIn("cond", stderr)

    def test_validate_requires_calibration(self):
        """Тест кода выхода 2: validate без --calibration"""
        error = self.assertExitCode(2, "validate", *self.paths(5), "--no-smooth")
        self.assertIn("--calibration", str(error))

    def test_missing_input_file(self):
        """Тест кода выхода 2: файл не найден"""
        self.assertExitCode(2, "offset", self.directory / "missing.csv")

    def test_invalid_config_value(self):
        """Тест кода выхода 2: четное окно фильтра"""
        self.assertExitCode(2, "offset", *self.paths(1), "--sg-window", 4)

    def test_malformed_calibration_report(self):
        """Тест кода выхода 7: поврежденный JSON калибровки"""
        broken = self.directory / "broken.json"
        broken.write_text('{"C_hat": [\n')
        self.assertExitCode(
            7, "validate", *self.paths(5), "--no-smooth", "--calibration", broken
        )
