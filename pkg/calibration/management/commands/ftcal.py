"""
Команда ftcal: синтетические данные, оценка смещения, калибровка, проверка.

    python manage.py ftcal synth --preset paper --seed 7 --out data/
    python manage.py ftcal offset data/dataset_*.csv --out offset.json
    python manage.py ftcal calibrate data/dataset_[1-4].csv --offset-report offset.json
    python manage.py ftcal validate data/dataset_[5-8].csv --calibration calibration.json

Коды выхода: 0 успех, 2 конфигурация и отсутствующие файлы, 3 ввод-вывод,
4 неидентифицируемая система, 5 вырожденное подпространство,
6 плохая обусловленность, 7 ошибки данных, 8 ошибки геометрии.
"""

import json
import logging
from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from calibration.identification import SOLVERS
from calibration.serializers import (
    CalibrationInputSerializer,
    OffsetReportSerializer,
)
from calibration.services import CalibrationPipelineService, ReportService, RunConfigService
from sensors.exceptions import EXIT_CONFIG_ERROR, EXIT_IO_ERROR, CalibrationToolError
from sensors.services import LogIngestService
from synthetic.services import SweepSpec, ground_truth_to_dict, standard_scenario
from validation.services import render_table, write_point_clouds


logger = logging.getLogger(__name__)

GROUND_TRUTH_FILE = "ground_truth.json"


def _offset_vector(value):
    parts = [part for part in value.split(",") if part.strip()]
    try:
        vector = [float(part) for part in parts]
    except ValueError as e:
        raise ValueError(f"некорректное смещение '{value}'") from e
    if len(vector) != 6:
        raise ValueError("смещение должно содержать 6 чисел через запятую")
    return vector


class Command(BaseCommand):
    help = "Калибровка шестиосевого датчика силы-момента на месте установки"
    requires_system_checks = []

    _COMMON_FLAGS = (
        "sensor",
        "jobs",
        "gravity_norm",
        "sg_window",
        "sg_order",
        "decimation",
        "norm_tolerance",
        "smooth",
        "accel_is_specific_force",
    )
    _OFFSET_FLAGS = ("pooled", "noisy", "span_threshold", "offset_condition_max")

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest="subcommand", required=True)

        synth = subparsers.add_parser("synth", help="Сгенерировать синтетические логи")
        synth.add_argument("--preset", choices=["paper"], default="paper")
        synth.add_argument("--seed", type=int)
        synth.add_argument("--out", type=Path, required=True)
        synth.add_argument("--noise", type=float, help="Относительный уровень шума")
        synth.add_argument("--conditioning", type=float)
        synth.add_argument("--frontback-range", type=float)
        synth.add_argument("--lateral-range", type=float)
        synth.add_argument("--frontback-steps", type=int)
        synth.add_argument("--lateral-steps", type=int)
        synth.add_argument(
            "--random-sweep", action="store_const", const=True, default=None
        )
        synth.add_argument("--hold", type=int, help="Повторов каждой позы в логе")
        self._add_common(synth, ingest=False)

        offset = subparsers.add_parser("offset", help="Оценить смещение")
        offset.add_argument("datasets", nargs="+", type=Path)
        offset.add_argument("--out", type=Path)
        self._add_common(offset)
        self._add_offset_options(offset)

        calibrate = subparsers.add_parser("calibrate", help="Оценить C и параметры тела")
        calibrate.add_argument("datasets", nargs="+", type=Path)
        calibrate.add_argument("--out", type=Path)
        source = calibrate.add_mutually_exclusive_group()
        source.add_argument("--offset-report", type=Path)
        source.add_argument("--offset", help="Шесть чисел через запятую")
        calibrate.add_argument(
            "--force",
            action="store_const",
            const=True,
            default=None,
            help="Записать отчет при плохой обусловленности Θ",
        )
        calibrate.add_argument("--condition-max", type=float)
        calibrate.add_argument("--rank-tol", type=float)
        calibrate.add_argument("--mass-floor", type=float)
        calibrate.add_argument(
            "--solver",
            choices=SOLVERS,
            help="ols - наименьшие квадраты по отсчетам, iv - инструментальные переменные",
        )
        self._add_common(calibrate)
        self._add_offset_options(calibrate)

        validate = subparsers.add_parser("validate", help="Проверить калибровку")
        validate.add_argument("datasets", nargs="+", type=Path)
        validate.add_argument("--calibration", type=Path)
        validate.add_argument("--reference", type=Path, help="Калибровка для сравнения")
        validate.add_argument("--baseline", help="Метка набора без добавочной массы")
        validate.add_argument("--points-dir", type=Path)
        validate.add_argument("--table", type=Path, help="Записать текстовую таблицу")
        validate.add_argument("--out", type=Path)
        validate.add_argument("--mass-floor", type=float)
        self._add_common(validate)

    @staticmethod
    def _add_common(parser, ingest=True):
        parser.add_argument("--config", type=Path, help="Файл key=value")
        parser.add_argument("--sensor", help="Метка датчика в отчетах")
        parser.add_argument("--jobs", type=int)
        parser.add_argument("--gravity-norm", type=float)
        if not ingest:
            return
        parser.add_argument("--sg-window", type=int)
        parser.add_argument("--sg-order", type=int)
        parser.add_argument("--decimation", type=int)
        parser.add_argument("--norm-tolerance", type=float)
        parser.add_argument(
            "--no-smooth", dest="smooth", action="store_const", const=False, default=None
        )
        parser.add_argument(
            "--accel-is-gravity",
            dest="accel_is_specific_force",
            action="store_const",
            const=False,
            default=None,
            help="Акселерометр пишет g, а не удельную силу -g",
        )

    @staticmethod
    def _add_offset_options(parser):
        parser.add_argument("--pooled", action="store_const", const=True, default=None)
        parser.add_argument("--noisy", action="store_const", const=True, default=None)
        parser.add_argument("--span-threshold", type=float)
        parser.add_argument("--offset-condition-max", type=float)

    def handle(self, *args, **options):
        handler = getattr(self, f"handle_{options['subcommand']}")
        try:
            handler(options)
        except CalibrationToolError as e:
            logger.error(f"{options['subcommand']}: {e}")
            raise CommandError(str(e), returncode=e.exit_code) from e
        except ValidationError as e:
            raise CommandError(
                "; ".join(e.messages), returncode=EXIT_CONFIG_ERROR
            ) from e
        except serializers.ValidationError as e:
            raise CommandError(str(e.detail), returncode=EXIT_CONFIG_ERROR) from e
        except OSError as e:
            raise CommandError(f"Ошибка ввода-вывода: {e}", returncode=EXIT_IO_ERROR) from e

    def _pipeline(self, options, keys):
        flags = {key: options.get(key) for key in keys}
        config = RunConfigService.resolve(flags, options.get("config"))
        return config, CalibrationPipelineService(config)

    def _emit(self, report, path):
        if path is None:
            self.stdout.write(ReportService.dumps(report), ending="")
        else:
            ReportService.write(report, path)

    def handle_synth(self, options):
        config, _ = self._pipeline(
            options,
            (
                "sensor",
                "jobs",
                "gravity_norm",
                "seed",
                "noise",
                "conditioning",
                "frontback_range",
                "lateral_range",
                "frontback_steps",
                "lateral_steps",
                "random_sweep",
                "hold",
            ),
        )
        defaults = SweepSpec()
        seed = config.get("seed", 0)
        sweep = SweepSpec(
            frontback_range=config.get("frontback_range", defaults.frontback_range),
            lateral_range=config.get("lateral_range", defaults.lateral_range),
            frontback_steps=config.get("frontback_steps", defaults.frontback_steps),
            lateral_steps=config.get("lateral_steps", defaults.lateral_steps),
            seed=seed,
            random=config.get("random_sweep", False),
        )
        truth, calibration, validation = standard_scenario(
            seed,
            sweep=sweep,
            noise_level=config.get("noise", 0.0),
            conditioning=config.get("conditioning", 10.0),
            gravity_norm=config.get("gravity_norm"),
        )

        out = options["out"]
        out.mkdir(parents=True, exist_ok=True)
        for dataset in calibration + validation:
            LogIngestService.write_dataset(
                dataset, out / f"{dataset.label}.csv", hold=config.get("hold", 1)
            )
        (out / GROUND_TRUTH_FILE).write_text(
            json.dumps(ground_truth_to_dict(truth), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        self.stdout.write(
            self.style.SUCCESS(
                f"Записано {len(calibration) + len(validation)} наборов в {out}"
            )
        )

    def handle_offset(self, options):
        _, pipeline = self._pipeline(options, self._COMMON_FLAGS + self._OFFSET_FLAGS)
        datasets = pipeline.load_datasets(options["datasets"])
        _, report = pipeline.offset_report(datasets)
        self._emit(report, options.get("out"))

    def handle_calibrate(self, options):
        _, pipeline = self._pipeline(
            options,
            self._COMMON_FLAGS
            + self._OFFSET_FLAGS
            + ("force", "condition_max", "rank_tol", "mass_floor", "solver"),
        )
        offset_vector, source = None, "estimated"
        if options.get("offset_report"):
            serializer = ReportService.read(options["offset_report"], OffsetReportSerializer)
            offset_vector, source = serializer.validated_data["o_hat"], "report"
        elif options.get("offset"):
            try:
                offset_vector, source = _offset_vector(options["offset"]), "flag"
            except ValueError as e:
                raise CommandError(f"--offset: {e}", returncode=EXIT_CONFIG_ERROR) from e

        datasets = pipeline.load_datasets(options["datasets"])
        estimate, report = pipeline.calibrate(datasets, offset_vector, source=source)
        self._emit(report, options.get("out"))
        if estimate.ill_conditioned:
            self.stderr.write(
                f"Внимание: Θ плохо обусловлена (cond = {estimate.theta_condition:.3e})"
            )

    def handle_validate(self, options):
        if options.get("calibration") is None:
            raise CommandError(
                "Не указан файл калибровки: ftcal validate DATA... "
                "--calibration calibration.json",
                returncode=EXIT_CONFIG_ERROR,
            )
        _, pipeline = self._pipeline(
            options, self._COMMON_FLAGS + ("baseline", "mass_floor")
        )
        calibration = ReportService.read(options["calibration"], CalibrationInputSerializer)
        reference = None
        if options.get("reference"):
            reference = ReportService.read(
                options["reference"], CalibrationInputSerializer
            ).validated_data

        datasets = pipeline.load_datasets(options["datasets"])
        report, data = pipeline.validate(
            datasets, calibration.validated_data, reference=reference
        )
        self._emit(data, options.get("out"))

        table = render_table(data)
        if options.get("table"):
            options["table"].write_text(table, encoding="utf-8")
        if options.get("out") is not None:
            self.stdout.write(table, ending="")
        if options.get("points_dir"):
            written = write_point_clouds(report, options["points_dir"])
            logger.info(f"Записано {len(written)} файлов облаков точек")
