"""
Конвейер калибровки: конфигурация запуска, загрузка наборов, вызов
оценщиков и сборка JSON-отчетов. Используется командой ftcal и API.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from django.conf import settings
from rest_framework import serializers

from sensors.exceptions import ConfigError, MissingInput, ParseError
from sensors.services import IngestConfig, LogIngestService
from validation import services as validation_services
from validation.serializers import ValidationReportSerializer

from . import identification, offset
from .serializers import (
    SCHEMA_VERSION,
    CalibrationInputSerializer,
    CalibrationReportSerializer,
    OffsetReportSerializer,
    RunConfigSerializer,
)


logger = logging.getLogger(__name__)

INGEST_KEYS = (
    "sg_window",
    "sg_order",
    "decimation",
    "accel_is_specific_force",
    "gravity_norm",
    "norm_tolerance",
    "smooth",
)


class RunConfigService:
    """
    Сборка параметров запуска: settings < файл --config < флаги
    """

    @staticmethod
    def read_config_file(path):
        """
        Файл построчно key=value; пустые строки и строки с # пропускаются
        """
        path = Path(path)
        if not path.is_file():
            raise MissingInput(f"Файл конфигурации {path} не найден.")
        values = {}
        for number, raw_line in enumerate(
            path.read_text(encoding="utf-8").splitlines(), start=1
        ):
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}, строка {number}: ожидалась пара key=value.")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
        return values

    @staticmethod
    def resolve(flags, config_path=None):
        """
        Объединяет файл и флаги (флаги со значением None не переопределяют
        файл) и проверяет результат RunConfigSerializer
        """
        merged = RunConfigService.read_config_file(config_path) if config_path else {}
        merged.update({key: value for key, value in flags.items() if value is not None})

        serializer = RunConfigSerializer(data=merged)
        if not serializer.is_valid():
            raise ConfigError(f"Некорректная конфигурация: {serializer.errors}")
        return dict(serializer.validated_data)


class ReportService:
    """
    Сборка и запись отчетов; каждый отчет проверяется своим сериализатором
    """

    @staticmethod
    def validated(serializer_class, report):
        serializer = serializer_class(data=report)
        if not serializer.is_valid():
            raise serializers.ValidationError(serializer.errors)
        return report

    @staticmethod
    def offset_report(estimate, sensor="", pooled=False):
        single = not isinstance(estimate, offset.OffsetEnsemble)
        members = (estimate,) if single else estimate.members
        report = {
            "schema_version": SCHEMA_VERSION,
            "kind": "offset",
            "sensor": sensor,
            "pooled": pooled,
            "o_hat": estimate.o_hat.tolist(),
            "lambda_o": estimate.lambda_o.tolist() if single else None,
            "singular_values": (
                estimate.basis.singular_values.tolist() if single else None
            ),
            "condition": float(estimate.condition_number),
            "residual_rms": float(estimate.residual_rms),
            "per_dataset_spread": (
                np.zeros(6) if single else estimate.spread
            ).tolist(),
            "members": [
                {
                    "label": member.label,
                    "o_hat": member.o_hat.tolist(),
                    "lambda_o": member.lambda_o.tolist(),
                    "K_hat": member.K_hat.tolist(),
                    "singular_values": member.basis.singular_values.tolist(),
                    "condition": member.condition_number,
                    "residual_rms": member.residual_rms,
                }
                for member in members
            ],
        }
        return ReportService.validated(OffsetReportSerializer, report)

    @staticmethod
    def calibration_report(estimate, offset_vector, datasets, sensor="", source="estimated"):
        report = {
            "schema_version": SCHEMA_VERSION,
            "kind": "calibration",
            "sensor": sensor,
            "offset_source": source,
            "C_hat": estimate.C_hat.tolist(),
            "offset": [float(x) for x in offset_vector],
            "m_hat": estimate.mass,
            "mc_hat": estimate.first_moment.tolist(),
            "com_hat": None if estimate.com is None else estimate.com.tolist(),
            "theta_rank": estimate.theta_rank,
            "condition": estimate.theta_condition,
            "residual_rms": estimate.residual_rms,
            "ill_conditioned": estimate.ill_conditioned,
            "solver": estimate.solver,
            "datasets": [
                {
                    "label": dataset.label,
                    "samples": len(dataset),
                    "added_mass": {
                        "mass": dataset.added_mass.mass,
                        "com": dataset.added_mass.com.tolist(),
                    },
                }
                for dataset in datasets
            ],
        }
        return ReportService.validated(CalibrationReportSerializer, report)

    @staticmethod
    def validation_report(report):
        return ReportService.validated(
            ValidationReportSerializer, validation_services.report_to_dict(report)
        )

    @staticmethod
    def dumps(report):
        return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @staticmethod
    def write(report, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(ReportService.dumps(report), encoding="utf-8")
        logger.info(f"Отчет '{report['kind']}' записан в {path}")
        return path

    @staticmethod
    def read(path, serializer_class):
        """
        Читает JSON-отчет и проверяет его сериализатором
        """
        path = Path(path)
        if not path.is_file():
            raise MissingInput(f"Файл {path} не найден.")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: некорректный JSON ({e.msg})", line=e.lineno) from e
        serializer = serializer_class(data=data)
        if not serializer.is_valid():
            raise ParseError(f"{path}: отчет не соответствует схеме: {serializer.errors}")
        return serializer


class CalibrationPipelineService:
    """
    Шаги конвейера с общими параметрами запуска
    """

    def __init__(self, run_config=None):
        self.config = dict(run_config or {})
        self.ingest = IngestConfig.from_settings(
            **{key: self.config.get(key) for key in INGEST_KEYS}
        )
        self.jobs = self.config.get("jobs") or settings.FTCAL_JOBS
        self.sensor = self.config.get("sensor", "")

    def load_datasets(self, paths):
        """
        Параллельная загрузка логов (не больше jobs потоков); порядок сохраняется
        """
        paths = [Path(path) for path in paths]
        missing = [str(path) for path in paths if not path.is_file()]
        if missing:
            raise MissingInput(f"Файлы не найдены: {', '.join(missing)}.")

        def load(path):
            return LogIngestService.load_dataset(path, config=self.ingest)

        with ThreadPoolExecutor(max_workers=self.jobs) as executor:
            return list(executor.map(load, paths))

    def estimate_offset(self, datasets):
        return offset.estimate_offset(
            datasets,
            pooled=bool(self.config.get("pooled")),
            noisy=bool(self.config.get("noisy")),
            jobs=self.jobs,
            gravity_norm=self.ingest.gravity_norm,
            threshold=self.config.get("span_threshold"),
            condition_max=self.config.get("offset_condition_max"),
        )

    def offset_report(self, datasets):
        estimate = self.estimate_offset(datasets)
        return estimate, ReportService.offset_report(
            estimate, sensor=self.sensor, pooled=bool(self.config.get("pooled"))
        )

    def calibrate(self, datasets, offset_vector=None, source="flag"):
        """
        Без offset_vector смещение оценивается по тем же наборам
        """
        if offset_vector is None:
            offset_vector = self.estimate_offset(datasets).o_hat
            source = "estimated"
        estimate = identification.calibrate(
            datasets,
            offset_vector,
            strict=not self.config.get("force"),
            gravity_norm=self.ingest.gravity_norm,
            condition_max=self.config.get("condition_max"),
            mass_floor=self.config.get("mass_floor"),
            rank_tol=self.config.get("rank_tol"),
            solver=self.config.get("solver"),
        )
        report = ReportService.calibration_report(
            estimate, offset_vector, datasets, sensor=self.sensor, source=source
        )
        return estimate, report

    def validate(self, datasets, calibration, reference=None):
        """
        calibration и reference - проверенные данные CalibrationInputSerializer
        """
        model = CalibrationInputSerializer().create(calibration)
        reference_model = None
        if reference is not None:
            reference_model = CalibrationInputSerializer().create(reference)

        report = validation_services.validation_report(
            model.C,
            model.o,
            datasets,
            body=CalibrationInputSerializer.body(
                calibration, self.config.get("mass_floor")
            ),
            baseline_label=self.config.get("baseline") or None,
            reference=reference_model,
            sensor=self.sensor,
            jobs=self.jobs,
        )
        return report, ReportService.validation_report(report)
