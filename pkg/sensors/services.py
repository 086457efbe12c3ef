import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from .domain import AddedMassSpec, Dataset
from .exceptions import NoValidSamples, ParseError
from .filters import savitzky_golay
from .validators import GravityNormValidator


logger = logging.getLogger(__name__)

LOG_HEADER = ["t", "r1", "r2", "r3", "r4", "r5", "r6", "ax", "ay", "az"]
SIDECAR_SUFFIX = ".meta"


@dataclass(frozen=True)
class LogRecord:
    """Одна строка лога: метка времени, 6 сырых каналов, 3 канала акселерометра"""

    timestamp: float
    r: tuple
    a: tuple


@dataclass(frozen=True)
class IngestConfig:
    """
    Параметры предобработки логов.

    accel_is_specific_force: статичный акселерометр измеряет удельную силу -g,
    поэтому по умолчанию показания инвертируются. Ошибка знака отражает
    эллипсоид через центр и молча портит оценку K.
    """

    sg_window: int = 301
    sg_order: int = 3
    decimation: int = 1
    accel_is_specific_force: bool = True
    gravity_norm: float = 9.80665
    norm_tolerance: float = 0.05
    smooth: bool = True

    @classmethod
    def from_settings(cls, **overrides):
        config = cls(
            sg_window=settings.FTCAL_SG_WINDOW,
            sg_order=settings.FTCAL_SG_ORDER,
            decimation=settings.FTCAL_DECIMATION,
            accel_is_specific_force=settings.FTCAL_ACCEL_IS_SPECIFIC_FORCE,
            gravity_norm=settings.FTCAL_GRAVITY_NORM,
            norm_tolerance=settings.FTCAL_GRAVITY_TOLERANCE,
            smooth=settings.FTCAL_SMOOTH,
        )
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(config, **overrides).validated()

    def validated(self):
        if self.sg_window < 5 or self.sg_window % 2 == 0:
            raise ValidationError("sg_window должно быть нечетным и не меньше 5.")
        if not 0 <= self.sg_order < self.sg_window:
            raise ValidationError("sg_order должен быть меньше sg_window.")
        if self.decimation < 1:
            raise ValidationError("decimation должно быть не меньше 1.")
        if not self.gravity_norm > 0:
            raise ValidationError("gravity_norm должна быть положительной.")
        if not 0 < self.norm_tolerance < 1:
            raise ValidationError("norm_tolerance должна лежать в (0, 1).")
        return self


def sidecar_path(csv_path):
    return Path(csv_path).with_suffix(SIDECAR_SUFFIX)


class LogIngestService:
    """
    Чтение и запись логов датчика в формате CSV с файлом метаданных
    """

    @staticmethod
    def read_records(path):
        """
        Разбирает CSV-лог; при ошибке сообщает номер строки файла
        """
        records = []
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or [column.strip() for column in header] != LOG_HEADER:
                raise ParseError(
                    f"ожидался заголовок '{','.join(LOG_HEADER)}'", line=1
                )
            previous = None
            for row in reader:
                line = reader.line_num
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != len(LOG_HEADER):
                    raise ParseError(
                        f"ожидалось {len(LOG_HEADER)} столбцов, получено {len(row)}",
                        line=line,
                    )
                try:
                    values = [float(cell) for cell in row]
                except ValueError as e:
                    raise ParseError(f"нечисловое значение ({e})", line=line) from e
                if not np.all(np.isfinite(values)):
                    raise ParseError("нечисловое значение (nan/inf)", line=line)
                if previous is not None and values[0] <= previous:
                    raise ParseError(
                        "метки времени должны строго возрастать", line=line
                    )
                previous = values[0]
                records.append(
                    LogRecord(
                        timestamp=values[0],
                        r=tuple(values[1:7]),
                        a=tuple(values[7:10]),
                    )
                )
        if not records:
            raise NoValidSamples(f"Файл {path} не содержит ни одной строки данных.")
        return records

    @staticmethod
    def read_sidecar(path):
        """
        Читает файл метаданных key=value: mass_kg, com_m=x,y,z, label
        """
        values = {}
        with open(path, encoding="utf-8") as handle:
            for number, raw_line in enumerate(handle, start=1):
                line = raw_line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ParseError(f"{path}: ожидалась пара key=value", line=number)
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()

        try:
            mass = float(values.get("mass_kg", "0"))
            com = [float(x) for x in values.get("com_m", "0,0,0").split(",")]
            added = AddedMassSpec(mass=mass, com=com)
        except (ValueError, ValidationError) as e:
            raise ParseError(f"{path}: некорректная добавочная масса ({e})") from e
        return added, values.get("label", Path(path).stem), values

    @staticmethod
    def load_dataset(path, added=None, config=None, label=None):
        """
        Загрузка набора: разбор -> сглаживание каналов -> прореживание ->
        знак акселерометра -> проверка нормы g -> Dataset
        """
        config = config or IngestConfig.from_settings()
        path = Path(path)
        if added is None:
            added, sidecar_label, _ = LogIngestService.read_sidecar(sidecar_path(path))
            label = label or sidecar_label
        label = label or path.stem

        records = LogIngestService.read_records(path)
        channels = np.array([record.r + record.a for record in records])

        if config.smooth:
            channels = savitzky_golay(channels, config.sg_window, config.sg_order)
        channels = channels[:: config.decimation]

        raw = channels[:, :6]
        gravity = -channels[:, 6:] if config.accel_is_specific_force else channels[:, 6:]

        validator = GravityNormValidator(config.gravity_norm, config.norm_tolerance)
        in_band, usable = validator.classify(gravity)
        suspicious = int(np.count_nonzero(usable & ~in_band))
        dropped = int(np.count_nonzero(~usable))
        if suspicious:
            logger.warning(
                f"{label}: {suspicious} отсчетов с нормой g вне допуска "
                f"±{config.norm_tolerance:.0%}"
            )
        if dropped:
            logger.warning(
                f"{label}: отброшено {dropped} отсчетов с нормой g вне "
                f"±{2 * config.norm_tolerance:.0%}"
            )
        if not np.any(usable):
            raise NoValidSamples(
                f"{label}: после проверки нормы гравитации не осталось отсчетов."
            )

        logger.info(f"{label}: загружено {int(usable.sum())} отсчетов из {path}")
        return Dataset(
            raw=raw[usable], gravity=gravity[usable], added_mass=added, label=label
        )

    @staticmethod
    def write_sidecar(path, added, label, **extra):
        lines = [
            f"label={label}",
            f"mass_kg={added.mass!r}",
            "com_m=" + ",".join(repr(float(x)) for x in added.com),
        ]
        lines += [f"{key}={value}" for key, value in extra.items()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @staticmethod
    def write_dataset(
        dataset, csv_path, hold=1, rate_hz=None, accel_is_specific_force=None
    ):
        """
        Записывает набор в формате лога; каждая статическая поза повторяется
        hold раз с частотой rate_hz
        """
        rate_hz = settings.FTCAL_SAMPLE_RATE_HZ if rate_hz is None else rate_hz
        if accel_is_specific_force is None:
            accel_is_specific_force = settings.FTCAL_ACCEL_IS_SPECIFIC_FORCE
        accel = -dataset.gravity if accel_is_specific_force else dataset.gravity

        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(LOG_HEADER)
            index = 0
            for r, a in zip(dataset.raw, accel):
                for _ in range(hold):
                    row = [index / rate_hz, *r, *a]
                    writer.writerow([repr(float(value)) for value in row])
                    index += 1
        LogIngestService.write_sidecar(
            sidecar_path(csv_path), dataset.added_mass, dataset.label
        )
        return csv_path
