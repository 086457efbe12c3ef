from rest_framework import serializers
from django.conf import settings
from django.core.exceptions import ValidationError

from calibration.identification import SOLVERS
from sensors.domain import CalibrationModel, InertialParams
from sensors.serializers import (
    AddedMassSerializer,
    DatasetSerializer,
    matrix_field,
    vector_field,
)


SCHEMA_VERSION = "1.0"


class RunConfigSerializer(serializers.Serializer):
    """
    Параметры запуска команды: объединение файла --config и флагов.
    Все поля необязательны; отсутствующие берутся из settings.
    """

    # предобработка логов
    sg_window = serializers.IntegerField(min_value=5, required=False)
    sg_order = serializers.IntegerField(min_value=0, required=False)
    decimation = serializers.IntegerField(min_value=1, required=False)
    accel_is_specific_force = serializers.BooleanField(required=False)
    gravity_norm = serializers.FloatField(min_value=0.0, required=False)
    norm_tolerance = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    smooth = serializers.BooleanField(required=False)

    # решатели
    noisy = serializers.BooleanField(required=False)
    pooled = serializers.BooleanField(required=False)
    force = serializers.BooleanField(required=False)
    jobs = serializers.IntegerField(min_value=1, required=False)
    span_threshold = serializers.FloatField(min_value=0.0, required=False)
    offset_condition_max = serializers.FloatField(min_value=1.0, required=False)
    condition_max = serializers.FloatField(min_value=1.0, required=False)
    rank_tol = serializers.FloatField(min_value=0.0, required=False)
    mass_floor = serializers.FloatField(min_value=0.0, required=False)
    solver = serializers.ChoiceField(choices=SOLVERS, required=False)

    # синтетический стенд
    seed = serializers.IntegerField(min_value=0, required=False)
    noise = serializers.FloatField(min_value=0.0, required=False)
    conditioning = serializers.FloatField(min_value=1.0, required=False)
    frontback_range = serializers.FloatField(min_value=0.0, required=False)
    lateral_range = serializers.FloatField(min_value=0.0, required=False)
    frontback_steps = serializers.IntegerField(min_value=2, required=False)
    lateral_steps = serializers.IntegerField(min_value=2, required=False)
    random_sweep = serializers.BooleanField(required=False)
    hold = serializers.IntegerField(min_value=1, required=False)

    sensor = serializers.CharField(required=False, allow_blank=True)
    baseline = serializers.CharField(required=False, allow_blank=True)

    def validate(self, data):
        unknown = sorted(set(self.initial_data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError(
                f"Неизвестные параметры: {', '.join(unknown)}."
            )
        window = data.get("sg_window", settings.FTCAL_SG_WINDOW)
        if window % 2 == 0:
            raise serializers.ValidationError("sg_window должно быть нечетным.")
        if data.get("sg_order", settings.FTCAL_SG_ORDER) >= window:
            raise serializers.ValidationError("sg_order должен быть меньше sg_window.")
        if data.get("gravity_norm") == 0:
            raise serializers.ValidationError("gravity_norm должна быть положительной.")
        return data


class CalibrationInputSerializer(serializers.Serializer):
    """
    Калибровка (C, o) и, если есть, оценка тела; принимает отчет calibrate
    или файл заводской калибровки с теми же ключами
    """

    C_hat = matrix_field(6, 6)
    offset = vector_field(6)
    m_hat = serializers.FloatField(required=False, allow_null=True)
    mc_hat = vector_field(3, required=False, allow_null=True)

    def validate(self, data):
        try:
            CalibrationModel(C=data["C_hat"], o=data["offset"])
        except ValidationError as e:
            raise serializers.ValidationError(e.messages) from e
        return data

    def create(self, validated_data):
        return CalibrationModel(C=validated_data["C_hat"], o=validated_data["offset"])

    @staticmethod
    def body(validated_data, mass_floor=None):
        """Оценка тела из отчета; None, если масса не оценена или ниже порога"""
        mass_floor = settings.FTCAL_MASS_FLOOR if mass_floor is None else mass_floor
        mass = validated_data.get("m_hat")
        first_moment = validated_data.get("mc_hat")
        if mass is None or first_moment is None or mass <= mass_floor:
            return None
        return InertialParams(mass=mass, com=[x / mass for x in first_moment])


class OffsetMemberSerializer(serializers.Serializer):
    label = serializers.CharField(allow_blank=True)
    o_hat = vector_field(6)
    lambda_o = vector_field(3)
    K_hat = matrix_field(3, 3)
    singular_values = vector_field(6)
    condition = serializers.FloatField()
    residual_rms = serializers.FloatField()


class OffsetReportSerializer(serializers.Serializer):
    schema_version = serializers.ChoiceField(choices=[SCHEMA_VERSION])
    kind = serializers.ChoiceField(choices=["offset"])
    sensor = serializers.CharField(allow_blank=True)
    pooled = serializers.BooleanField()
    o_hat = vector_field(6)
    lambda_o = vector_field(3, allow_null=True)
    singular_values = vector_field(6, allow_null=True)
    condition = serializers.FloatField()
    residual_rms = serializers.FloatField()
    per_dataset_spread = vector_field(6)
    members = OffsetMemberSerializer(many=True, allow_empty=False)


class DatasetSummarySerializer(serializers.Serializer):
    label = serializers.CharField(allow_blank=True)
    samples = serializers.IntegerField(min_value=1)
    added_mass = AddedMassSerializer()


class CalibrationReportSerializer(CalibrationInputSerializer):
    schema_version = serializers.ChoiceField(choices=[SCHEMA_VERSION])
    kind = serializers.ChoiceField(choices=["calibration"])
    sensor = serializers.CharField(allow_blank=True)
    offset_source = serializers.ChoiceField(choices=["flag", "report", "estimated"])
    com_hat = vector_field(3, allow_null=True)
    theta_rank = serializers.IntegerField(min_value=0, max_value=40)
    condition = serializers.FloatField()
    residual_rms = serializers.FloatField()
    ill_conditioned = serializers.BooleanField()
    solver = serializers.ChoiceField(choices=SOLVERS, required=False)
    datasets = DatasetSummarySerializer(many=True, allow_empty=False)


class OffsetRequestSerializer(serializers.Serializer):
    datasets = DatasetSerializer(many=True, allow_empty=False)
    pooled = serializers.BooleanField(default=False)
    noisy = serializers.BooleanField(default=False)
    sensor = serializers.CharField(default="", allow_blank=True)

    def datasets_from(self, validated_data):
        return [DatasetSerializer().create(item) for item in validated_data["datasets"]]


class CalibrateRequestSerializer(OffsetRequestSerializer):
    """
    Без offset смещение оценивается по тем же наборам
    """

    offset = vector_field(6, required=False)
    force = serializers.BooleanField(default=False)
    solver = serializers.ChoiceField(choices=SOLVERS, required=False)
