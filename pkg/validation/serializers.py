from rest_framework import serializers

from calibration.serializers import SCHEMA_VERSION, CalibrationInputSerializer
from sensors.serializers import (
    AddedMassSerializer,
    DatasetSerializer,
    matrix_field,
    vector_field,
)


class SphericitySerializer(serializers.Serializer):
    semiaxes = vector_field(3)
    anisotropy = serializers.FloatField(min_value=0.0)
    mean_force_norm = serializers.FloatField(min_value=0.0)


class EllipsoidSerializer(serializers.Serializer):
    center = vector_field(3)
    semiaxes = vector_field(3)
    axes = matrix_field(3, 3)
    rms_residual = serializers.FloatField(min_value=0.0)


class InertialRecoverySerializer(serializers.Serializer):
    mass_est = serializers.FloatField()
    com_est = vector_field(3, allow_null=True)
    mass_truth = serializers.FloatField(allow_null=True)
    com_truth = vector_field(3, allow_null=True)
    total_mass = serializers.FloatField()
    total_first_moment = vector_field(3)
    relative_to_baseline = serializers.BooleanField()


class ValidationRowSerializer(serializers.Serializer):
    label = serializers.CharField(allow_blank=True)
    added_mass = AddedMassSerializer()
    sphericity = SphericitySerializer()
    projected_ellipsoid = EllipsoidSerializer()
    projected_offset_distance = serializers.FloatField(min_value=0.0)
    inertial = InertialRecoverySerializer()
    reference_sphericity = SphericitySerializer(allow_null=True)
    reference_inertial = InertialRecoverySerializer(allow_null=True)


class BodySerializer(serializers.Serializer):
    mass = serializers.FloatField(min_value=0.0)
    com = vector_field(3)


class ValidationReportSerializer(serializers.Serializer):
    schema_version = serializers.ChoiceField(choices=[SCHEMA_VERSION])
    kind = serializers.ChoiceField(choices=["validation"])
    sensor = serializers.CharField(allow_blank=True)
    has_reference = serializers.BooleanField()
    baseline_label = serializers.CharField(allow_null=True, allow_blank=True)
    body = BodySerializer(allow_null=True)
    rows = ValidationRowSerializer(many=True, allow_empty=False)


class ValidateRequestSerializer(serializers.Serializer):
    datasets = DatasetSerializer(many=True, allow_empty=False)
    calibration = CalibrationInputSerializer()
    reference = CalibrationInputSerializer(required=False)
    baseline = serializers.CharField(required=False, allow_blank=True)
    sensor = serializers.CharField(default="", allow_blank=True)

    def datasets_from(self, validated_data):
        return [DatasetSerializer().create(item) for item in validated_data["datasets"]]
