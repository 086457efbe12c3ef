from rest_framework import serializers
from django.core.exceptions import ValidationError

from .domain import AddedMassSpec, Dataset
from .exceptions import DataError


def vector_field(size, **kwargs):
    return serializers.ListField(
        child=serializers.FloatField(), min_length=size, max_length=size, **kwargs
    )


def matrix_field(rows, cols, **kwargs):
    """Матрица как вложенные списки по строкам"""
    return serializers.ListField(
        child=vector_field(cols), min_length=rows, max_length=rows, **kwargs
    )


class AddedMassSerializer(serializers.Serializer):
    mass = serializers.FloatField(min_value=0.0)
    com = vector_field(3)


class DatasetSerializer(serializers.Serializer):
    """
    Набор данных в теле запроса: raw (N x 6) и gravity (N x 3) уже в системе
    датчика, знак акселерометра учтен
    """

    label = serializers.CharField(required=False, default="", allow_blank=True)
    raw = serializers.ListField(child=vector_field(6), min_length=1)
    gravity = serializers.ListField(child=vector_field(3), min_length=1)
    added_mass = AddedMassSerializer(required=False)

    def validate(self, data):
        if len(data["raw"]) != len(data["gravity"]):
            raise serializers.ValidationError(
                "Число строк raw и gravity должно совпадать."
            )
        return data

    def create(self, validated_data):
        added = validated_data.get("added_mass") or {"mass": 0.0, "com": [0.0] * 3}
        try:
            return Dataset(
                raw=validated_data["raw"],
                gravity=validated_data["gravity"],
                added_mass=AddedMassSpec(**added),
                label=validated_data["label"],
            )
        except (DataError, ValidationError) as e:
            raise serializers.ValidationError(str(e)) from e
