from django.core.exceptions import ValidationError
from rest_framework import status, viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from sensors.exceptions import CalibrationToolError
from validation.serializers import ValidateRequestSerializer

from .serializers import CalibrateRequestSerializer, OffsetRequestSerializer
from .services import CalibrationPipelineService


class CalibrationViewSet(viewsets.ViewSet):
    """
    ViewSet для расчетов калибровки без сохранения состояния.
    Наборы данных передаются в теле запроса, ответ - тот же JSON-отчет,
    что пишет команда ftcal.
    """

    def _run(self, serializer_class, request, step):
        serializer = serializer_class(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data
        try:
            datasets = serializer.datasets_from(data)
            return Response(step(data, datasets), status=status.HTTP_200_OK)
        except CalibrationToolError as e:
            return Response(
                {"detail": str(e), "exit_code": e.exit_code},
                status=status.HTTP_422_UNPROCESSABLE_ENTITY,
            )
        except ValidationError as e:
            return Response({"detail": e.messages}, status=status.HTTP_400_BAD_REQUEST)

    @action(detail=False, methods=["post"])
    def offset(self, request):
        """
        Оценка смещения
        URL: /api/calibration/offset/
        """

        def step(data, datasets):
            pipeline = CalibrationPipelineService(
                {key: data[key] for key in ("pooled", "noisy", "sensor")}
            )
            return pipeline.offset_report(datasets)[1]

        return self._run(OffsetRequestSerializer, request, step)

    @action(detail=False, methods=["post"])
    def calibrate(self, request):
        """
        Оценка калибровочной матрицы; без offset смещение оценивается по наборам
        URL: /api/calibration/calibrate/
        """

        def step(data, datasets):
            pipeline = CalibrationPipelineService(
                {
                    key: data.get(key)
                    for key in ("pooled", "noisy", "sensor", "force", "solver")
                }
            )
            offset = data.get("offset")
            return pipeline.calibrate(
                datasets, offset, source="flag" if offset else "estimated"
            )[1]

        return self._run(CalibrateRequestSerializer, request, step)

    @action(detail=False, methods=["post"])
    def validate(self, request):
        """
        Проверка калибровки на наборах данных
        URL: /api/calibration/validate/
        """

        def step(data, datasets):
            pipeline = CalibrationPipelineService(
                {"sensor": data["sensor"], "baseline": data.get("baseline")}
            )
            return pipeline.validate(
                datasets, data["calibration"], reference=data.get("reference")
            )[1]

        return self._run(ValidateRequestSerializer, request, step)
