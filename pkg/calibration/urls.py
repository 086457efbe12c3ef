from django.urls import path, include
from rest_framework.routers import DefaultRouter

from calibration.views import CalibrationViewSet


router = DefaultRouter()
router.register(r"", CalibrationViewSet, basename="calibration")

app_name = "calibration"

urlpatterns = [
    path("", include(router.urls)),
]
