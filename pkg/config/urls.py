from django.urls import path, include

urlpatterns = [
    path("api/calibration/", include("calibration.urls")),
]
