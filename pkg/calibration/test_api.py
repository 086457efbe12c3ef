import numpy as np
from django.urls import reverse
from rest_framework import status
from rest_framework.test import APISimpleTestCase

from synthetic.services import standard_scenario


def dataset_payload(dataset):
    return {
        "label": dataset.label,
        "raw": dataset.raw.tolist(),
        "gravity": dataset.gravity.tolist(),
        "added_mass": {
            "mass": dataset.added_mass.mass,
            "com": dataset.added_mass.com.tolist(),
        },
    }


class CalibrationAPITest(APISimpleTestCase):
    """Тесты API калибровки"""

    def setUp(self):
        self.truth, calibration, validation = standard_scenario(5)
        self.calibration = [dataset_payload(d) for d in calibration]
        self.validation = [dataset_payload(d) for d in validation]

    def test_offset(self):
        """Тест оценки смещения по наборам из запроса"""
        url = reverse("calibration:calibration-offset")
        response = self.client.post(
            url, {"datasets": self.calibration, "sensor": "right"}, format="json"
        )

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["kind"], "offset")
        self.assertEqual(response.data["sensor"], "right")
        np.testing.assert_allclose(
            response.data["o_hat"], self.truth.model.o, rtol=1e-8, atol=1e-8
        )

    def test_calibrate_and_validate(self):
        """Тест калибровки и проверки через API"""
        response = self.client.post(
            reverse("calibration:calibration-calibrate"),
            {"datasets": self.calibration},
            format="json",
        )
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["offset_source"], "estimated")
        np.testing.assert_allclose(
            response.data["C_hat"], self.truth.model.C, rtol=1e-6, atol=1e-8
        )

        response = self.client.post(
            reverse("calibration:calibration-validate"),
            {
                "datasets": self.validation,
                "calibration": response.data,
                "baseline": "dataset_7",
            },
            format="json",
        )
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["baseline_label"], "dataset_7")
        self.assertEqual(len(response.data["rows"]), 4)

    def test_calibrate_with_given_offset(self):
        """Тест калибровки с известным смещением"""
        response = self.client.post(
            reverse("calibration:calibration-calibrate"),
            {"datasets": self.calibration, "offset": self.truth.model.o.tolist()},
            format="json",
        )
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["offset_source"], "flag")

    def test_not_identifiable_returns_422(self):
        """Тест неидентифицируемой системы: 422 с кодом выхода"""
        response = self.client.post(
            reverse("calibration:calibration-calibrate"),
            {"datasets": self.calibration[:2]},
            format="json",
        )
        self.assertEqual(response.status_code, status.HTTP_422_UNPROCESSABLE_ENTITY)
        self.assertEqual(response.data["exit_code"], 4)

    def test_mismatched_rows_return_400(self):
        """Тест набора с разным числом строк raw и gravity"""
        broken = dict(self.calibration[0], gravity=self.calibration[0]["gravity"][:-1])
        response = self.client.post(
            reverse("calibration:calibration-offset"),
            {"datasets": [broken]},
            format="json",
        )
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    def test_empty_datasets_return_400(self):
        """Тест запроса без наборов"""
        response = self.client.post(
            reverse("calibration:calibration-offset"), {"datasets": []}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    def test_unknown_baseline_returns_400(self):
        """Тест несуществующего базового набора"""
        calibration = {
            "C_hat": self.truth.model.C.tolist(),
            "offset": self.truth.model.o.tolist(),
        }
        response = self.client.post(
            reverse("calibration:calibration-validate"),
            {"datasets": self.validation, "calibration": calibration, "baseline": "nope"},
            format="json",
        )
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    def test_gravity_outside_band_returns_data_error(self):
        """Тест нормы гравитации вне двойной полосы: 422 с кодом ошибки данных"""
        doubled = [
            dict(item, gravity=(2 * np.array(item["gravity"])).tolist())
            for item in self.calibration
        ]
        response = self.client.post(
            reverse("calibration:calibration-offset"), {"datasets": doubled}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_422_UNPROCESSABLE_ENTITY)
        self.assertEqual(response.data["exit_code"], 7)

    def test_calibrate_with_instrumental_solver(self):
        """Тест выбора решателя в запросе"""
        url = reverse("calibration:calibration-calibrate")
        response = self.client.post(
            url, {"datasets": self.calibration, "solver": "iv"}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["solver"], "iv")

        response = self.client.post(
            url, {"datasets": self.calibration, "solver": "tls"}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
