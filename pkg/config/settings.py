import os
from pathlib import Path
from dotenv import load_dotenv


load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.getenv("SECRET_KEY", "ftcal-insecure-local-key")

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.getenv("DEBUG", "False").lower() == "true"

ALLOWED_HOSTS = os.getenv("ALLOWED_HOSTS", "localhost,127.0.0.1").split(",")

# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "sensors",
    "synthetic",
    "calibration",
    "validation",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.middleware.common.CommonMiddleware",
]

ROOT_URLCONF = "config.urls"

WSGI_APPLICATION = "config.wsgi.application"


# Калибровка работает без базы данных: все данные приходят из файлов или запроса
DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

REST_FRAMEWORK = {
    "DEFAULT_AUTHENTICATION_CLASSES": [],
    "DEFAULT_PERMISSION_CLASSES": [
        "rest_framework.permissions.AllowAny",
    ],
    "DEFAULT_RENDERER_CLASSES": [
        "rest_framework.renderers.JSONRenderer",
    ],
    "UNAUTHENTICATED_USER": None,
}


def _env_bool(name, default):
    return os.getenv(name, str(default)).lower() == "true"


# Физические константы и допуски
FTCAL_GRAVITY_NORM = float(os.getenv("FTCAL_GRAVITY_NORM", "9.80665"))
FTCAL_GRAVITY_TOLERANCE = float(os.getenv("FTCAL_GRAVITY_TOLERANCE", "0.05"))
FTCAL_RCOND_FLOOR = float(os.getenv("FTCAL_RCOND_FLOOR", "1e-12"))

# Подпространство и оценка смещения
FTCAL_SPAN_THRESHOLD = float(os.getenv("FTCAL_SPAN_THRESHOLD", "1e-6"))
FTCAL_NOISY_SPAN_THRESHOLD = float(os.getenv("FTCAL_NOISY_SPAN_THRESHOLD", "1e-3"))
FTCAL_OFFSET_MIN_SAMPLES = int(os.getenv("FTCAL_OFFSET_MIN_SAMPLES", "4"))
FTCAL_OFFSET_RECOMMENDED_SAMPLES = int(
    os.getenv("FTCAL_OFFSET_RECOMMENDED_SAMPLES", "12")
)
FTCAL_OFFSET_CONDITION_MAX = float(os.getenv("FTCAL_OFFSET_CONDITION_MAX", "1e8"))

# Оценка калибровочной матрицы
FTCAL_THETA_RANK_TOL = float(os.getenv("FTCAL_THETA_RANK_TOL", "1e-10"))
FTCAL_THETA_CONDITION_MAX = float(os.getenv("FTCAL_THETA_CONDITION_MAX", "1e10"))
FTCAL_EQUILIBRATE = _env_bool("FTCAL_EQUILIBRATE", True)
FTCAL_MASS_FLOOR = float(os.getenv("FTCAL_MASS_FLOOR", "1e-6"))
FTCAL_DISTINCT_MASS_TOL = float(os.getenv("FTCAL_DISTINCT_MASS_TOL", "1e-9"))
FTCAL_DISTINCT_COM_TOL = float(os.getenv("FTCAL_DISTINCT_COM_TOL", "1e-9"))
# ols - исходная система по отсчетам, iv - инструментальные переменные (гравитация)
FTCAL_SOLVER = os.getenv("FTCAL_SOLVER", "ols")

# Предобработка логов (фильтр Савицкого-Голея 3-го порядка, окно 301 отсчет)
FTCAL_SG_WINDOW = int(os.getenv("FTCAL_SG_WINDOW", "301"))
FTCAL_SG_ORDER = int(os.getenv("FTCAL_SG_ORDER", "3"))
FTCAL_DECIMATION = int(os.getenv("FTCAL_DECIMATION", "1"))
FTCAL_SMOOTH = _env_bool("FTCAL_SMOOTH", True)
FTCAL_ACCEL_IS_SPECIFIC_FORCE = _env_bool("FTCAL_ACCEL_IS_SPECIFIC_FORCE", True)
FTCAL_SAMPLE_RATE_HZ = float(os.getenv("FTCAL_SAMPLE_RATE_HZ", "100"))

FTCAL_JOBS = int(os.getenv("FTCAL_JOBS", "1"))

FTCAL_LOG_LEVEL = os.getenv("FTCAL_LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        app: {
            "handlers": ["console"],
            "level": FTCAL_LOG_LEVEL,
            "propagate": False,
        }
        for app in ("sensors", "synthetic", "calibration", "validation")
    },
}
