"""
Django settings for kgtransfer_backend project.

The project hosts a single app, ``kg_transfer``, driven entirely through
management commands (``manage.py train_teacher``, ``train_target``, ``eval``,
``export``, ``synth``, ``report``).

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; nothing is signed or served.
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-kg-transfer-local-only')

DEBUG = os.getenv('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'rest_framework',
    'kg_transfer',
]

# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / os.getenv('KG_TRANSFER_DB', 'db.sqlite3'),
    }
}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging
LOG_LEVEL = os.getenv('KG_TRANSFER_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'standard',
        },
    },
    'loggers': {
        'kg_transfer': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

# Training and evaluation settings
ATRANSN_THREADS = max(1, int(os.getenv('ATRANSN_THREADS', 1)))
KG_TRANSFER_RUNS_DIR = BASE_DIR / os.getenv('KG_TRANSFER_RUNS_DIR', 'runs')
KG_TRANSFER_FLOAT_DIGITS = min(17, max(1, int(os.getenv('KG_TRANSFER_FLOAT_DIGITS', 17))))
