from pathlib import Path
import logging.config
import os


BASE_DIR = Path(__file__).resolve().parent.parent

# Runtime
DEBUG = os.environ.get("HPRNN_DEBUG", "False").lower() in {"1", "true", "yes", "on"}
LOG_LEVEL = "DEBUG" if DEBUG else os.environ.get("HPRNN_LOG_LEVEL", "INFO").upper()


# Paths
OUTPUT_DIR = Path(os.environ.get("HPRNN_OUTPUT_DIR", "runs"))
EXPERIMENTS_DIR = Path(os.environ.get("HPRNN_EXPERIMENTS_DIR", BASE_DIR / "experiments"))
CATALOG_PATH = EXPERIMENTS_DIR / "catalog.json"


# Numerics
FLOAT_DTYPE = "<f8"


# Logging
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "console": {"format": "[%(name)s] %(levelname)s %(message)s"},
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "console",
            "stream": "ext://sys.stderr",
        },
    },
    "loggers": {
        "hprnn": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
    },
}


def configure_logging(level: str | None = None) -> None:
    config = dict(LOGGING)
    if level:
        config["loggers"] = {"hprnn": {**LOGGING["loggers"]["hprnn"], "level": level.upper()}}
    logging.config.dictConfig(config)
