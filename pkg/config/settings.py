import logging
import os
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


def _int_env(name, default):
    try:
        return int(os.getenv(name, default))
    except (TypeError, ValueError) as e:
        logger.warning(f"[CONFIG]  Failed to parse {name}, using default: {default} - Error: {e}")
        return default


class Settings:
    """Process settings loaded from environment variables"""

    # Get the root directory (parent of config/) and load .env from there
    _config_dir = os.path.dirname(__file__)
    _root_dir = os.path.dirname(_config_dir)
    _env_path = os.path.join(_root_dir, '.env')
    load_dotenv(_env_path)
    logger.debug(f"[CONFIG]  Environment loaded from {_env_path}")

    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()
    LOG_DIR = os.getenv('LOG_DIR', '/tmp/logs')

    # Where `run` and the built-in cases write trace.csv / summary.txt by default
    RESULTS_DIR = os.getenv('RESULTS_DIR', 'results')

    # Worker threads for droop-compare
    MAX_WORKERS = _int_env('MAX_WORKERS', 2)

    # Plant steps per control period for the built-in scenarios (dt = T_S / PLANT_SUBSTEPS)
    PLANT_SUBSTEPS = _int_env('PLANT_SUBSTEPS', 10)

    @classmethod
    def validate(cls):
        """Validate settings values"""
        invalid = []
        if cls.LOG_LEVEL not in LOG_LEVELS:
            invalid.append("LOG_LEVEL")
        if cls.MAX_WORKERS < 1:
            invalid.append("MAX_WORKERS")
        if cls.PLANT_SUBSTEPS < 1:
            invalid.append("PLANT_SUBSTEPS")
        if not cls.RESULTS_DIR:
            invalid.append("RESULTS_DIR")

        if invalid:
            logger.error(f"[CONFIG]  Validation failed. Invalid settings: {', '.join(invalid)}")
            raise ValueError(f"Invalid settings: {', '.join(invalid)}")
        return True

    @classmethod
    def reload_config(cls):
        """Reload configuration from the environment and .env file"""
        load_dotenv(cls._env_path, override=True)
        old = cls.get_current_config()
        cls.LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()
        cls.LOG_DIR = os.getenv('LOG_DIR', '/tmp/logs')
        cls.RESULTS_DIR = os.getenv('RESULTS_DIR', 'results')
        cls.MAX_WORKERS = _int_env('MAX_WORKERS', 2)
        cls.PLANT_SUBSTEPS = _int_env('PLANT_SUBSTEPS', 10)
        for key, value in cls.get_current_config().items():
            if old[key] != value:
                logger.info(f"[CONFIG]  {key} changed: {old[key]} → {value}")
        return True

    @classmethod
    def get_current_config(cls):
        """Get current configuration values for verification"""
        return {
            'LOG_LEVEL': cls.LOG_LEVEL,
            'LOG_DIR': cls.LOG_DIR,
            'RESULTS_DIR': cls.RESULTS_DIR,
            'MAX_WORKERS': cls.MAX_WORKERS,
            'PLANT_SUBSTEPS': cls.PLANT_SUBSTEPS,
        }
