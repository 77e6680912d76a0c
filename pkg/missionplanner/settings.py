import os
import logging
from typing import Optional

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip().strip('"').strip("'")
    if not raw:
        return default
    try:
        return int(raw.replace("_", ""))
    except ValueError:
        print(f"Warning: {name}={raw!r} is not an integer, using {default}")
        return default


# =====================================================
# Runtime settings
# =====================================================

OUTPUT_DIR = os.getenv("MISSION_OUTPUT_DIR", "runs").strip() or "runs"
THREADS = _env_int("MISSION_THREADS", os.cpu_count() or 1)

# Largest state space enumerate_states will stream
ENUMERATION_CAP = _env_int("MISSION_ENUMERATION_CAP", 5_000_000)
# Largest product MDP the verifier solves by brute force
BRUTE_FORCE_CAP = _env_int("MISSION_BRUTE_FORCE_CAP", 100_000)

LOG_LEVEL = os.getenv("MISSION_LOG_LEVEL", "INFO").upper()
LOG_EVERY = _env_int("MISSION_LOG_EVERY", 50)

SENTRY_DSN = os.getenv("SENTRY_DSN", "")
ENVIRONMENT = os.getenv("MISSION_ENVIRONMENT", "development")

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_SWEEPS = 10_000

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

sentry_initialized = False


def configure_logging(level: Optional[str] = None) -> None:
    """Root logging setup, called once by the CLI"""
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)


def init_error_tracking() -> bool:
    """Initialise Sentry when SENTRY_DSN is configured"""
    global sentry_initialized
    if not SENTRY_DSN or sentry_initialized:
        return sentry_initialized
    logger = logging.getLogger("missionplanner.settings")
    try:
        import sentry_sdk
        sentry_sdk.init(
            dsn=SENTRY_DSN,
            traces_sample_rate=0.0,
            environment=ENVIRONMENT,
        )
        sentry_initialized = True
        logger.info("✅ Sentry initialized")
    except ImportError:
        logger.warning("⚠️ sentry-sdk not installed. Error tracking disabled.")
    return sentry_initialized


def capture_exception(exc: BaseException) -> None:
    if not sentry_initialized:
        return
    try:
        import sentry_sdk
        sentry_sdk.capture_exception(exc)
    except Exception:
        pass
