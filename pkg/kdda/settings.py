# kdda/settings.py
"""
Environment-driven settings for the distillation/adaptation toolkit.
"""
import os

from dotenv import load_dotenv

load_dotenv()


def _env_flag(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


class AppSettings:
    """
    Process-wide knobs read once from the environment (or `.env`): log level,
    default run directory, checked tensor mode and sweep worker count.
    Command-line flags and config keys take precedence where both exist.
    """
    def __init__(self):
        self.log_level: str = os.getenv("LOG_LEVEL", "INFO")
        self.output_dir: str = os.getenv("KDDA_OUTPUT_DIR", "runs")
        # NaN/Inf detection on every tensor op
        self.checked_mode: bool = _env_flag("KDDA_CHECKED", "1")

        try:
            self.da_threads: int = max(1, int(os.getenv("DA_THREADS", "1")))
        except ValueError:
            self.da_threads = 1


# Read by the CLI and by tensor_ad's checked mode.
settings = AppSettings()
