from kdda.cli.errors import InvalidConfigError
from kdda.cli.config import ExperimentConfig, load_config, parse_and_validate_config
from kdda.cli.main import main
