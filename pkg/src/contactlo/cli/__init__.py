from .config import ConfigError, ExperimentConfig, parse_config, parse_dict
from .main import main
from .plots import emit_plot
from .runner import RunManifest, run
