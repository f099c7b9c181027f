import yaml

from pathlib import Path

# Resolve the current dir's parent to fetch the config
current_dir = Path(__file__).resolve().parent
CONFIG_PATH = current_dir.parent / "configs" / "config.yaml"


if not CONFIG_PATH.exists():
    raise FileNotFoundError(
        f"Config file does not exist at {CONFIG_PATH} - Check provided path"
    )

_CACHE: dict[str, dict] = {}


class BaseIO:
    def __init__(self, config_path: str = CONFIG_PATH.as_posix()):
        if config_path is None:
            config_path = CONFIG_PATH.as_posix()
        self.config_path = config_path

    def load_from_config(self, section: str) -> dict:
        """
        Loads a section of library defaults from the configuration file.

        The parsed file is cached per path, so repeated lookups from solver
        loops do not re-read the YAML.

        Args:
            section (str): Top-level key in the YAML file (e.g. "HYPERPARAMS").

        Returns:
            dict: A copy of the settings stored under that key.
        """
        if self.config_path not in _CACHE:
            with open(self.config_path, "r") as file:
                _CACHE[self.config_path] = yaml.safe_load(file) or {}
        return dict(_CACHE[self.config_path].get(section) or {})


def load_section(section: str) -> dict:
    return BaseIO().load_from_config(section)
