import logging
from pathlib import Path
from typing import Optional, Union

FORMAT = "%(asctime)s [%(levelname)s]: %(message)s"

# Names of every logger created through `Logger`, so CLI flags can reach them all
_NAMES: set[str] = set()


def _default_level() -> Union[int, str]:
    # Deferred import: handlers.base validates the config path at import time
    from handlers.base import load_section

    return load_section("LOGGING").get("level") or "INFO"


class Logger:
    def __init__(
        self,
        name: str,
        log_file_path: Optional[str] = None,
        log_level: Optional[Union[int, str]] = None,
    ) -> None:
        """
        Thin wrapper around `logging.Logger` with console output and an optional log file.

        Handlers are attached once per logger name, so modules and classes can
        construct a Logger freely without duplicating output lines.

        Args:
            name (str): The name of the logger, usually `__name__`.
            log_file_path (str, optional): If provided, messages are also written to this file.
            log_level (int | str, optional): Log level. Defaults to LOGGING.level in configs/config.yaml.

        Example:
            logger = Logger(__name__)
            logger.info("ridge estimate computed")
        """
        self.logger = logging.getLogger(name)
        self.logger.propagate = False
        _NAMES.add(name)
        if log_level is not None:
            self.set_log_level(log_level)
        elif self.logger.level == logging.NOTSET:
            self.set_log_level(_default_level())

        formatter = logging.Formatter(FORMAT)

        if log_file_path:
            self.add_file_handler(log_file_path, formatter)

        if not any(
            getattr(handler, "_console", False) for handler in self.logger.handlers
        ):
            self.add_console_handler(formatter)

    def add_file_handler(
        self, log_file_path: str, formatter: logging.Formatter
    ) -> None:
        log_path = Path(log_file_path).resolve()
        for handler in self.logger.handlers:
            if getattr(handler, "baseFilename", None) == str(log_path):
                return
        # Create output dir if it doesn't exist
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(log_path)
        file_handler.setFormatter(formatter)
        self.logger.addHandler(file_handler)

    def add_console_handler(self, formatter: logging.Formatter) -> None:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        console_handler._console = True
        self.logger.addHandler(console_handler)

    def debug(self, message: str) -> None:
        self.logger.debug(message)

    def info(self, message: str) -> None:
        self.logger.info(message)

    def warning(self, message: str) -> None:
        self.logger.warning(message)

    def error(self, message: str) -> None:
        self.logger.error(message)

    def exception(self, message: str) -> None:
        self.logger.exception(message)

    def set_log_level(self, log_level: Union[int, str]) -> None:
        if isinstance(log_level, str):
            log_level = logging.getLevelName(log_level.upper())
        self.logger.setLevel(log_level)

    def remove_handlers(self) -> None:
        for handler in list(self.logger.handlers):
            self.logger.removeHandler(handler)


def configure_loggers(
    log_file_path: Optional[str] = None, verbose: bool = False
) -> None:
    """
    Applies the CLI logging flags to every logger created through `Logger`.

    Without `log_file_path`, LOGGING.file of configs/config.yaml is used when set.
    """
    from handlers.base import load_section

    log_file_path = log_file_path or load_section("LOGGING").get("file")
    formatter = logging.Formatter(FORMAT)
    for name in sorted(_NAMES):
        wrapper = Logger(name, log_level=logging.DEBUG if verbose else _default_level())
        if log_file_path:
            wrapper.add_file_handler(log_file_path, formatter)
