from pathlib import Path
from typing import Union

from data_types.errors import ConfigError, SchemaMismatchError
from handlers.base import BaseIO
from handlers.data_files import DataFileIO
from parsers.base_parser import BaseParser
from utils.logger import Logger

RECORD_FIELDS = ("schema_version", "method", "hyperparams", "result")


class RunRecordParser(BaseIO, BaseParser):
    """Loads run records for the report table and checks that they share one schema version."""

    def __init__(self, config_path: str = None):
        super().__init__(config_path)
        self.logger = Logger(__name__)
        self.schema_version = int(
            self.load_from_config("RECORDS").get("schema_version", 1)
        )

    def parse(self, content: dict, source: str = None) -> dict:
        if not isinstance(content, dict):
            raise ConfigError(f"{source or 'record'} must hold a JSON object", field="record")
        for name in RECORD_FIELDS:
            self.require(content, name, source)
        if content["schema_version"] != self.schema_version:
            raise SchemaMismatchError(
                f"{source or 'record'} has version {content['schema_version']}, "
                f"expected {self.schema_version}",
                field="schema_version",
            )
        return content

    def parse_files(self, paths: list[Union[str, Path]]) -> list[dict]:
        if not paths:
            raise ConfigError("no run records given", field="records")
        reader = DataFileIO()
        records = []
        for path in paths:
            records.append(self.parse(reader.read_json(path), source=str(path)))
        self.logger.debug(f"loaded {len(records)} run records")
        return records
