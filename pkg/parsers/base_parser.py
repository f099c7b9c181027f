from abc import ABC, abstractmethod

from data_types.errors import ConfigError


class BaseParser(ABC):
    @abstractmethod
    def parse(self, content: dict, source: str = None):
        pass

    @staticmethod
    def require(content: dict, name: str, source: str = None):
        if name not in content or content[name] is None:
            where = f" in {source}" if source else ""
            raise ConfigError(f"required field missing{where}", field=name)
        return content[name]
