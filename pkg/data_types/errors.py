class IdentificationError(Exception):
    """Base class for every error raised by the identification library."""


class DimensionMismatchError(IdentificationError, ValueError):
    pass


class InvalidParameterError(IdentificationError, ValueError):
    pass


class InsufficientDataError(IdentificationError, ValueError):
    pass


class RankDeficientDataError(IdentificationError):
    def __init__(self, rank: int, size: int, what: str = "Gram matrix") -> None:
        self.rank = rank
        self.size = size
        super().__init__(
            f"rank-deficient data: {what} has numerical rank {rank} < {size}"
        )


class DependentObservationRowsError(IdentificationError):
    def __init__(self, rank: int, rows: int) -> None:
        self.rank = rank
        self.rows = rows
        super().__init__(
            f"observation rows dependent: C has rank {rank} < {rows} rows, CC* is singular"
        )


class InconsistentOrderError(IdentificationError):
    def __init__(self, rank: int, order: int) -> None:
        self.rank = rank
        self.order = order
        super().__init__(
            f"inconsistent order: Hankel matrix has numerical rank {rank} < requested order {order}"
        )


class DegenerateExpansionError(IdentificationError):
    def __init__(self, rank: int, size: int) -> None:
        self.rank = rank
        self.size = size
        super().__init__(
            f"degenerate expansion: linear map for the first-order correction has rank {rank} < {size}"
        )


class ConfigError(IdentificationError):
    def __init__(self, message: str, field: str = None) -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class SchemaMismatchError(ConfigError):
    pass
