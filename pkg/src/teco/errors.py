"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: config errors exit 2, data errors
exit 3, numerical divergence exits 4.
"""


class TecoError(Exception):
    pass


class ShapeError(TecoError):
    """Tensor dimension mismatch; the message names both offending shapes."""


class ConfigError(TecoError):
    """Invalid hyper-parameter, ablation combination, or config file."""


class DataError(TecoError):
    """Broken or inconsistent bundle / knowledge-store / checkpoint files."""


class DivergenceError(TecoError):
    """Training hit a NaN; the message names the first NaN parameter."""
