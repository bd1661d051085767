"""Cross-metaverse object transfers through a committee-attested relay chain."""

from .params import DEFAULT_PARAMS, ProtocolParams

__all__ = ["DEFAULT_PARAMS", "ProtocolParams"]
__version__ = "0.1.0"
