"""Neural-L1 adaptive lane keeping: control library and scenario simulator."""
from . import certify, controllers, errors, neural, numlin, plant, signals

__version__ = "0.1.0"

__all__ = ["certify", "controllers", "errors", "neural", "numlin", "plant", "signals"]
