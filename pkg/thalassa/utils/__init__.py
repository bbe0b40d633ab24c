# thalassa/utils/__init__.py
from thalassa.utils.run_logger import RunLogger
from thalassa.utils.timing import StageTimer

__all__ = ["RunLogger", "StageTimer"]
