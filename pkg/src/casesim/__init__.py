"""Similar-case classification of labor judgments from their lists of disputes.

Modules follow the pipeline: ``corpus`` (parse, extract, blur), ``llm_disputes``
(three-step prompt chain), ``embedding``, ``clustering``, ``simimage``,
``classifier``, ``evaluation``, with ``experiment`` and ``cli`` on top.
"""

from .errors import CaseSimError, ConfigError, DataError, MissingArtifact

__version__ = "0.1.0"

__all__ = ["CaseSimError", "ConfigError", "DataError", "MissingArtifact", "__version__"]
