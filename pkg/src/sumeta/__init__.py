"""Meta-evaluation workbench for summarization metrics.

Pipeline: load a pre-segmented corpus, grow pools of extractive candidate
summaries per document with a genetic algorithm, score them under lexical
metrics (plus externally supplied score files), and run the agreement
analyses: width-controlled Kendall's tau tables, disagreement curves,
F/N and F'/N ratio curves with a random-metric baseline, and
reference-property (ease of summarization / abstractiveness / coverage)
correlation studies.
"""

__version__ = "0.1.0"


class SumetaError(Exception):
    """Base class for validation and contract errors raised by this package."""
