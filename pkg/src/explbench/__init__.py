"""explbench: a workbench for building and evaluating multi-fact explanations.

Ingests a semi-structured fact knowledge base, multiple-choice questions with
gold explanations, graded expert relevance ratings, and model outputs; computes
ranking and whole-explanation metrics, agreement statistics, and schema-based
explanations; and hosts an HTTP annotation loop for collecting new ratings.
"""

__version__ = "0.1.0"
