"""Evidence-anchored document insight pipeline.

Ingests business PDFs into structured page records, runs three observer
tiers (micro/meso/macro) over them through a provider-agnostic model
interface, consolidates the findings into a fully traceable result
document, and closes the loop with a human review service and an
evaluation harness.
"""

__version__ = "0.1.0"
