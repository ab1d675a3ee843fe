class ExtractorError(Exception):
    """Base class for extractor failures (bad manifests, unreadable images)."""
