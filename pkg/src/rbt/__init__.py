"""Requirements-based testing pipeline for learned components."""

from importlib import resources

__version__ = "0.1.0"


def data_path(name: str):
    """Path to a packaged fixture data file (glossaries, corpora, rules)."""
    return resources.files("rbt") / "data" / name
