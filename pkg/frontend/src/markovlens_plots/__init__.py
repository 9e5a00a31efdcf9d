"""Offline figure rendering for markovlens CSV artifacts."""

from .io import ArtifactError, EmptyInputError, MissingColumnError, read_artifact
from .render import AsymptoteError, FigureSpec, RenderReport, render

__version__ = "0.1.0"
