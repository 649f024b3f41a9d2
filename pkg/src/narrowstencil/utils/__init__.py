"""Utility modules for narrowstencil."""

from .output_writer import ArtifactWriter, atomic_path, atomic_write_text, format_cell, render_csv

__all__ = [
    'ArtifactWriter',
    'atomic_path',
    'atomic_write_text',
    'format_cell',
    'render_csv',
]
