from .export import atomic_write_text, format_cell, write_csv, write_json
from .runs import RunStore

__all__ = ["RunStore", "atomic_write_text", "format_cell", "write_csv", "write_json"]
