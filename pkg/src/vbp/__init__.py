"""Spreadsheet-semantics calculation engine and backpropagation training workbooks."""

__version__ = "0.1.0"
