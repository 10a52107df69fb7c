"""litkg: schema-driven knowledge graphs and instruction data from papers."""

__version__ = "0.1.0"
