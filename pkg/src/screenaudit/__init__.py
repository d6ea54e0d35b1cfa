"""screenaudit: data-integrity audits for ligand-based screening benchmarks."""

__version__ = "0.1.0"
