"""
hidden-vi harness package
File: harness/__init__.py
Experiment configs, the experiment catalog, the runner and verification suites
"""

__version__ = "1.0.0"
