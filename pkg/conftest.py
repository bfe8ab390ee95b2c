# Makes the flat top-level packages (core, operations, harness) importable from tests.
