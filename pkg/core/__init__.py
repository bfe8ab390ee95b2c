"""
hidden-vi core package
File: core/__init__.py
Numeric building blocks: linear algebra, prediction models, VI operators and surrogate losses
"""
