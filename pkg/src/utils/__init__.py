"""
Numerical kernels, autograd, patterns, serialization and config helpers
"""
