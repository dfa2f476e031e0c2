"""
Data models for tensors, networks, predictors and trade-off analytics
"""
