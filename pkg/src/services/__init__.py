"""
Services for building, running, training and analysing zero-activation predictors
"""
