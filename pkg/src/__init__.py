"""
ZAP: zero-activation prediction for small CNNs
"""
