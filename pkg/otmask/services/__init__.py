"""
Business logic services: supplies, pseudo-mask pipeline, losses and metrics.
"""
