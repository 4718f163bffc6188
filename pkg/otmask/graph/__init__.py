"""
Pixel graph: edge weights from the task maps and geodesic costs.
"""
