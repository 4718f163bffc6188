"""
Transport solvers: Sinkhorn scaling and the exact network-simplex oracle.
"""
