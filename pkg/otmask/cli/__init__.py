"""
Command-line surface: argument parsing, batch workers and JSON reports.
"""
