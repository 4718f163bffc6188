"""
Process exit statuses of the ``otmask`` command.
"""

OK = 0

# Bad input: flags, files, shapes, numeric settings.
VALIDATION = 1

# An internal invariant broke (unassigned pixel, empty plan column, ...).
INTERNAL = 2

INTERRUPTED = 130
