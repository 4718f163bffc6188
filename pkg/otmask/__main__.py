"""Run with ``python -m otmask``."""

from otmask.cli.main import main

main()
