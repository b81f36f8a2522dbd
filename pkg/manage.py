#!/usr/bin/env python
"""Command-line utility for the dissipative VQE pipeline."""
import sys


def main():
    """Run a pipeline subcommand."""
    try:
        from z2Project.cli import main as cli
    except ImportError as exc:
        raise ImportError(
            "Couldn't import the pipeline dependencies. Are numpy, scipy and click "
            "installed and available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    cli(args=sys.argv[1:], prog_name="manage.py")


if __name__ == '__main__':
    main()
