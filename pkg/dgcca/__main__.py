"""Entry point for python -m dgcca."""
from dgcca.cli import cli

if __name__ == "__main__":
    cli()
