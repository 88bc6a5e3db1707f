"""tierquant CLI entrypoint"""
from tierquant import cli


if __name__ == "__main__":
    cli.tierquant()
