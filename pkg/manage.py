#!/usr/bin/env python
import sys


def main() -> None:
    try:
        from hprnn.cli import main as cli_main
    except ImportError as exc:
        raise ImportError(
            "Couldn't import hprnn. Are its requirements installed and is the repository on your PYTHONPATH?"
        ) from exc
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
