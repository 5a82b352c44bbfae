"""Allow ``python -m gcmpc`` as an alias for the ``gcmpc`` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
