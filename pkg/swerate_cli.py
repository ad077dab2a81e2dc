"""Command-line entry point for the swerate rate-function tools."""

from __future__ import annotations

import logging
import sys
from typing import List, Optional

try:
    import numpy  # noqa: F401
    import scipy  # noqa: F401
except ModuleNotFoundError as exc:
    sys.stderr.write(
        f"Missing Python dependency '{exc.name}'. Install the requirements first:\n"
        "  python3 -m pip install -r requirements.txt\n"
    )
    raise SystemExit(1)

from swerate.cli import dispatch

logging.basicConfig(level=logging.INFO, format="%(levelname)s:%(name)s:%(message)s")
logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> None:
    try:
        code = dispatch(argv)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        code = 1
    raise SystemExit(code)


if __name__ == "__main__":
    main()
