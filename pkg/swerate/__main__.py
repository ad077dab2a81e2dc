import logging
import sys

from .cli import dispatch

logging.basicConfig(level=logging.INFO)
sys.exit(dispatch())
