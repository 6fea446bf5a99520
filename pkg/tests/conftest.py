"""Ensures the tests directory itself is importable (oracles, checks)."""

import os
import sys

sys.path.insert(0, os.path.dirname(__file__))
