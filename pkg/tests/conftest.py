"""Test configuration: make the project packages importable.

Numerical warnings raised by the library are part of its contract, so tests
that expect one assert it explicitly with pytest.warns.
"""

import os
import sys

# Add parent to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
