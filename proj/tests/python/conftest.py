import os
import sys

# The in-tree test layout: the compiled _core is on PYTHONPATH (set by ctest)
# and the pure-python package root arrives via SHARPFIELD_PKG.
_pkg = os.environ.get("SHARPFIELD_PKG")
if _pkg and _pkg not in sys.path:
    sys.path.insert(0, _pkg)
