import pathlib
import sys

_HERE = pathlib.Path(__file__).resolve().parent
for entry in (_HERE, _HERE.parent / "src"):
    if str(entry) not in sys.path:
        sys.path.insert(0, str(entry))
