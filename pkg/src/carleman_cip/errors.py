"""Error type shared by every module.

Each failure carries a short machine-readable ``code`` (``"CFL_VIOLATION"``,
``"NONPOSITIVE_DENOMINATOR"``, ...) so the command line front end can map it
onto an exit status without parsing messages.
"""

from __future__ import annotations

from typing import Any


class CIPError(ValueError):
    """A guarded numerical or configuration failure.

    Parameters
    ----------
    code : str
        Upper-case error name.
    message : str
        Human-readable detail.
    **info
        Extra payload (offending node indices, key names, ...).
    """

    def __init__(self, code: str, message: str = "", **info: Any):
        self.code = code
        self.info = info
        super().__init__(f"{code}: {message}" if message else code)


# exit statuses used by the CLI
EXIT_CODES = {
    "CONFIG_ERROR": 2,
    "X0_INSIDE": 2,
    "NONPOSITIVE_N": 2,
    "BAD_D": 2,
    "LAYER_TOO_WIDE": 2,
    "TRACE_SHAPE_MISMATCH": 2,
    "GRID_TOO_SMALL": 2,
    "TOO_FEW_SAMPLES": 2,
    "INVARIANT_FAIL": 2,
    "NO_EXTERIOR_NODES": 2,
    "CFL_VIOLATION": 3,
    "NONPOSITIVE_DENOMINATOR": 3,
    "SINGULAR_GRAM": 3,
    "ZERO_LUMPED_ROW": 3,
    "SAMPLING_FAILED": 3,
    "TOO_SHORT": 3,
    "LEFT_SET": 4,
    "MAX_ITERS": 5,
}


def exit_code(code: str) -> int:
    return EXIT_CODES.get(code, 1)
