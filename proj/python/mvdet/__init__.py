"""Multi-view inconsistency detector for adversarial images.

The heavy lifting lives in the compiled extension ``mvdet._core``; this
package re-exports it and adds the dataset preparation helper (which works
without the extension).
"""

__version__ = "0.1.0"

try:
    from mvdet._core import *  # noqa: F401,F403
    _HAS_CORE = True
except ImportError:  # pragma: no cover - data_prep-only installs
    _HAS_CORE = False
