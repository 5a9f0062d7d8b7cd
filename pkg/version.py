"""
Version information for the Stokes witness lab.
"""

__version__ = "1.0.0"
__description__ = "Numerical lab for Stokes-operator entanglement witnesses on four-mode light"

# Application metadata
APP_NAME = "Stokes Witness Lab"
APP_VERSION = __version__
APP_DESCRIPTION = __description__

PYTHON_VERSION = "3.10+"
REQUIRED_DEPENDENCIES = [
    "numpy>=2.1.0",
    "scipy>=1.13.0",
    "pandas>=2.2.3",
    "pytest>=7.0",
]
