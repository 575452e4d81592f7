# denots/__about__.py

APP_NAME        = "denots"
APP_TITLE       = "denots: scaled neural CDEs with negative-feedback vector fields"
AUTHOR          = "denots developers"
COPYRIGHT_YEAR  = "2026"
COPYRIGHT       = f"© {COPYRIGHT_YEAR} {AUTHOR}"


__version__ = "0.1.0.dev1"

__all__ = [
    "__version__",
    "APP_NAME", "APP_TITLE",
    "AUTHOR", "COPYRIGHT_YEAR", "COPYRIGHT",
]
