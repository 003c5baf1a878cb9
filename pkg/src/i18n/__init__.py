"""Console message catalogs (en, zh) and the active-locale lookup."""

import locale
import os
from typing import Optional

from ..errors import InvalidArgumentError
from . import en, zh

CATALOGS = {
    "en": en.STRINGS,
    "zh": zh.STRINGS,
}
DEFAULT_LOCALE = "en"
# Checked in POSIX precedence order.
_LOCALE_ENV = ("LC_ALL", "LC_MESSAGES", "LANG", "LANGUAGE")

_active = DEFAULT_LOCALE


def set_locale(lang: str) -> None:
    global _active
    if lang not in CATALOGS:
        raise InvalidArgumentError(f"unsupported locale: {lang} (choose from {sorted(CATALOGS)})")
    _active = lang


def current_locale() -> str:
    return _active


def detect_system_locale() -> str:
    """'zh' for any Chinese system locale, otherwise 'en'."""
    tag = next((os.environ[k] for k in _LOCALE_ENV if os.environ.get(k)), "")
    if not tag:
        try:
            tag = locale.getlocale()[0] or ""
        except ValueError:
            tag = ""
    return "zh" if tag.lower().startswith("zh") else DEFAULT_LOCALE


def resolve_locale(requested: Optional[str]) -> str:
    """--lang wins; without it the system locale decides."""
    return requested or detect_system_locale()


def t(key: str, **kwargs) -> str:
    """Catalog string for key in the active locale, formatted with kwargs.

    Keys missing from the zh catalog fall back to English; unknown keys come back verbatim.
    """
    template = CATALOGS[_active].get(key) or CATALOGS[DEFAULT_LOCALE].get(key, key)
    return template.format(**kwargs) if kwargs else template
