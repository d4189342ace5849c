"""
Method registry and factory pattern.

Provides centralized registration and retrieval of few-shot methods,
enabling configuration-based method selection (`--methods transmatch,mixmatch`)
without code changes.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, List, Type

from transmatch_lab.core.errors import ConfigurationError
from transmatch_lab.interfaces import FewShotMethod

logger = logging.getLogger(__name__)

_METHODS: Dict[str, Type[FewShotMethod]] = {}


class UnknownMethodError(ConfigurationError):
    """A method name that is not registered."""

    def __init__(self, name: str, available: List[str]):
        super().__init__(
            f"Method '{name}' not found in registry. "
            f"Available methods: {', '.join(available)}"
        )
        self.name = name
        self.available = available


def register_method(name: str) -> Callable:
    """
    Decorator to register a few-shot method implementation.

    Usage:
        >>> @register_method('imprinting')
        >>> class ImprintingMethod:
        >>>     def adapt(self, episode) -> Adaptation:
        >>>         ...

    Args:
        name: Unique identifier for this method (e.g., 'transmatch')

    Returns:
        Decorator function
    """
    def decorator(cls: Type[FewShotMethod]) -> Type[FewShotMethod]:
        if name in _METHODS:
            logger.warning(f"Method '{name}' is already registered. Overwriting.")

        _METHODS[name] = cls
        logger.debug(f"Registered method: '{name}' -> {cls.__name__}")
        return cls

    return decorator


def get_method(name: str, *args, **kwargs) -> FewShotMethod:
    """
    Factory to get a method by name.

    Args:
        name: Method name (must be registered)
        *args, **kwargs: Constructor arguments (extractor, config)

    Raises:
        UnknownMethodError: If the name is not registered (lists valid names)

    Example:
        >>> method = get_method('transmatch', extractor, config)
        >>> adaptation = method.adapt(episode)
    """
    _ensure_builtin_methods()
    if name not in _METHODS:
        raise UnknownMethodError(name, available_methods())
    return _METHODS[name](*args, **kwargs)


def validate_methods(names) -> List[str]:
    """Check every name up front; returns the names as a list."""
    _ensure_builtin_methods()
    names = list(names)
    if not names:
        raise ConfigurationError("no methods selected")
    for name in names:
        if name not in _METHODS:
            raise UnknownMethodError(name, available_methods())
    return names


def available_methods() -> List[str]:
    _ensure_builtin_methods()
    return sorted(_METHODS)


def _ensure_builtin_methods() -> None:
    # registration happens on import of the methods module
    from transmatch_lab.engine import methods  # noqa: F401
