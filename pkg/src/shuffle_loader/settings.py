import enum
import os
import sys
from pathlib import Path
from typing import Any, Dict, Sequence, Union, get_args, get_origin

from .command_line import _bool_str_to_bool

# Python 3.10+ has types.UnionType for the | syntax
if sys.version_info >= (3, 10):
    from types import UnionType
else:
    UnionType = None  # noqa


def _convert_value_to_type(value: Any, to_type: Any, env_name: str) -> Any:
    """Convert a string value from the environment to the annotated type.

    Handles int, float, bool, str, Path, Optional/Union, and any type with a
    `from_string` class method (which is how the project's enums parse). For
    Optional types the string "none" (case-insensitive) becomes None.

    Args:
        value: The raw value, usually a string from os.environ
        to_type: The type annotation of the setting
        env_name: The environment variable name (for error messages)

    Returns:
        Any: The converted value

    Raises:
        ValueError: If the value cannot be converted
    """
    if value is None or not isinstance(value, str):
        return value

    origin = get_origin(to_type)
    if origin is Union or (UnionType and isinstance(to_type, UnionType)):
        args = get_args(to_type)
        if type(None) in args and value.strip().lower() == "none":
            return None
        errors = []
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _convert_value_to_type(value, arg, env_name)
            except (ValueError, TypeError) as e:
                errors.append(str(e))
        raise ValueError(
            f"Invalid value in {env_name} environment variable.\n"
            f"  Your value: {value!r}\n"
            f"  Expected one of: {', '.join(_type_name(a) for a in args)}\n"
            f"  Errors: {'; '.join(errors)}"
        )

    try:
        # bool before int, bool is a subclass of int
        if to_type is bool:
            return _bool_str_to_bool(value)
        elif to_type is int:
            return int(value)
        elif to_type is float:
            return float(value)
        elif to_type is str:
            return value
        elif to_type is Path:
            return Path(value)
        elif hasattr(to_type, "from_string"):
            return to_type.from_string(value)
        elif isinstance(to_type, type) and issubclass(to_type, enum.Enum):
            return to_type[value.strip().upper().replace("-", "_")]
    except (ValueError, KeyError) as e:
        raise ValueError(
            f"Invalid value in {env_name} environment variable.\n"
            f"  Your value: {value!r}\n"
            f"  Expected: {_type_name(to_type)}\n"
            f"  Hint: {_hint_for(to_type)}"
        ) from e

    return value


def _type_name(to_type: Any) -> str:
    return getattr(to_type, "__name__", repr(to_type))


def _hint_for(to_type: Any) -> str:
    if to_type is bool:
        return "Use true/false, yes/no, on/off or 1/0"
    if isinstance(to_type, type) and issubclass(to_type, enum.Enum):
        names = [getattr(m, "label", m.name.lower()) for m in to_type]
        return f"Accepted values: {', '.join(names)}"
    return f"Use a value {_type_name(to_type)}() accepts"


def _class_body_annotations(dct: Dict[str, Any]) -> Dict[str, Any]:
    """Annotations declared in a class body, evaluated.

    From Python 3.14 the body holds a lazy `__annotate__` function instead of
    an `__annotations__` dict.
    """
    if "__annotations__" in dct:
        return dict(dct.pop("__annotations__"))
    annotate = dct.get("__annotate__", dct.get("__annotate_func__"))
    if callable(annotate):
        return dict(annotate(1))
    return {}


class MetaSettings(type):
    """Metaclass that resolves settings from the command line, the environment, or defaults.

    Each settings class gets its own ConfigInstance holding default values and
    annotations. Reading a setting checks, in order, values given explicitly on
    the command line, the environment variable `<prefix><NAME>`, and finally
    the default.
    """

    class ConfigInstance:
        """Internal storage for settings values and type annotations."""

    def __new__(mcs, name, bases, dct):
        """Move setting definitions from the class dict into a ConfigInstance.

        Defaults and annotations of parent settings classes are inherited and
        may be overridden.
        """
        config_instance = mcs.ConfigInstance()

        annotations: Dict[str, Any] = {}
        for base in reversed(bases):
            try:
                parent_config = object.__getattribute__(base, "__config_instance")
            except AttributeError:
                continue
            annotations.update(parent_config.__annotations__)
            for attr, value in vars(parent_config).items():
                if not attr.startswith("__"):
                    setattr(config_instance, attr, value)

        current_annotations = _class_body_annotations(dct)
        annotations.update(current_annotations)
        config_instance.__annotations__ = annotations

        # A setting is a non-dunder class attribute that is not a method or descriptor
        keys_to_move = [
            key
            for key, value in dct.items()
            if not key.startswith("__")
            and not callable(value)
            and not isinstance(value, (property, staticmethod, classmethod))
        ]
        for key in keys_to_move:
            setattr(config_instance, key, dct.pop(key))

        for annotation_key in current_annotations:
            if not hasattr(config_instance, annotation_key):
                setattr(config_instance, annotation_key, None)

        dct["__config_instance"] = config_instance
        return super().__new__(mcs, name, bases, dct)

    def __dir__(cls):
        """Include settings in the directory listing."""
        dir_set = set(super().__dir__())
        config_instance = object.__getattribute__(cls, "__config_instance")
        dir_set.update(a for a in vars(config_instance) if not a.startswith("__"))
        dir_set.update(config_instance.__annotations__)
        return sorted(dir_set)

    @staticmethod
    def _get_cli_config_instance(klass):
        """Return the command line config instance of `klass`, or None."""
        try:
            return object.__getattribute__(klass, "__cli_config_instance")
        except AttributeError:
            return None

    def __getattribute__(cls, attribute):
        """Resolve a setting: command line, then environment, then default."""
        if attribute.startswith("__"):
            return type.__getattribute__(cls, attribute)

        mro = type.__getattribute__(cls, "__mro__")

        for klass in mro:
            cli_config_instance = MetaSettings._get_cli_config_instance(klass)
            if cli_config_instance is not None and hasattr(
                cli_config_instance, attribute
            ):
                return getattr(cli_config_instance, attribute)

        try:
            config_instance = object.__getattribute__(cls, "__config_instance")
        except AttributeError:
            return type.__getattribute__(cls, attribute)

        if attribute in config_instance.__annotations__ or hasattr(
            config_instance, attribute
        ):
            env_name = cls.env_name(attribute)
            env_value = os.environ.get(env_name)
            if env_value is not None:
                annotation = config_instance.__annotations__.get(attribute)
                if annotation is None:
                    default = getattr(config_instance, attribute, None)
                    annotation = Path if isinstance(default, Path) else type(default)
                return _convert_value_to_type(env_value, annotation, env_name)
            return getattr(config_instance, attribute, None)

        return type.__getattribute__(cls, attribute)

    def __setattr__(cls, attribute, value):
        """Set the default value of a setting."""
        if attribute.startswith("__"):
            type.__setattr__(cls, attribute, value)
        else:
            config_instance = object.__getattribute__(cls, "__config_instance")
            setattr(config_instance, attribute, value)

    def env_name(cls, attribute: str) -> str:
        """The environment variable that overrides `attribute`."""
        prefix = type.__getattribute__(cls, "__env_prefix__")
        return f"{prefix}{attribute.upper()}"


class Settings(metaclass=MetaSettings):
    """Base class for environment-overridable configuration.

    Subclass it and declare typed class attributes:

        class MySettings(Settings):
            __env_prefix__ = "MYAPP_"
            prefetch_depth: int = 1
            cache_chunks: int = 0

    `MYAPP_PREFETCH_DEPTH=2` then overrides the default. Supported types are
    int, float, bool, str, Path, Optional/Union, enums, and any type with a
    `from_string` class method.
    """

    __env_prefix__ = ""

    def __getattribute__(self, name):
        """Allow instances to read class-level settings."""
        try:
            return object.__getattribute__(self, name)
        except AttributeError:
            return getattr(type(self), name)

    @classmethod
    def setting_names(cls) -> Sequence[str]:
        """Names of all declared settings, including inherited ones."""
        config_instance = object.__getattribute__(cls, "__config_instance")
        return sorted(config_instance.__annotations__)

    @classmethod
    def annotation_of(cls, name: str) -> Any:
        """The type annotation of setting `name`."""
        config_instance = object.__getattribute__(cls, "__config_instance")
        return config_instance.__annotations__[name]

    @classmethod
    def to_static(cls) -> type:
        """Snapshot the currently resolved settings as a plain class.

        Returns:
            type: A regular class whose attributes are the resolved values.

        Example:
            >>> class LoaderDefaults(Settings):
            ...     prefetch_depth: int = 1
            >>> LoaderDefaults.to_static().prefetch_depth
            1
        """
        attrs = {name: getattr(cls, name) for name in cls.setting_names()}
        static_class = type(f"Static{cls.__name__}", (), attrs)
        static_class.__module__ = cls.__module__
        return static_class

    @classmethod
    def from_env(cls) -> type:
        """Snapshot only the settings that are set in the environment.

        Returns:
            type: A plain class carrying environment-sourced settings only.
        """
        attrs = {}
        for name in cls.setting_names():
            if cls.env_name(name) in os.environ:
                attrs[name] = getattr(cls, name)
        return type(f"{cls.__name__}FromEnv", (), attrs)

    @classmethod
    def apply_command_line(cls, values: Dict[str, Any]) -> None:
        """Install explicit command line values (used with argparse subcommands)."""
        cli_config_instance = MetaSettings.ConfigInstance()
        for name, value in values.items():
            setattr(cli_config_instance, name, value)
        type.__setattr__(cls, "__cli_config_instance", cli_config_instance)

    @classmethod
    def clear_command_line(cls) -> None:
        """Forget values installed from the command line."""
        try:
            type.__delattr__(cls, "__cli_config_instance")
        except AttributeError:
            pass
