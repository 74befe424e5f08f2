import argparse
import enum
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, get_args, get_origin

RESERVED_ARGUMENT_NAMES = frozenset({"help", "h"})


def _convert_to_argument_name(name: str) -> str:
    """Convert a setting name to a flag name."""
    return name.lower().replace("_", "-")


def _bool_str_to_bool(value: str) -> bool:
    """Convert a string to a boolean value."""
    normalized_value = value.strip().lower()
    if normalized_value in ("true", "1", "yes", "on"):
        return True
    elif normalized_value in ("false", "0", "no", "off"):
        return False
    else:
        raise ValueError(f"{value} is not a valid boolean value")


def _optional_type_converter(inner_type):
    """Create a converter for Optional types that maps 'none' to None."""

    def converter(value: str):
        if value.strip().lower() == "none":
            return None
        return inner_type(value)

    converter.__name__ = getattr(inner_type, "__name__", "value")
    return converter


def _enum_converter(enum_type):
    """Create a converter for an enum that prefers its `from_string`."""
    if hasattr(enum_type, "from_string"):
        converter = enum_type.from_string
    else:

        def converter(value: str):
            return enum_type[value.strip().upper().replace("-", "_")]

    return converter


def _enum_choices(enum_type) -> Optional[Sequence[str]]:
    return [getattr(member, "label", member.name.lower()) for member in enum_type]


def add_settings_arguments(
    parser: argparse.ArgumentParser,
    settings_cls,
    names: Optional[Iterable[str]] = None,
    negative_flags: Optional[Mapping[str, str]] = None,
    help_texts: Optional[Mapping[str, str]] = None,
) -> argparse.ArgumentParser:
    """Add one flag per setting to `parser`.

    The flag default is the setting's currently resolved value, so environment
    variables show through. Booleans get a positive flag and a negative flag;
    the negative one is `--no-<name>` unless `negative_flags` names another
    (e.g. `{"ordered": "unordered"}`). Enum settings list their choices in help.

    Args:
        parser: The parser (or subparser) to extend
        settings_cls: A Settings subclass
        names: Settings to expose; all of them when None
        negative_flags: Custom negative flag names for boolean settings
        help_texts: Help strings keyed by setting name

    Returns:
        argparse.ArgumentParser: The same parser

    Raises:
        ValueError: If a setting name collides with argparse's own options
    """
    negative_flags = negative_flags or {}
    help_texts = help_texts or {}
    selected = list(names) if names is not None else list(settings_cls.setting_names())

    for name in selected:
        if name.lower() in RESERVED_ARGUMENT_NAMES:
            raise ValueError(
                f"Cannot use '{name}' as a setting name because it conflicts with argparse built-in options. "
                f"Reserved names: {', '.join(sorted(RESERVED_ARGUMENT_NAMES))}"
            )

        argument_name = _convert_to_argument_name(name)
        argument_type = settings_cls.annotation_of(name)
        argument_default = getattr(settings_cls, name)
        help_text = help_texts.get(name)

        is_optional = False
        if get_origin(argument_type) is not None:
            args = get_args(argument_type)
            if type(None) in args:
                is_optional = True
                argument_type = next(a for a in args if a is not type(None))

        if argument_type is bool and not is_optional:
            parser.add_argument(
                "--" + argument_name,
                default=argument_default,
                action="store_true",
                dest=name,
                help=help_text,
            )
            negative = negative_flags.get(name, "no-" + argument_name)
            parser.add_argument(
                "--" + negative,
                default=argument_default,
                action="store_false",
                dest=name,
                help=argparse.SUPPRESS if help_text is None else f"opposite of --{argument_name}",
            )
            continue

        metavar = None
        if argument_type is bool:
            converter = _bool_str_to_bool
        elif isinstance(argument_type, type) and issubclass(argument_type, enum.Enum):
            converter = _enum_converter(argument_type)
            metavar = "{" + ",".join(_enum_choices(argument_type)) + "}"
        elif hasattr(argument_type, "from_string"):
            converter = argument_type.from_string
        else:
            converter = argument_type

        if is_optional and converter is not _bool_str_to_bool:
            converter = _optional_type_converter(converter)

        parser.add_argument(
            "--" + argument_name,
            type=converter,
            default=argument_default,
            dest=name,
            metavar=metavar,
            help=help_text,
        )

    return parser


def _was_provided(flag: str, provided_args: Sequence[str]) -> bool:
    return any(arg == flag or arg.startswith(flag + "=") for arg in provided_args)


def explicit_arguments(
    args: argparse.Namespace,
    settings_cls,
    provided_args: Sequence[str],
    negative_flags: Optional[Mapping[str, str]] = None,
) -> Dict[str, Any]:
    """Return the parsed values of settings whose flags were actually given.

    Command line values always override environment variables, but only when
    the user typed the flag; an argparse default must not mask the environment.
    """
    negative_flags = negative_flags or {}
    annotations = set(settings_cls.setting_names())
    explicit = {}
    for name, value in vars(args).items():
        if name not in annotations:
            continue
        argument_name = _convert_to_argument_name(name)
        flags = ["--" + argument_name, "--no-" + argument_name]
        if name in negative_flags:
            flags.append("--" + negative_flags[name])
        if any(_was_provided(flag, provided_args) for flag in flags):
            explicit[name] = value
    return explicit

