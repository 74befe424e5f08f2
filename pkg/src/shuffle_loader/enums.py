import enum


class LabelledEnum(enum.Enum):
    """Enum whose values are their command line spellings."""

    @classmethod
    def from_string(cls, value: str):
        """Parse a spelling; case-insensitive, underscores and dashes are interchangeable."""
        normalized = value.strip().lower().replace("_", "-")
        for member in cls:
            if member.value == normalized:
                return member
        raise ValueError(
            f"{value!r} is not a valid {cls.__name__}. "
            f"Accepted: {', '.join(m.value for m in cls)}"
        )

    @property
    def label(self) -> str:
        """Command line spelling."""
        return self.value
