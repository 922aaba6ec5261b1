from __future__ import annotations

from enum import Enum


class LaneType(str, Enum):
    """Lane-marking annotation types used by the dataset."""

    SINGLE_WHITE_SOLID = "single_white_solid"
    SINGLE_WHITE_DOTTED = "single_white_dotted"
    SINGLE_YELLOW_SOLID = "single_yellow_solid"
    SINGLE_YELLOW_DOTTED = "single_yellow_dotted"
    DOUBLE_WHITE_SOLID = "double_white_solid"
    DOUBLE_YELLOW_SOLID = "double_yellow_solid"
    DOUBLE_YELLOW_DOTTED = "double_yellow_dotted"
    DOUBLE_WHITE_SOLID_DOTTED = "double_white_solid_dotted"
    DOUBLE_WHITE_DOTTED = "double_white_dotted"
    WHITE_YELLOW_SOLID = "white_yellow_solid"

    @property
    def is_double(self) -> bool:
        return self.value.startswith("double") or self is LaneType.WHITE_YELLOW_SOLID

    def stripes(self) -> list[tuple[str, bool]]:
        """(colour, dotted) for each painted stripe, left to right."""
        v = self.value
        if self is LaneType.WHITE_YELLOW_SOLID:
            return [("white", False), ("yellow", False)]
        colour = "yellow" if "yellow" in v else "white"
        if not self.is_double:
            return [(colour, "dotted" in v)]
        if v.endswith("solid_dotted"):
            return [(colour, False), (colour, True)]
        dotted = v.endswith("dotted")
        return [(colour, dotted), (colour, dotted)]
