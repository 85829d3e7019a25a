"""Enums shared across pipeline stages."""

from enum import Enum


class Category(str, Enum):
    OBJECTIVE = "Objective"
    METHOD = "Method"
    DATASET = "Dataset"

    @property
    def order(self) -> int:
        return _CATEGORY_ORDER[self]

    @classmethod
    def parse(cls, value: "str | Category") -> "Category":
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.value.lower() == str(value).strip().lower():
                return member
        raise ValueError(f"unknown category: {value!r}")


_CATEGORY_ORDER = {c: i for i, c in enumerate(Category)}


class SectionKind(str, Enum):
    INTRODUCTION = "Introduction"
    METHODS = "Methods"
    RESULTS = "Results"
    DATA = "Data"
    EXPERIMENTS = "Experiments"
    CONCLUSION = "Conclusion"
    OTHER = "Other"


class Source(str, Enum):
    ARXIV_API = "ArxivApi"
    LOCAL_FILE = "LocalFile"
