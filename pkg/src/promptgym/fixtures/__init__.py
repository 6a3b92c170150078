"""Bundled sample course used by the test suite and as a starter repo."""

from pathlib import Path


def sample_course_dir() -> Path:
    return Path(__file__).parent / "sample_course"
