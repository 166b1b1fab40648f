"""Paths to the synthetic feeder that ships with the package."""

from importlib.resources import files
from pathlib import Path


def data_dir() -> Path:
    return Path(str(files("flexneeds") / "data"))


def feeder_path() -> Path:
    """30-node radial LV feeder document (JSON)."""
    return data_dir() / "feeder30.json"


def profiles_path() -> Path:
    """Hourly nominal load/PV profiles for the shipped feeder (CSV)."""
    return data_dir() / "profiles30.csv"
