"""Bundled example data."""

from __future__ import annotations

import csv
from importlib import resources


def acm_path():
    """Path to the alcohol/cigarette/marijuana survey (2276 senior high-school students).

    Columns: race (white/other), gender (female/male) and the three yes/no
    responses alcohol, cigarettes, marijuana. Counts follow Agresti,
    *Categorical Data Analysis* (3rd ed.), Table 10.1.
    """
    return resources.files("mcdm") / "data" / "acm.csv"


def load_acm() -> dict[str, list[str]]:
    """The ACM survey as a column-name -> values mapping."""
    with resources.as_file(acm_path()) as path, open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {name: [r[name] for r in rows] for name in rows[0]}
