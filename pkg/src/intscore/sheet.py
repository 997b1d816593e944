"""Plain-text scoring sheets: the human-facing form of a model.

The sheet shows one row per term with its points, a tally box, and the
decision line "PREDICT <label> IF SCORE > t", where the threshold t is the
negated internal intercept (score > t with points only is the same test as
intercept + points >= 1).
"""

from __future__ import annotations

import re

from .model import ScoringSystem

_ROW = re.compile(r"^\s*(\d+)\.\s+(.+?)\s+(-?\d+)\s+point(?:s)?\b")
_HEADER = re.compile(r"^PREDICT\s+(.+?)\s+IF\s+SCORE\s+>\s+(-?\d+)\s*$")


def format_sheet(model: ScoringSystem, outcome_label: str = "POSITIVE OUTCOME") -> str:
    threshold = -model.intercept
    rows = sorted(zip(model.terms, model.term_names),
                  key=lambda it: (-it[0][1], it[0][0]))
    tally = f"ADD POINTS FROM ROWS 1-{len(rows)}" if len(rows) > 1 \
        else "ADD POINTS FROM ROW 1"
    name_width = max([len(n) for _, n in rows] + ([len(tally)] if rows else []))\
        if rows else 10
    width = max(len(f"PREDICT {outcome_label} IF SCORE > {threshold}"),
                name_width + 28)

    lines = [f"PREDICT {outcome_label} IF SCORE > {threshold}", "=" * width]
    for i, ((_, coef), name) in enumerate(rows, start=1):
        unit = "point " if abs(coef) == 1 else "points"
        op = " " if i == 1 else "+"
        lines.append(f"{i:>2}.  {name:<{name_width}}  {coef:>4} {unit}  {op} ......")
    if rows:
        lines.append("-" * width)
        lines.append(f"     {tally:<{name_width}}  {'SCORE':^11}  = ......")
    lines.append("=" * width)
    return "\n".join(lines) + "\n"


def parse_sheet(text: str, feature_names=None) -> ScoringSystem:
    """Rebuild a model from its printed sheet.

    With feature_names, term positions are resolved against it; otherwise
    the terms are densely indexed in printed order.
    """
    threshold = None
    entries = []
    for line in text.splitlines():
        header = _HEADER.match(line.strip())
        if header:
            threshold = int(header.group(2))
            continue
        row = _ROW.match(line)
        if row:
            entries.append((row.group(2).strip(), int(row.group(3))))
    if threshold is None:
        raise ValueError("no decision line found in sheet")

    intercept = -threshold
    if feature_names is None:
        names = tuple(name for name, _ in entries)
        terms = tuple((j, coef) for j, (_, coef) in enumerate(entries))
        return ScoringSystem(intercept, terms, names, len(entries))
    index = {name: j for j, name in enumerate(feature_names)}
    missing = [name for name, _ in entries if name not in index]
    if missing:
        raise ValueError(f"sheet names not in feature list: {missing}")
    terms = tuple((index[name], coef) for name, coef in entries)
    names = tuple(name for name, _ in entries)
    order = sorted(range(len(terms)), key=lambda i: terms[i][0])
    return ScoringSystem(intercept, tuple(terms[i] for i in order),
                         tuple(names[i] for i in order), len(feature_names))
