"""Per-CWE aggregation and the grouped AUC comparison.

CWEs are grouped into two hand-labeled families: input-handling fixes
("I", structural changes to how untrusted data flows) and secure-defaults
fixes ("D", a single literal or keyword choice). The report compares the
families' per-CWE mean AUCs with a percentile bootstrap on each mean and
a one-sided Mann-Whitney test of InputHandling > SecureDefaults.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import UnknownCwe, ValidationError
from ..stats import mann_whitney_u_greater, percentile_bootstrap_ci
from .search import CellResult

GROUP_NAMES = {"I": "InputHandling", "D": "SecureDefaults"}


def load_grouping(path: str | Path) -> dict[str, str]:
    grouping = json.loads(Path(path).read_text(encoding="utf-8"))
    for cwe, code in grouping.items():
        if code not in GROUP_NAMES:
            raise ValidationError(f"grouping for {cwe!r} must be 'I' or 'D', got {code!r}")
    return grouping


def per_cwe_mean(results: list[CellResult], target: str) -> dict[str, float]:
    """Mean held-out AUC per CWE over that target's admitted, evaluated cells."""
    acc: dict[str, list[float]] = {}
    for r in results:
        if r.target != target or r.test_auc is None:
            continue
        acc.setdefault(r.cwe, []).append(r.test_auc)
    return {cwe: sum(v) / len(v) for cwe, v in sorted(acc.items())}


def group_report(
    per_cwe_aucs: dict[str, float],
    grouping: dict[str, str],
    seed: int,
    resamples: int = 1000,
    level: float = 0.95,
    strict: bool = False,
) -> dict:
    """Group means with bootstrap half-widths and the one-sided rank test.

    CWEs absent from the grouping file are listed as ungrouped and excluded
    from both group statistics; strict mode makes that an error instead.
    """
    values: dict[str, list[float]] = {"InputHandling": [], "SecureDefaults": []}
    ungrouped = []
    for cwe in sorted(per_cwe_aucs):
        code = grouping.get(cwe)
        if code is None:
            ungrouped.append(cwe)
            continue
        values[GROUP_NAMES[code]].append(per_cwe_aucs[cwe])
    if ungrouped and strict:
        raise UnknownCwe(f"no group assignment for: {', '.join(ungrouped)}")

    groups = {}
    for name, vals in values.items():
        entry: dict = {"n": len(vals), "values": vals}
        if vals:
            entry["mean"] = sum(vals) / len(vals)
            _, _, half = percentile_bootstrap_ci(vals, resamples, level, seed)
            entry["ci_half_width"] = half
        groups[name] = entry

    report: dict = {"groups": groups, "ungrouped": ungrouped}
    if values["InputHandling"] and values["SecureDefaults"]:
        mw = mann_whitney_u_greater(values["InputHandling"], values["SecureDefaults"])
        report["mann_whitney"] = {
            "U": mw.statistic,
            "p": mw.p_value,
            "method": mw.method,
            "alternative": "InputHandling > SecureDefaults",
        }
    return report
