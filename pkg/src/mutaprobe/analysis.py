"""Ledger aggregation: pass rates, flip accounting, position structure, significance.

Everything here is a pure recomputation over outcome records plus the corpus;
nothing is cached between calls, and every reported fraction keeps its
numerator and denominator so a scan of the raw ledger reproduces the bundle
exactly. Mutant records are matched to their original by (task_id, model_id);
the mutated token position is recovered from the prompt_ref key.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Corpus, round_half_up
from .errors import MissingOriginal, MissingTokenization, NoOriginals, ValidationError
from .hashing import sha256_file
from .ledger import ORIGINAL_REF, OutcomeRecord, canonical_json, load_outcomes
from .stats import ContingencyTable2x2, benjamini_hochberg, fisher_exact_two_sided

METRICS = ("func", "func_sec")
ANOMALY_POLICIES = ("first", "majority")


@dataclass(frozen=True)
class CellKey:
    model_id: str
    language: str
    cwe: str

    def __post_init__(self):
        if not (self.model_id and self.language and self.cwe):
            raise ValidationError("cell key components must be non-empty")


@dataclass(frozen=True)
class FlipSummary:
    key: CellKey
    metric: str
    n_mutations: int
    n_flips_total: int
    n_improvements: int
    n_deteriorations: int
    n_security_driven: int
    # denominators split by the original's status under this metric
    n_mutations_orig_pass: int
    n_mutations_orig_fail: int

    def __post_init__(self):
        if self.n_improvements + self.n_deteriorations != self.n_flips_total:
            raise ValidationError("flip directions must partition the flips")
        if self.n_mutations_orig_pass + self.n_mutations_orig_fail != self.n_mutations:
            raise ValidationError("status denominators must partition the mutations")


@dataclass(frozen=True)
class PositionEntry:
    position: int
    n_orig_pass: int
    n_hurt: int
    n_orig_fail: int
    n_help: int

    @property
    def frac_hurt(self) -> float | None:
        return self.n_hurt / self.n_orig_pass if self.n_orig_pass else None

    @property
    def frac_help(self) -> float | None:
        return self.n_help / self.n_orig_fail if self.n_orig_fail else None


@dataclass(frozen=True)
class PositionProfile:
    model_id: str
    metric: str
    axis: str  # "absolute" | "normalized_20_bins"
    entries: tuple[PositionEntry, ...]


@dataclass(frozen=True)
class Fraction2:
    """A fraction that remembers where it came from."""

    numerator: int
    denominator: int

    @property
    def value(self) -> float | None:
        return self.numerator / self.denominator if self.denominator else None


@dataclass(frozen=True)
class SignificanceRecord:
    model_id: str
    language: str
    cwe: str
    task_id: str
    prompt_ref: str
    metric: str
    mut_pass: int
    mut_n: int
    base_pass: int
    base_n: int
    p: float
    q: float
    significant: bool


def metric_label(functional: bool, secure: bool, metric: str) -> bool:
    if metric == "func":
        return functional
    if metric == "func_sec":
        return functional and secure
    raise ValidationError(f"unknown metric {metric!r}")


def collapse_bits(
    outcomes: list[OutcomeRecord], policy: str = "first"
) -> dict[tuple[str, str, str], tuple[bool, bool]]:
    """One (functional, secure) pair per (task, model, prompt_ref) group.

    "first" keeps the lowest sample index; "majority" takes a per-bit
    majority with ties resolved toward the first sample. T=0 groups are
    normally unanimous, so the policy only matters for anomalies.
    """
    if policy not in ANOMALY_POLICIES:
        raise ValidationError(f"unknown anomaly policy {policy!r}")
    groups: dict[tuple[str, str, str], list[OutcomeRecord]] = {}
    for rec in outcomes:
        groups.setdefault((rec.task_id, rec.model_id, rec.prompt_ref), []).append(rec)
    out = {}
    for key, recs in groups.items():
        recs = sorted(recs, key=lambda r: r.sample_index)
        if policy == "first" or len(recs) == 1:
            out[key] = (recs[0].functional, recs[0].secure)
        else:
            half = len(recs) / 2
            n_func = sum(r.functional for r in recs)
            n_sec = sum(r.secure for r in recs)
            func = n_func > half or (n_func == half and recs[0].functional)
            sec = n_sec > half or (n_sec == half and recs[0].secure)
            out[key] = (func, sec)
    return out


def parse_token_index(prompt_ref: str) -> int:
    kind, token_index, _variant = prompt_ref.split(":")
    del kind
    return int(token_index)


def _pairs(
    outcomes: list[OutcomeRecord], policy: str
) -> list[tuple[str, str, str, tuple[bool, bool], tuple[bool, bool]]]:
    """(task_id, model_id, prompt_ref, original bits, mutant bits) per mutant."""
    bits = collapse_bits(outcomes, policy)
    originals = {(t, m): b for (t, m, ref), b in bits.items() if ref == ORIGINAL_REF}
    if not originals:
        raise NoOriginals("ledger has no original-prompt records")
    out = []
    for (task_id, model_id, ref), mutant in bits.items():
        if ref == ORIGINAL_REF:
            continue
        if (task_id, model_id) not in originals:
            raise MissingOriginal(task_id, model_id)
        out.append((task_id, model_id, ref, originals[(task_id, model_id)], mutant))
    out.sort(key=lambda x: (x[1], x[0], x[2]))
    return out


def is_security_driven(orig: tuple[bool, bool], mut: tuple[bool, bool]) -> bool:
    """Functional label preserved, secure bit changed, on functional code.

    Both sides must be functional: a secure-bit change on nonfunctional code
    means nothing under the joint pass criterion.
    """
    return orig[0] and mut[0] and orig[1] != mut[1]


def baseline_pass_rates(
    outcomes: list[OutcomeRecord], corpus: Corpus, policy: str = "first"
) -> dict[tuple[str, str], dict]:
    """Per (model, language): original-prompt pass percentages with counts."""
    bits = collapse_bits(outcomes, policy)
    cells: dict[tuple[str, str], dict] = {}
    seen_original = False
    for (task_id, model_id, ref), (func, sec) in bits.items():
        if ref != ORIGINAL_REF:
            continue
        seen_original = True
        language = corpus.by_id[task_id].language
        cell = cells.setdefault(
            (model_id, language), {"n_tasks": 0, "func_pass": 0, "func_sec_pass": 0}
        )
        cell["n_tasks"] += 1
        cell["func_pass"] += int(func)
        cell["func_sec_pass"] += int(func and sec)
    if not seen_original:
        raise NoOriginals("ledger has no original-prompt records")
    for cell in cells.values():
        cell["func_pct"] = round_half_up(1000.0 * cell["func_pass"] / cell["n_tasks"]) / 10.0
        cell["func_sec_pct"] = round_half_up(1000.0 * cell["func_sec_pass"] / cell["n_tasks"]) / 10.0
    return cells


def flip_table(
    outcomes: list[OutcomeRecord],
    corpus: Corpus,
    policy: str = "first",
    group_by: str = "cwe",
) -> list[FlipSummary]:
    """Flip counts per (model, language, group, metric).

    group_by="cwe" pools a CWE's task variants (the default denominator
    convention); group_by="task" keys each task separately, in which case
    the summary key's cwe slot carries the task_id.
    """
    if group_by not in ("cwe", "task"):
        raise ValidationError(f"unknown grouping {group_by!r}")
    acc: dict[tuple[str, str, str, str], dict] = {}
    for task_id, model_id, _ref, orig, mut in _pairs(outcomes, policy):
        task = corpus.by_id[task_id]
        group = task.cwe if group_by == "cwe" else task.task_id
        sec_driven = is_security_driven(orig, mut)
        for metric in METRICS:
            o = metric_label(*orig, metric)
            m = metric_label(*mut, metric)
            cell = acc.setdefault(
                (model_id, task.language, group, metric),
                {"n": 0, "imp": 0, "det": 0, "sec": 0, "orig_pass": 0, "orig_fail": 0},
            )
            cell["n"] += 1
            cell["orig_pass" if o else "orig_fail"] += 1
            if not o and m:
                cell["imp"] += 1
            elif o and not m:
                cell["det"] += 1
            cell["sec"] += int(sec_driven)
    out = []
    for (model_id, language, group, metric) in sorted(acc):
        c = acc[(model_id, language, group, metric)]
        out.append(
            FlipSummary(
                key=CellKey(model_id=model_id, language=language, cwe=group),
                metric=metric,
                n_mutations=c["n"],
                n_flips_total=c["imp"] + c["det"],
                n_improvements=c["imp"],
                n_deteriorations=c["det"],
                n_security_driven=c["sec"],
                n_mutations_orig_pass=c["orig_pass"],
                n_mutations_orig_fail=c["orig_fail"],
            )
        )
    return out


def affected_cwe_fraction(
    summaries: list[FlipSummary], metric: str, tau: int
) -> dict[tuple[str, str], Fraction2]:
    """Per (model, language): fraction of CWEs with >= tau qualifying flips.

    metric "func" / "func_sec" thresholds that metric's total flips;
    "security" thresholds the security-driven count instead.
    """
    if tau < 1:
        raise ValidationError("tau must be >= 1")
    if metric not in METRICS and metric != "security":
        raise ValidationError(f"unknown metric {metric!r}")
    cells: dict[tuple[str, str], list[int]] = {}
    for s in summaries:
        if metric == "security":
            if s.metric != "func_sec":
                continue
            n = s.n_security_driven
        else:
            if s.metric != metric:
                continue
            n = s.n_flips_total
        cells.setdefault((s.key.model_id, s.key.language), []).append(n)
    return {
        cell: Fraction2(numerator=sum(c >= tau for c in counts), denominator=len(counts))
        for cell, counts in cells.items()
    }


def effect_sizes(summaries: list[FlipSummary], metric: str) -> dict[tuple[str, str], dict]:
    """Per (model, language): mean per-CWE flip fractions, split by original status.

    Improvement fractions average over CWEs whose original failed the metric
    (denominator: mutations of those originals); deterioration over CWEs
    whose original passed. A mean over zero CWEs is reported as None.
    """
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}")
    cells: dict[tuple[str, str], dict] = {}
    for s in summaries:
        if s.metric != metric:
            continue
        cell = cells.setdefault(
            (s.key.model_id, s.key.language), {"imp_fracs": [], "det_fracs": []}
        )
        if s.n_mutations_orig_fail:
            cell["imp_fracs"].append(s.n_improvements / s.n_mutations_orig_fail)
        if s.n_mutations_orig_pass:
            cell["det_fracs"].append(s.n_deteriorations / s.n_mutations_orig_pass)
    return {
        cell: {
            "improvement_mean": sum(v["imp_fracs"]) / len(v["imp_fracs"]) if v["imp_fracs"] else None,
            "improvement_cwe_count": len(v["imp_fracs"]),
            "deterioration_mean": sum(v["det_fracs"]) / len(v["det_fracs"]) if v["det_fracs"] else None,
            "deterioration_cwe_count": len(v["det_fracs"]),
        }
        for cell, v in cells.items()
    }


def position_profiles(
    outcomes: list[OutcomeRecord],
    token_counts: dict[str, int],
    metric: str = "func_sec",
    policy: str = "first",
    bins: int = 20,
) -> list[PositionProfile]:
    """Per model, flip fractions by mutated-token position, both axes.

    The absolute axis runs to the 99th-percentile prompt length of the
    tasks present; the normalized axis maps index/token_count into
    equal-width bins. Denominators are split by the original's status.
    """
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}")
    per_model: dict[str, list[tuple[str, int, bool, bool]]] = {}
    for task_id, model_id, ref, orig, mut in _pairs(outcomes, policy):
        if task_id not in token_counts:
            raise MissingTokenization(task_id)
        ti = parse_token_index(ref)
        o = metric_label(*orig, metric)
        m = metric_label(*mut, metric)
        per_model.setdefault(model_id, []).append((task_id, ti, o, m))
    profiles = []
    for model_id in sorted(per_model):
        rows = per_model[model_id]
        lengths = [token_counts[task_id] for task_id in {r[0] for r in rows}]
        cap = float(np.quantile(np.asarray(lengths, dtype=float), 0.99))
        for axis in ("absolute", "normalized_20_bins"):
            buckets: dict[int, dict] = {}
            for task_id, ti, o, m in rows:
                if axis == "absolute":
                    if ti > cap:
                        continue
                    pos = ti
                else:
                    pos = min(int(ti * bins / token_counts[task_id]), bins - 1)
                b = buckets.setdefault(pos, {"op": 0, "hurt": 0, "of": 0, "help": 0})
                if o:
                    b["op"] += 1
                    b["hurt"] += int(not m)
                else:
                    b["of"] += 1
                    b["help"] += int(m)
            entries = tuple(
                PositionEntry(
                    position=pos,
                    n_orig_pass=b["op"],
                    n_hurt=b["hurt"],
                    n_orig_fail=b["of"],
                    n_help=b["help"],
                )
                for pos, b in sorted(buckets.items())
            )
            profiles.append(PositionProfile(model_id=model_id, metric=metric, axis=axis, entries=entries))
    return profiles


def position_heatmap(
    outcomes: list[OutcomeRecord],
    corpus: Corpus,
    metric: str = "func_sec",
    policy: str = "first",
) -> dict[tuple[str, str, str, int], Fraction2]:
    """Per (model, language, cwe, position): fraction of that token's mutations
    that flip the metric. Positions with no eligible mutations are simply
    absent, which is what distinguishes them from zero-flip positions.
    """
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}")
    acc: dict[tuple[str, str, str, int], list[int]] = {}
    for task_id, model_id, ref, orig, mut in _pairs(outcomes, policy):
        task = corpus.by_id[task_id]
        pos = parse_token_index(ref)
        flip = metric_label(*orig, metric) != metric_label(*mut, metric)
        cell = acc.setdefault((model_id, task.language, task.cwe, pos), [0, 0])
        cell[0] += int(flip)
        cell[1] += 1
    return {k: Fraction2(numerator=v[0], denominator=v[1]) for k, v in sorted(acc.items())}


def _sample_counts(outcomes: list[OutcomeRecord]) -> dict[tuple[str, str, str], dict]:
    groups: dict[tuple[str, str, str], dict] = {}
    for rec in outcomes:
        g = groups.setdefault(
            (rec.task_id, rec.model_id, rec.prompt_ref), {"n": 0, "func": 0, "func_sec": 0}
        )
        g["n"] += 1
        g["func"] += int(rec.label_func)
        g["func_sec"] += int(rec.label_func_sec)
    return groups


def significance_at_temperature(
    outcomes: list[OutcomeRecord], corpus: Corpus, alpha: float = 0.05
) -> list[SignificanceRecord]:
    """Per mutation and metric: Fisher two-sided against the pooled original,
    BH-corrected within each (model, language, metric) slice; significant
    means q < alpha.
    """
    groups = _sample_counts(outcomes)
    baselines = {(t, m): g for (t, m, ref), g in groups.items() if ref == ORIGINAL_REF}
    if not baselines:
        raise NoOriginals("ledger has no original-prompt records")
    rows = []
    for (task_id, model_id, ref), g in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0], kv[0][2])):
        if ref == ORIGINAL_REF:
            continue
        if (task_id, model_id) not in baselines:
            raise MissingOriginal(task_id, model_id)
        base = baselines[(task_id, model_id)]
        task = corpus.by_id[task_id]
        for metric in METRICS:
            table = ContingencyTable2x2(
                a=g[metric], b=g["n"] - g[metric], c=base[metric], d=base["n"] - base[metric]
            )
            rows.append(
                {
                    "model_id": model_id,
                    "language": task.language,
                    "cwe": task.cwe,
                    "task_id": task_id,
                    "prompt_ref": ref,
                    "metric": metric,
                    "mut_pass": g[metric],
                    "mut_n": g["n"],
                    "base_pass": base[metric],
                    "base_n": base["n"],
                    "p": fisher_exact_two_sided(table).p_value,
                }
            )
    out: list[SignificanceRecord | None] = [None] * len(rows)
    slices: dict[tuple[str, str, str], list[int]] = {}
    for i, r in enumerate(rows):
        slices.setdefault((r["model_id"], r["language"], r["metric"]), []).append(i)
    for indices in slices.values():
        _, qs = benjamini_hochberg([rows[i]["p"] for i in indices], alpha)
        for i, q in zip(indices, qs):
            out[i] = SignificanceRecord(**rows[i], q=q, significant=q < alpha)
    return [r for r in out if r is not None]


# ------------------------------------------------------------- report bundle


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str | float | int:
    return "" if x is None else x


def write_analysis_bundle(
    outdir: str | Path,
    corpus: Corpus,
    outcomes_t0_path: str | Path,
    token_counts: dict[str, int],
    taus: tuple[int, ...] = (1, 10, 50),
    alpha: float = 0.05,
    outcomes_sampled_path: str | Path | None = None,
    policy: str = "first",
    group_by: str = "cwe",
    config: dict | None = None,
) -> dict:
    """Write the full CSV bundle plus a manifest; returns the manifest dict.

    One CSV per table or figure family, each fraction stored with its
    numerator and denominator. The manifest records source ledger hashes,
    the effective configuration, and the tool version, and nothing else
    (no timestamps), so identical inputs give identical bundles.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    outcomes = load_outcomes(outcomes_t0_path)

    rates = baseline_pass_rates(outcomes, corpus, policy)
    _write_csv(
        outdir / "baseline_rates.csv",
        ["model_id", "language", "n_tasks", "func_pass", "func_sec_pass", "func_pct", "func_sec_pct"],
        [
            [m, lang, c["n_tasks"], c["func_pass"], c["func_sec_pass"], c["func_pct"], c["func_sec_pct"]]
            for (m, lang), c in sorted(rates.items())
        ],
    )

    summaries = flip_table(outcomes, corpus, policy, group_by)
    _write_csv(
        outdir / "flip_summaries.csv",
        [
            "model_id",
            "language",
            "cwe",
            "metric",
            "n_mutations",
            "n_flips_total",
            "n_improvements",
            "n_deteriorations",
            "n_security_driven",
            "n_mutations_orig_pass",
            "n_mutations_orig_fail",
        ],
        [
            [
                s.key.model_id,
                s.key.language,
                s.key.cwe,
                s.metric,
                s.n_mutations,
                s.n_flips_total,
                s.n_improvements,
                s.n_deteriorations,
                s.n_security_driven,
                s.n_mutations_orig_pass,
                s.n_mutations_orig_fail,
            ]
            for s in summaries
        ],
    )

    affected_rows = []
    for metric in ("func", "func_sec", "security"):
        for tau in taus:
            for (m, lang), frac in sorted(affected_cwe_fraction(summaries, metric, tau).items()):
                affected_rows.append([m, lang, metric, tau, frac.numerator, frac.denominator, _fmt(frac.value)])
    _write_csv(
        outdir / "affected_fraction.csv",
        ["model_id", "language", "metric", "tau", "numerator", "denominator", "fraction"],
        affected_rows,
    )

    effect_rows = []
    for metric in METRICS:
        for (m, lang), e in sorted(effect_sizes(summaries, metric).items()):
            effect_rows.append(
                [
                    m,
                    lang,
                    metric,
                    _fmt(e["improvement_mean"]),
                    e["improvement_cwe_count"],
                    _fmt(e["deterioration_mean"]),
                    e["deterioration_cwe_count"],
                ]
            )
    _write_csv(
        outdir / "effect_sizes.csv",
        [
            "model_id",
            "language",
            "metric",
            "improvement_mean",
            "improvement_cwe_count",
            "deterioration_mean",
            "deterioration_cwe_count",
        ],
        effect_rows,
    )

    for metric in METRICS:
        profile_rows = {"absolute": [], "normalized_20_bins": []}
        for prof in position_profiles(outcomes, token_counts, metric, policy):
            for e in prof.entries:
                profile_rows[prof.axis].append(
                    [
                        prof.model_id,
                        prof.metric,
                        e.position,
                        e.n_orig_pass,
                        e.n_hurt,
                        _fmt(e.frac_hurt),
                        e.n_orig_fail,
                        e.n_help,
                        _fmt(e.frac_help),
                    ]
                )
        header = [
            "model_id",
            "metric",
            "position",
            "n_orig_pass",
            "n_hurt",
            "frac_hurt",
            "n_orig_fail",
            "n_help",
            "frac_help",
        ]
        _write_csv(outdir / f"position_absolute_{metric}.csv", header, profile_rows["absolute"])
        _write_csv(outdir / f"position_normalized_{metric}.csv", header, profile_rows["normalized_20_bins"])

    for metric in METRICS:
        heat = position_heatmap(outcomes, corpus, metric, policy)
        _write_csv(
            outdir / f"heatmap_{metric}.csv",
            ["model_id", "language", "cwe", "position", "n_flips", "n_mutations", "fraction"],
            [
                [m, lang, cwe, pos, f.numerator, f.denominator, _fmt(f.value)]
                for (m, lang, cwe, pos), f in heat.items()
            ],
        )

    sources = {"outcomes_t0": sha256_file(outcomes_t0_path)}
    if outcomes_sampled_path is not None:
        sampled = load_outcomes(outcomes_sampled_path)
        sig = significance_at_temperature(sampled, corpus, alpha)
        _write_csv(
            outdir / "significance.csv",
            [
                "model_id",
                "language",
                "cwe",
                "task_id",
                "prompt_ref",
                "metric",
                "mut_pass",
                "mut_n",
                "base_pass",
                "base_n",
                "p",
                "q",
                "significant",
            ],
            [
                [
                    r.model_id,
                    r.language,
                    r.cwe,
                    r.task_id,
                    r.prompt_ref,
                    r.metric,
                    r.mut_pass,
                    r.mut_n,
                    r.base_pass,
                    r.base_n,
                    repr(r.p),
                    repr(r.q),
                    int(r.significant),
                ]
                for r in sig
            ],
        )
        sources["outcomes_sampled"] = sha256_file(outcomes_sampled_path)

    manifest = {
        "sources": sources,
        "config": {
            "taus": list(taus),
            "alpha": alpha,
            "anomaly_policy": policy,
            "group_by": group_by,
            **(config or {}),
        },
        "tool_version": __version__,
    }
    (outdir / "manifest.json").write_text(canonical_json(manifest) + "\n", encoding="utf-8")
    return manifest
