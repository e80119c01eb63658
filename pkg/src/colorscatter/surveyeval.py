"""Color-judgment survey machinery: stimuli, comparison sets, evaluation.

A stimulus is a pair of color tiles; a comparison set shows two such pairs
and a judge (human or algorithm) picks the pair whose tiles are more
similar.  This module selects stimulus pairs on which two embedding
algorithms disagree, builds comparison sets, scores algorithmic choices
against human judgment files, and generates seeded synthetic judgments for
testing.

Human judgment files are inputs only; nothing here collects data.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import colorspace
from .analysis import average_ranks, cosine_similarity, proportion_test, spearman
from .datagen import BlockSpec, ImageRecord, gen_blocks
from .errors import DataError


def tile_hex(color) -> str:
    r, g, b = (int(c) for c in color)
    return f"{r:02X}{g:02X}{b:02X}"


def hex_tile(s: str) -> tuple[int, int, int]:
    if len(s) != 6:
        raise DataError(f"bad color hex {s!r}")
    return tuple(int(s[i:i + 2], 16) for i in (0, 2, 4))


@dataclass(frozen=True)
class TilePair:
    pair_id: str
    tile1: tuple[int, int, int]
    tile2: tuple[int, int, int]
    is_benchmark: bool = False


@dataclass(frozen=True)
class ComparisonSet:
    set_id: str
    pair_a: str
    pair_b: str


@dataclass(frozen=True)
class JudgmentRecord:
    set_id: str
    respondent_id: str
    choice: str  # "A" or "B"


def render_tile_blocks(pairs, spec: BlockSpec | None = None) -> list[ImageRecord]:
    """Render every distinct tile color as a block image, id = color hex."""
    spec = spec or BlockSpec()
    colors = []
    seen = set()
    for p in pairs:
        for tile in (p.tile1, p.tile2):
            h = tile_hex(tile)
            if h not in seen:
                seen.add(h)
                colors.append(tile)
    template = gen_blocks(1, spec)[0]
    records = []
    for color in colors:
        px = template.pixels.copy()
        x0, y0, x1, y1 = template.mask
        px[y0:y1, x0:x1] = np.asarray(color, dtype=np.uint8)
        records.append(ImageRecord(tile_hex(color), px, template.mask, "tile"))
    return records


def embeddings_by_id(embeddings) -> dict:
    return {e.image_id: e.vector for e in embeddings}


def embedding_similarity_fn(vec_by_hex: dict):
    """Pair similarity = cosine similarity of the two tiles' embeddings."""
    def sim(pair: TilePair) -> float:
        try:
            v1 = vec_by_hex[tile_hex(pair.tile1)]
            v2 = vec_by_hex[tile_hex(pair.tile2)]
        except KeyError as exc:
            raise DataError(f"missing embedding for tile {exc}") from exc
        return cosine_similarity(v1, v2)
    return sim


def oracle_similarity_fn():
    """Pair similarity = negated Euclidean distance of tile colors in JzAzBz."""
    def sim(pair: TilePair) -> float:
        c1 = colorspace.rgb_to_jzazbz(np.asarray(pair.tile1, dtype=np.uint8))
        c2 = colorspace.rgb_to_jzazbz(np.asarray(pair.tile2, dtype=np.uint8))
        return -float(np.linalg.norm(c1 - c2))
    return sim


@dataclass(frozen=True)
class StimulusSelection:
    pairs: list
    degenerate_fallback: bool  # both algorithms ranked all candidates identically


def select_stimuli(sim_fn_a, sim_fn_b, candidate_pairs, n_disagree: int,
                   n_benchmark: int, seed: int = 0) -> StimulusSelection:
    """Pick disagreement and benchmark stimuli from candidate tile pairs.

    Each candidate gets a disagreement score |rank under A - rank under B|
    (average-tie ranks of pair similarity across all candidates).  The top
    n_disagree scores become disagreement pairs; n_benchmark benchmark pairs
    are drawn uniformly (seeded) from the lowest-score decile.  If the two
    algorithms rank candidates identically the selection degenerates to a
    seeded uniform draw, and is flagged as such.
    """
    candidates = list(candidate_pairs)
    n = len(candidates)
    decile = max(1, n // 10)
    if n_disagree + n_benchmark > n or n_benchmark > decile:
        raise DataError(f"insufficient candidates: {n} for {n_disagree}+{n_benchmark} "
                        f"(benchmark decile {decile})")
    sims_a = np.array([sim_fn_a(p) for p in candidates])
    sims_b = np.array([sim_fn_b(p) for p in candidates])
    scores = np.abs(average_ranks(sims_a) - average_ranks(sims_b))
    rng = np.random.default_rng(seed)

    if np.all(scores == 0):
        picks = rng.choice(n, size=n_disagree + n_benchmark, replace=False)
        disagree = picks[:n_disagree]
        bench = picks[n_disagree:]
        fallback = True
    else:
        order = np.argsort(-scores, kind="stable")
        disagree = order[:n_disagree]
        low = order[::-1][:decile]
        low = low[~np.isin(low, disagree)]
        if len(low) < n_benchmark:
            raise DataError("insufficient low-disagreement candidates for benchmarks")
        bench = rng.choice(low, size=n_benchmark, replace=False)
        fallback = False

    chosen = []
    for i in disagree:
        p = candidates[i]
        chosen.append(TilePair(p.pair_id, p.tile1, p.tile2, is_benchmark=False))
    for i in bench:
        p = candidates[i]
        chosen.append(TilePair(p.pair_id, p.tile1, p.tile2, is_benchmark=True))
    return StimulusSelection(pairs=chosen, degenerate_fallback=fallback)


def make_sets(pairs, seed: int = 0, mode: str = "replication") -> list[ComparisonSet]:
    """Assemble comparison sets of two tile pairs each.

    replication mode pairs every stimulus with a distinct random partner
    (a fixed-point-free permutation), so n stimuli give n sets and each
    stimulus appears exactly twice, once in each slot.  strict mode is a
    random perfect matching: n/2 sets, each stimulus appearing once.
    """
    pairs = list(pairs)
    n = len(pairs)
    if n < 2:
        raise DataError("need at least 2 pairs")
    rng = np.random.default_rng(seed)
    if mode == "replication":
        partner = rng.permutation(n)
        while np.any(partner == np.arange(n)):
            partner = rng.permutation(n)
        return [ComparisonSet(f"set_{i:05d}", pairs[i].pair_id, pairs[partner[i]].pair_id)
                for i in range(n)]
    if mode == "strict":
        if n % 2:
            raise DataError(f"strict mode needs an even pair count, got {n}")
        order = rng.permutation(n)
        return [ComparisonSet(f"set_{k:05d}", pairs[order[2 * k]].pair_id,
                              pairs[order[2 * k + 1]].pair_id)
                for k in range(n // 2)]
    raise DataError(f"unknown set-construction mode {mode!r}")


@dataclass(frozen=True)
class AlgorithmJudgments:
    choices: dict        # set_id -> "A" | "B"
    tie_sets: list       # sets decided by the break-toward-A rule


def judge_sets(sets, pairs_by_id, sim_fn) -> AlgorithmJudgments:
    """Algorithmic choice per set: the pair with larger similarity wins.

    Exact ties break toward A and are counted.
    """
    choices = {}
    ties = []
    for s in sets:
        sa = sim_fn(pairs_by_id[s.pair_a])
        sb = sim_fn(pairs_by_id[s.pair_b])
        if sa == sb:
            ties.append(s.set_id)
            choices[s.set_id] = "A"
        else:
            choices[s.set_id] = "A" if sa > sb else "B"
    return AlgorithmJudgments(choices=choices, tie_sets=ties)


@dataclass(frozen=True)
class MajorityJudgments:
    choices: dict         # set_id -> majority choice, ties excluded
    vote_fraction: dict   # set_id -> fraction voting with the majority
    vote_counts: dict     # set_id -> (votes_a, votes_b)
    tie_sets: list
    empty_sets: list


def majority_judgments(records, sets) -> MajorityJudgments:
    """Per-set modal human choice and its vote fraction.

    Sets with an exact vote tie or no votes are excluded from the majority
    mapping but counted.
    """
    known = {s.set_id for s in sets}
    votes: dict[str, Counter] = {s.set_id: Counter() for s in sets}
    for rec in records:
        if rec.set_id not in known:
            raise DataError(f"judgment references unknown set {rec.set_id!r}")
        if rec.choice not in ("A", "B"):
            raise DataError(f"{rec.set_id}: bad choice {rec.choice!r}")
        votes[rec.set_id][rec.choice] += 1
    choices, fractions, counts = {}, {}, {}
    ties, empty = [], []
    for set_id, c in votes.items():
        a, b = c["A"], c["B"]
        counts[set_id] = (a, b)
        if a + b == 0:
            empty.append(set_id)
        elif a == b:
            ties.append(set_id)
        else:
            choices[set_id] = "A" if a > b else "B"
            fractions[set_id] = max(a, b) / (a + b)
    return MajorityJudgments(choices=choices, vote_fraction=fractions,
                             vote_counts=counts, tie_sets=sorted(ties),
                             empty_sets=sorted(empty))


def _subset_sets(sets, pairs_by_id, subset: str):
    def n_bench(s):
        return (pairs_by_id[s.pair_a].is_benchmark
                + pairs_by_id[s.pair_b].is_benchmark)
    if subset == "all":
        return list(sets)
    if subset == "benchmark":
        return [s for s in sets if n_bench(s) >= 1]
    if subset == "non_benchmark":
        return [s for s in sets if n_bench(s) == 0]
    raise DataError(f"unknown subset {subset!r}")


@dataclass(frozen=True)
class AccuracyResult:
    fraction: float
    p_value: float
    matches: int
    n: int
    level: str
    subset: str


def accuracy(algorithm: AlgorithmJudgments, human, sets, pairs_by_id,
             level: str = "majority", subset: str = "all",
             judgments=None) -> AccuracyResult:
    """Share of human judgments the algorithm reproduces, with a two-tailed
    proportion test against chance (0.5).

    level "majority" compares against per-set majority choices (tied or
    empty sets are skipped); level "individual" compares against every
    single judgment record and requires judgments.
    """
    eligible = _subset_sets(sets, pairs_by_id, subset)
    if level == "majority":
        ids = [s.set_id for s in eligible if s.set_id in human.choices]
        if not ids:
            raise DataError(f"no evaluable sets in subset {subset!r}")
        matches = sum(algorithm.choices[i] == human.choices[i] for i in ids)
        n = len(ids)
    elif level == "individual":
        if judgments is None:
            raise DataError("individual-level accuracy needs the judgment records")
        in_subset = {s.set_id for s in eligible}
        trials = [r for r in judgments if r.set_id in in_subset]
        if not trials:
            raise DataError(f"no judgments in subset {subset!r}")
        matches = sum(algorithm.choices[r.set_id] == r.choice for r in trials)
        n = len(trials)
    else:
        raise DataError(f"unknown level {level!r}")
    return AccuracyResult(fraction=matches / n, p_value=proportion_test(matches, n, 0.5),
                          matches=matches, n=n, level=level, subset=subset)


def agreement_strength_correlation(sets, pairs_by_id, sim_fn, human):
    """Correlate embedding-similarity margins with human consensus strength.

    For each non-benchmark set with a defined majority: the difference in
    similarity between the majority-chosen and minority pair, against the
    majority vote fraction.  Returns (rho, p, deltas, fractions).
    """
    usable = [s for s in _subset_sets(sets, pairs_by_id, "non_benchmark")
              if s.set_id in human.choices]
    if len(usable) < 3:
        raise DataError(f"need at least 3 usable sets, got {len(usable)}")
    deltas, fractions = [], []
    for s in usable:
        sa = sim_fn(pairs_by_id[s.pair_a])
        sb = sim_fn(pairs_by_id[s.pair_b])
        maj = human.choices[s.set_id]
        deltas.append(sa - sb if maj == "A" else sb - sa)
        fractions.append(human.vote_fraction[s.set_id])
    rho, p = spearman(deltas, fractions)
    return rho, p, np.asarray(deltas), np.asarray(fractions)


@dataclass(frozen=True)
class Disagreement:
    set_id: str
    algorithm_choice: str
    human_majority: str
    pair_a: TilePair
    pair_b: TilePair


def perceptual_error_pairs(sets, pairs_by_id, algorithm: AlgorithmJudgments,
                           human) -> list[Disagreement]:
    """Sets where the algorithm contradicts the human majority."""
    out = []
    for s in sets:
        if s.set_id not in human.choices:
            continue
        if algorithm.choices[s.set_id] != human.choices[s.set_id]:
            out.append(Disagreement(s.set_id, algorithm.choices[s.set_id],
                                    human.choices[s.set_id],
                                    pairs_by_id[s.pair_a], pairs_by_id[s.pair_b]))
    return out


def synth_judgments(sets, pairs_by_id, sim_fn, votes_per_set: int = 12,
                    noise_scale: float | None = None, seed: int = 0) -> list[JudgmentRecord]:
    """Seeded synthetic judgments driven by a similarity function.

    Noiseless (noise_scale None): every respondent votes with sim_fn.
    Otherwise each vote is A with probability sigmoid(delta / noise_scale),
    delta being the A-minus-B similarity margin.
    """
    rng = np.random.default_rng(seed)
    records = []
    for s in sets:
        delta = sim_fn(pairs_by_id[s.pair_a]) - sim_fn(pairs_by_id[s.pair_b])
        if noise_scale is None:
            votes = ["A" if delta >= 0 else "B"] * votes_per_set
        else:
            p_a = 1.0 / (1.0 + np.exp(-delta / noise_scale))
            votes = np.where(rng.random(votes_per_set) < p_a, "A", "B").tolist()
        records.extend(JudgmentRecord(s.set_id, f"r{k:03d}", v)
                       for k, v in enumerate(votes))
    return records


# ---------------------------------------------------------------------------
# file formats

def write_stimuli_csv(path, pairs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_id", "tile1_hex", "tile2_hex", "is_benchmark"])
        for p in pairs:
            w.writerow([p.pair_id, tile_hex(p.tile1), tile_hex(p.tile2),
                        int(p.is_benchmark)])


def read_stimuli_csv(path) -> list[TilePair]:
    pairs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pairs.append(TilePair(row["pair_id"], hex_tile(row["tile1_hex"]),
                                  hex_tile(row["tile2_hex"]),
                                  row["is_benchmark"].strip().lower() in ("1", "true")))
    if not pairs:
        raise DataError(f"no stimuli in {path}")
    return pairs


def write_sets_csv(path, sets) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set_id", "pair_a_id", "pair_b_id"])
        for s in sets:
            w.writerow([s.set_id, s.pair_a, s.pair_b])


def read_sets_csv(path) -> list[ComparisonSet]:
    sets = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sets.append(ComparisonSet(row["set_id"], row["pair_a_id"], row["pair_b_id"]))
    if not sets:
        raise DataError(f"no sets in {path}")
    return sets


def write_judgments_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set_id", "respondent_id", "choice"])
        for r in records:
            w.writerow([r.set_id, r.respondent_id, r.choice])


def read_judgments_csv(path) -> list[JudgmentRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(JudgmentRecord(row["set_id"], row["respondent_id"],
                                          row["choice"].strip()))
    if not records:
        raise DataError(f"no judgments in {path}")
    return records


def write_results_json(path, results: dict) -> None:
    with open(path, "w") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
