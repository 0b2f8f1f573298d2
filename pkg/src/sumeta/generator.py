"""Genetic generation of extractive candidate-summary pools.

For each document and each driving metric, a small genetic algorithm evolves
sentence-inclusion masks under a token budget: tournament selection, uniform
crossover, per-sentence flip mutation, seeded random-drop repair of
over-budget offspring, and elitism. Fitness is the raw metric score of the
candidate against the document's reference. Per-metric pools are unioned and
de-duplicated by sentence-index set, keeping provenance of which metrics
produced each candidate.

Everything is deterministic given (config, document, metric): randomness
flows from the config seed through named sub-streams (see
:mod:`sumeta.seeding`), so runs reproduce byte-identically across platforms.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import SumetaError
from .corpus import Corpus, Document, Reference
from .metrics import NATIVE_METRICS, make_scorer
from .seeding import make_rng, rand_bool, rand_index

logger = logging.getLogger(__name__)


class GeneratorError(SumetaError):
    pass


@dataclass(frozen=True)
class Candidate:
    doc_id: str
    sentence_indices: tuple   # sorted ascending, non-empty
    candidate_id: str         # canonical "i-j-k" over the sorted indices
    token_count: int


def candidate_id_for(indices) -> str:
    return "-".join(str(i) for i in sorted(indices))


def candidate_tokens(doc: Document, cand: Candidate) -> list[str]:
    return [t for i in cand.sentence_indices for t in doc.token_cache[i]]


@dataclass(frozen=True)
class GenConfig:
    population_size: int = 100
    generations: int = 50
    mutation_rate: float | None = None  # None -> 1 / num_sentences per document
    tournament_size: int = 2
    elite_fraction: float = 0.1
    token_budget: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise GeneratorError("population_size must be >= 2")
        if self.generations < 1:
            raise GeneratorError("generations must be >= 1")
        if not (0.0 < self.elite_fraction < 1.0):
            raise GeneratorError("elite_fraction must be in (0, 1)")
        if self.token_budget < 1:
            raise GeneratorError("token_budget must be >= 1")
        if self.tournament_size < 1:
            raise GeneratorError("tournament_size must be >= 1")
        if self.mutation_rate is not None and not (0.0 <= self.mutation_rate <= 1.0):
            raise GeneratorError("mutation_rate must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "generations": self.generations,
            "mutation_rate": self.mutation_rate,
            "tournament_size": self.tournament_size,
            "elite_fraction": self.elite_fraction,
            "token_budget": self.token_budget,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        return cls(**d)


def _mask_bits(mask: int) -> list[int]:
    bits = []
    i = 0
    while mask:
        if mask & 1:
            bits.append(i)
        mask >>= 1
        i += 1
    return bits


def _repair(mask: int, rng, lengths, budget: int, feasible) -> int:
    """Drop uniformly random sentences until the candidate fits the budget.

    An empty mask, or a single sentence that alone exceeds the budget, is
    replaced by one uniformly random sentence that fits.
    """
    if mask == 0:
        return 1 << feasible[rand_index(rng, len(feasible))]
    bits = _mask_bits(mask)
    count = sum(lengths[i] for i in bits)
    while count > budget and len(bits) > 1:
        pos = rand_index(rng, len(bits))
        count -= lengths[bits[pos]]
        mask &= ~(1 << bits[pos])
        del bits[pos]
    if count > budget:
        return 1 << feasible[rand_index(rng, len(feasible))]
    return mask


def evolve_masks(lengths, budget: int, fitness_fn, cfg: GenConfig, rng):
    """Run the GA over sentence masks; returns (final population, best-per-generation).

    ``fitness_fn`` maps a mask (int) to a float score; results are memoized.
    The returned history has one entry per generation plus the final
    population's best, and is non-decreasing thanks to elitism.
    """
    n = len(lengths)
    feasible = [i for i, ln in enumerate(lengths) if ln <= budget]
    if not feasible:
        raise GeneratorError(f"no sentence fits the token budget of {budget}")
    mutation = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / n
    n_elite = max(1, int(cfg.elite_fraction * cfg.population_size))

    cache: dict[int, float] = {}

    def fit(mask: int) -> float:
        got = cache.get(mask)
        if got is None:
            got = cache[mask] = fitness_fn(mask)
        return got

    population = []
    for _ in range(cfg.population_size):
        mask = 0
        for i in range(n):
            if rand_bool(rng, 0.5):
                mask |= 1 << i
        population.append(_repair(mask, rng, lengths, budget, feasible))

    def tournament(pop) -> int:
        best = pop[rand_index(rng, len(pop))]
        for _ in range(cfg.tournament_size - 1):
            contender = pop[rand_index(rng, len(pop))]
            if (fit(contender), -contender) > (fit(best), -best):
                best = contender
        return best

    history = []
    for _ in range(cfg.generations):
        ranked = sorted(population, key=lambda m: (-fit(m), m))
        history.append(fit(ranked[0]))
        next_pop = ranked[:n_elite]
        while len(next_pop) < cfg.population_size:
            pa = tournament(population)
            pb = tournament(population)
            child = 0
            for i in range(n):
                src = pa if rand_bool(rng, 0.5) else pb
                if src & (1 << i):
                    child |= 1 << i
            for i in range(n):
                if rand_bool(rng, mutation):
                    child ^= 1 << i
            next_pop.append(_repair(child, rng, lengths, budget, feasible))
        population = next_pop

    ranked = sorted(population, key=lambda m: (-fit(m), m))
    history.append(fit(ranked[0]))
    return population, history


def generate_pool(doc: Document, ref: Reference, metric: str, cfg: GenConfig):
    """Evolve one pool of budget-respecting candidates for (document, metric).

    Only native metrics can drive fitness. The final population is
    de-duplicated by sentence-index set; at most ``population_size``
    candidates come back, sorted by index set.
    """
    if metric not in NATIVE_METRICS:
        raise GeneratorError(
            f"metric {metric!r} cannot drive fitness (external or unknown)"
        )
    scorer = make_scorer(metric, ref.tokens)
    lengths = doc.sentence_lengths
    rng = make_rng(cfg.seed, "generate", doc.id, metric)

    def fitness(mask: int) -> float:
        toks = [t for i in _mask_bits(mask) for t in doc.token_cache[i]]
        return scorer(toks)

    population, _ = evolve_masks(lengths, cfg.token_budget, fitness, cfg, rng)
    unique = sorted(set(population))
    out = []
    for mask in unique:
        bits = tuple(_mask_bits(mask))
        out.append(
            Candidate(
                doc_id=doc.id,
                sentence_indices=bits,
                candidate_id=candidate_id_for(bits),
                token_count=sum(lengths[i] for i in bits),
            )
        )
    out.sort(key=lambda c: c.sentence_indices)
    return out


@dataclass
class CandidateStore:
    """Union of per-metric pools, de-duplicated per document."""

    metrics: list
    candidates: dict   # doc_id -> list[Candidate], sorted by sentence_indices
    provenance: dict   # doc_id -> candidate_id -> sorted list of metric names
    skipped: dict      # doc_id -> error message

    def total_candidates(self) -> int:
        return sum(len(c) for c in self.candidates.values())


def _generate_doc(args):
    doc, ref, metrics, cfg = args
    pools = {}
    try:
        for metric in metrics:
            pools[metric] = generate_pool(doc, ref, metric, cfg)
    except SumetaError as exc:
        return doc.id, None, None, str(exc)
    merged: dict[tuple, Candidate] = {}
    provenance: dict[str, list] = {}
    pre_dedup = 0
    for metric in metrics:
        for cand in pools[metric]:
            pre_dedup += 1
            if cand.sentence_indices not in merged:
                merged[cand.sentence_indices] = cand
                provenance[cand.candidate_id] = []
            provenance[cand.candidate_id].append(metric)
    ordered = [merged[k] for k in sorted(merged)]
    logger.debug(
        "doc %s: %d candidates pre-dedup, %d unique", doc.id, pre_dedup, len(ordered)
    )
    return doc.id, ordered, {c: sorted(m) for c, m in provenance.items()}, None


def generate_all(corpus: Corpus, metrics, cfg: GenConfig, jobs: int = 1) -> CandidateStore:
    """Generate and merge candidate pools for every document in the corpus.

    Documents whose generation errors (e.g. a one-token reference under a
    bigram metric) are skipped and listed in ``store.skipped``. With
    ``jobs > 1`` documents are processed in parallel; output is identical to
    the sequential run because every document derives its own seed.
    """
    metrics = list(metrics)
    if not metrics:
        raise GeneratorError("need at least one native metric to generate")
    for m in metrics:
        if m not in NATIVE_METRICS:
            raise GeneratorError(f"metric {m!r} cannot drive fitness (external or unknown)")

    tasks = [
        (corpus.documents[doc_id], corpus.references[doc_id], metrics, cfg)
        for doc_id in corpus.doc_ids()
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_generate_doc, tasks))
    else:
        results = [_generate_doc(t) for t in tasks]

    store = CandidateStore(metrics=metrics, candidates={}, provenance={}, skipped={})
    for doc_id, cands, prov, error in results:
        if error is not None:
            store.skipped[doc_id] = error
            continue
        store.candidates[doc_id] = cands
        store.provenance[doc_id] = prov
    if store.skipped:
        logger.warning(
            "skipped %d document(s): %s",
            len(store.skipped),
            ", ".join(sorted(store.skipped)),
        )
    if not store.candidates:
        raise GeneratorError("every document failed generation")
    return store
