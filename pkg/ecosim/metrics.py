import logging
from dataclasses import asdict, dataclass, fields
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence

import networkx as nx

from . import output
from . import rng as rngs

if TYPE_CHECKING:
    from .ecosystem import Ecosystem, ExecutionRecord


log = logging.getLogger(__name__)
REAL_FORMAT = '{:.6f}'
BASELINE_SAMPLES = 100


@dataclass(frozen=True)
class MetricsRow:
    round: int
    executed_count: int
    mean_best_fitness: float
    mean_generations_to_threshold: float
    clustering_coefficient: float
    characteristic_path_length: Optional[float]
    intra_community_mass: float
    agent_count: int
    mean_sequence_length: float
    pool_diversity: float


CSV_HEADER = [f.name for f in fields(MetricsRow)]


def effective_graph(eco: 'Ecosystem', p_min: Optional[float] = None) -> nx.Graph:
    return eco.network.graph(p_min)


def clustering_coefficient(g: nx.Graph) -> float:
    if len(g) == 0:
        return 0.0
    return nx.average_clustering(g)


def largest_component(g: nx.Graph) -> List:
    if len(g) == 0:
        return []
    # Ties go to the component holding the smallest node id.
    return sorted(max(nx.connected_components(g), key=lambda c: (len(c), -min(c))))


def characteristic_path_length(g: nx.Graph) -> Optional[float]:
    component = largest_component(g)
    if len(component) < 2:
        return None
    return nx.average_shortest_path_length(g.subgraph(component))


def intra_community_mass(eco: 'Ecosystem') -> float:
    total = 0.0
    intra = 0.0
    for conn in eco.network.all_connections():
        total += conn.p
        if eco.habitats[conn.source].community == eco.habitats[conn.target].community:
            intra += conn.p
    if total == 0:
        return 0.0
    return intra / total


def random_clustering_baseline(g: nx.Graph, samples: int, rng) -> float:
    """Mean clustering of uniform random graphs with g's node and edge counts."""
    n, m = g.number_of_nodes(), g.number_of_edges()
    if n == 0 or samples < 1:
        return 0.0
    total = 0.0
    for _ in range(samples):
        sample = nx.gnm_random_graph(n, m, seed=rngs.randint(rng, 0, 2 ** 32))
        total += clustering_coefficient(sample)
    return total / samples


def registered_sequences(eco: 'Ecosystem') -> Dict[tuple, int]:
    lengths = {}
    for h in eco.network.sorted_habitats():
        for seq in h.pool.sequences:
            lengths[seq.agents] = len(seq)
    return lengths


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def snapshot_row(eco: 'Ecosystem', records: Sequence['ExecutionRecord']) -> MetricsRow:
    executed = [r for r in records if r.executed]
    g = effective_graph(eco)
    habitats = eco.network.sorted_habitats()
    return MetricsRow(
        round=eco.round,
        executed_count=len(executed),
        mean_best_fitness=_mean([r.best.fitness for r in records]),
        mean_generations_to_threshold=_mean([r.generations_used for r in executed]),
        clustering_coefficient=clustering_coefficient(g),
        characteristic_path_length=characteristic_path_length(g),
        intra_community_mass=intra_community_mass(eco),
        agent_count=eco.registry.alive_count(),
        mean_sequence_length=_mean(list(registered_sequences(eco).values())),
        pool_diversity=_mean([h.pool.distinct_descriptions() for h in habitats]),
    )


def _format_cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return REAL_FORMAT.format(value)
    return str(value)


def format_csv(rows: Sequence[MetricsRow]) -> str:
    lines = [','.join(CSV_HEADER)]
    for row in rows:
        lines.append(','.join(_format_cell(getattr(row, name)) for name in CSV_HEADER))
    return '\n'.join(lines) + '\n'


async def export_csv(rows: Sequence[MetricsRow], path: str):
    await output.write_text(path, format_csv(rows))


def bloat_stats(records: Sequence['ExecutionRecord'], max_length: int) -> Dict[str, Any]:
    lengths = [r.best.length for r in records]
    return {
        'mean_best_length': _mean(lengths),
        'mean_redundant': _mean([r.redundant for r in records]),
        'max_length': max(lengths) if lengths else 0,
        'length_cap_violations': sum(1 for n in lengths if n > max_length),
    }


def summarize(eco: 'Ecosystem') -> Dict[str, Any]:
    """Per-run summary: final metrics row, bloat and small-world statistics."""
    g = effective_graph(eco)
    clustering = clustering_coefficient(g)
    baseline = random_clustering_baseline(g, BASELINE_SAMPLES, rngs.stream(eco.seed, rngs.BASELINE))
    final = asdict(eco.metrics[-1]) if eco.metrics else None
    return {
        'seed': eco.seed,
        'rounds': eco.round,
        'final': final,
        'bloat': bloat_stats(eco.records, eco.cfg.ga.max_length),
        'small_world': {
            'clustering_coefficient': clustering,
            'random_baseline': baseline,
            'exceeds_baseline': clustering > baseline,
            'characteristic_path_length': characteristic_path_length(g),
        },
        'requests': len(eco.records),
        'executed': sum(1 for r in eco.records if r.executed),
    }
