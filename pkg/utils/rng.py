"""
Counter-based random streams.

Every (replication, agent, cycle) triple owns an independent stream of the
Philox4x64-10 generator. The stream key is (master_seed, domain) and the
256-bit counter starts at (0, cycle, agent, replication); draws advance only
the lowest counter word, so streams never overlap within 2⁶⁴ blocks.

Draw procedure (numpy Generator): a uniform double is (u64 >> 11)·2⁻⁵³;
normals use numpy's 256-step ziggurat on the same 64-bit words.
"""
import numpy as np

UINT64_MASK = (1 << 64) - 1

# Stream domains, kept apart through the second key word.
DOMAIN_AGENT_CYCLE = 0
DOMAIN_AGENT = 1
DOMAIN_POPULATION = 2


def derive_stream(master_seed: int, replication_index: int, agent_index: int,
                  cycle_index: int, domain: int = DOMAIN_AGENT_CYCLE) -> np.random.Generator:
    """
    Independent generator for one index tuple.

    Args:
        master_seed: 64-bit unsigned experiment seed
        replication_index: Replication number
        agent_index: Agent id
        cycle_index: Cycle number
        domain: Stream family (agent-cycle, agent-level or population)

    Returns:
        numpy Generator over a Philox bit generator
    """
    key = np.array([master_seed & UINT64_MASK, domain & UINT64_MASK], dtype=np.uint64)
    counter = np.array(
        [0, cycle_index & UINT64_MASK, agent_index & UINT64_MASK, replication_index & UINT64_MASK],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def population_stream(master_seed: int, replication_index: int) -> np.random.Generator:
    return derive_stream(master_seed, replication_index, 0, 0, domain=DOMAIN_POPULATION)


def agent_stream(master_seed: int, replication_index: int, agent_index: int) -> np.random.Generator:
    """Stream for draws made once per agent (outside options)."""
    return derive_stream(master_seed, replication_index, agent_index, 0, domain=DOMAIN_AGENT)
