import numpy as np

from utils.rng import (
    DOMAIN_AGENT,
    DOMAIN_AGENT_CYCLE,
    DOMAIN_POPULATION,
    agent_stream,
    derive_stream,
    population_stream,
)


def first_raw(gen: np.random.Generator) -> int:
    return int(gen.bit_generator.random_raw())


class TestDeriveStream:

    def test_same_tuple_same_stream(self):
        a = derive_stream(42, 3, 17, 5).standard_normal(100)
        b = derive_stream(42, 3, 17, 5).standard_normal(100)
        assert np.array_equal(a, b)

    def test_each_index_changes_stream(self):
        base = derive_stream(42, 3, 17, 5).random(8)
        for args in [(43, 3, 17, 5), (42, 4, 17, 5), (42, 3, 18, 5), (42, 3, 17, 6)]:
            assert not np.array_equal(base, derive_stream(*args).random(8))

    def test_domains_are_separate(self):
        draws = {
            domain: derive_stream(7, 0, 0, 0, domain=domain).random(4).tobytes()
            for domain in (DOMAIN_AGENT_CYCLE, DOMAIN_AGENT, DOMAIN_POPULATION)
        }
        assert len(set(draws.values())) == 3
        assert population_stream(7, 0).random() == derive_stream(7, 0, 0, 0, DOMAIN_POPULATION).random()
        assert agent_stream(7, 2, 9).random() == derive_stream(7, 2, 9, 0, DOMAIN_AGENT).random()

    def test_no_first_output_collisions(self):
        outputs = {
            first_raw(derive_stream(2024, r, a, c))
            for r in range(10) for a in range(100) for c in range(10)
        }
        assert len(outputs) == 10_000

    def test_uniform_is_top_53_bits(self):
        raw = first_raw(derive_stream(1, 2, 3, 4))
        assert derive_stream(1, 2, 3, 4).random() == (raw >> 11) * 2.0 ** -53

    def test_seed_is_masked_to_64_bits(self):
        a = derive_stream((1 << 64) + 5, 0, 0, 0).random(3)
        b = derive_stream(5, 0, 0, 0).random(3)
        assert np.array_equal(a, b)
