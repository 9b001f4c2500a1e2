import random


def stream_batches(count: int, seed: int = 0):
    rng = random.Random(seed)
    for _ in range(count):
        yield rng.random(), rng.random()
