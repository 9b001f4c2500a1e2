import math


def temperature_scale(logits: list[float], temperature: float) -> list[float]:
    scaled = [l / temperature for l in logits]
    top = max(scaled)
    exps = [math.exp(s - top) for s in scaled]
    total = sum(exps)
    return [e / total for e in exps]


class ConfidenceHead:
    def __init__(self, temperature: float = 1.5) -> None:
        self.temperature = temperature

    def confidence(self, logits: list[float]) -> float:
        return max(temperature_scale(logits, self.temperature))
