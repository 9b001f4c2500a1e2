import math


class AdaptiveGate:
    def __init__(self, alpha: float = 1.0, beta: float = 0.0) -> None:
        self.alpha = alpha
        self.beta = beta

    def value(self, prev_err: float) -> float:
        return 1.0 / (1.0 + math.exp(-(self.alpha * prev_err + self.beta)))


def gate_step(alpha: float, err: float, prev_err: float, lr: float = 0.1) -> float:
    return alpha - lr * err * prev_err
