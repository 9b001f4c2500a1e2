class RecurrentGate:
    def __init__(self, value: float = 0.5, lr: float = 0.05) -> None:
        self.value = value
        self.lr = lr

    def step(self, err: float, diff: float) -> float:
        self.value = min(1.0, max(0.0, self.value - self.lr * err * diff))
        return self.value
