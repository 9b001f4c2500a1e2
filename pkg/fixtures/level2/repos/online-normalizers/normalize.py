class RunningScale:
    def __init__(self, decay: float = 0.95) -> None:
        self.decay = decay
        self.value = 1.0

    def update(self, err: float) -> float:
        self.value = self.decay * self.value + (1.0 - self.decay) * abs(err)
        return self.value


def self_normalize(step: float, scale: float) -> float:
    return step / max(1.0, scale)
