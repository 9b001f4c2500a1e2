class ChannelMixer:
    def __init__(self, weight: float = 0.5) -> None:
        self.weight = weight

    def mix(self, left: float, right: float) -> float:
        return self.weight * left + (1.0 - self.weight) * right
