class GatedFusion:
    """Scalar-gate fusion of two aligned channels."""

    def __init__(self, gate: float = 0.5) -> None:
        self.gate = gate

    def fuse(self, left: float, right: float) -> float:
        return self.gate * left + (1.0 - self.gate) * right


def gate_update(gate: float, err: float, diff: float, lr: float = 0.05) -> float:
    return min(1.0, max(0.0, gate - lr * err * diff))
