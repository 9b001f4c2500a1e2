def late_fusion(left: float, right: float, weight: float = 0.5) -> float:
    return weight * left + (1.0 - weight) * right
