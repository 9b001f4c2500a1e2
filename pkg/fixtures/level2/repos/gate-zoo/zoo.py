def make_gate(kind: str = "sigmoid"):
    if kind == "sigmoid":
        import math

        return lambda x: 1.0 / (1.0 + math.exp(-x))
    if kind == "clamp":
        return lambda x: min(1.0, max(0.0, x))
    raise ValueError(kind)
