def expected_calibration_error(confidences, correct, bins: int = 10) -> float:
    total = len(confidences)
    if total == 0:
        return 0.0
    error = 0.0
    for b in range(bins):
        lo, hi = b / bins, (b + 1) / bins
        members = [i for i, c in enumerate(confidences) if lo <= c < hi]
        if not members:
            continue
        acc = sum(1 for i in members if correct[i]) / len(members)
        conf = sum(confidences[i] for i in members) / len(members)
        error += len(members) / total * abs(acc - conf)
    return error
