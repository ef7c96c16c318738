"""The discrete review-score scale shared across models, data, and metrics."""

SCORE_LOW = 1
SCORE_HIGH = 5
SCORE_COUNT = SCORE_HIGH - SCORE_LOW + 1


def score_to_index(score: int) -> int:
    return score - SCORE_LOW


def index_to_score(index: int) -> int:
    return index + SCORE_LOW
