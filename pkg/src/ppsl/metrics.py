"""Set-overlap scores between a predicted and a true community."""

from dataclasses import dataclass


@dataclass(frozen=True)
class PairScores:
    precision: float
    recall: float
    fscore: float
    jaccard: float


def score_pair(pred, truth) -> PairScores:
    """Precision, recall, F-score and Jaccard index of two node sets.

    The true set must be nonempty; an empty prediction scores all zeros.
    """
    pred = set(int(v) for v in pred)
    truth = set(int(v) for v in truth)
    if not truth:
        raise ValueError("true community must be nonempty")
    if not pred:
        return PairScores(0.0, 0.0, 0.0, 0.0)
    hit = len(pred & truth)
    precision = hit / len(pred)
    recall = hit / len(truth)
    fscore = 0.0 if hit == 0 else 2 * precision * recall / (precision + recall)
    jaccard = hit / len(pred | truth)
    return PairScores(precision, recall, fscore, jaccard)


def fscore(pred, truth) -> float:
    return score_pair(pred, truth).fscore
