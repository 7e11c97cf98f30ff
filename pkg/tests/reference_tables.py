"""Frozen reference study results used as regression fixtures.

Two complete crowd studies over the eight methods at k in {5,10,20,30,40}:
a binary sentiment study and a four-topic study. `p` holds the aggregate
accuracy table in percent, `column_ranks`/`score_ranks` the reference ranks,
and `scores` the reference overall scores (one decimal, so reproduction is
asserted within +/-0.05). These anchor the scoring pipeline end to end.
"""

METHOD_ORDER = (
    "Random",
    "AllAttention",
    "LastAttention",
    "VanillaGradient",
    "InputXGrad",
    "IntegratedGradient",
    "DeepLIFT",
    "LIME",
)

KS = (5, 10, 20, 30, 40)

BINARY_SENTIMENT = {
    "p": [
        [25, 42, 41, 55, 54],
        [66, 74, 81, 87, 84],
        [53, 60, 73, 72, 78],
        [75, 81, 73, 80, 85],
        [46, 46, 60, 56, 52],
        [74, 81, 87, 80, 87],
        [52, 37, 60, 52, 67],
        [30, 28, 47, 48, 44],
    ],
    "column_ranks": [
        [8, 6, 8, 6, 6],
        [3, 3, 2, 1, 3],
        [4, 4, 3, 4, 4],
        [1, 1, 3, 2, 2],
        [6, 5, 5, 5, 7],
        [2, 1, 1, 2, 1],
        [5, 7, 5, 7, 5],
        [7, 8, 7, 8, 8],
    ],
    "scores": [42.9, 78.5, 66.9, 79.5, 52.1, 82.3, 53.5, 39.0],
    "score_ranks": [7, 3, 4, 2, 6, 1, 5, 8],
}

FOUR_TOPIC = {
    "p": [
        [46, 57, 70, 77, 73],
        [73, 73, 77, 79, 80],
        [56, 72, 77, 79, 81],
        [65, 72, 69, 80, 77],
        [61, 68, 76, 78, 74],
        [79, 81, 87, 79, 80],
        [61, 61, 69, 72, 77],
        [33, 61, 69, 82, 75],
    ],
    "column_ranks": [
        [7, 8, 5, 7, 8],
        [2, 2, 2, 3, 2],
        [6, 3, 2, 3, 1],
        [3, 3, 6, 2, 4],
        [4, 5, 4, 6, 7],
        [1, 1, 1, 3, 2],
        [4, 6, 6, 8, 4],
        [8, 6, 6, 1, 6],
    ],
    "scores": [64.1, 76.9, 72.8, 72.9, 71.5, 82.0, 68.1, 62.9],
    "score_ranks": [7, 2, 4, 3, 5, 1, 6, 8],
}

# Recomputing the four-topic DeepLIFT score from its own p row and the
# shared weights gives 68.1549..., which is 0.0549 from the one-decimal
# reference entry 68.1 — outside the +/-0.05 reproduction tolerance. The
# value consistent with the table's own arithmetic rounds to 68.2; the
# reference entry appears to carry a transcription/rounding slip. Kept
# here so the acceptance check can state the discrepancy explicitly.
FOUR_TOPIC_DEEPLIFT_RECOMPUTED = 68.1549
