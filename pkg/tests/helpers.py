import numpy as np

from entity_refine.masks import BinaryMask, ScoredMask


def scored(bitmap, score, prompt_id=None, level="object"):
    return ScoredMask(BinaryMask.from_dense(bitmap), score, level, prompt_id)


def rect(h, w, r0, c0, r1, c1):
    out = np.zeros((h, w), dtype=bool)
    out[r0:r1 + 1, c0:c1 + 1] = True
    return out
