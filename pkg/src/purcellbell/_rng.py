import numpy as np


def spawn(seed, n: int) -> list[np.random.SeedSequence]:
    """n independent child seeds from an int, None, or an existing SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n)
