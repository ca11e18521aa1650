"""
Generates the zero-free benchmark fixtures: a Dirichlet-multinomial truth and
the zero-free version of the sparse 56x985 stand-in.
"""
import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.config import FIXTURES_DIR, config  # noqa: E402
from core.countlab import make_zero_free, simulate_dm, sparsity, synthetic_sparse_counts  # noqa: E402
from core.schemas import DMSpec  # noqa: E402

os.makedirs(FIXTURES_DIR, exist_ok=True)
rng = np.random.default_rng(config.BASE_SEED)

# Dirichlet-multinomial truth, 100 samples x 60 parts
alpha = rng.uniform(0.5, 5.0, size=60).tolist()
dm_counts = simulate_dm(DMSpec(alpha=alpha, depth=100_000, n=100), rng)
dm_counts = make_zero_free(dm_counts, 100_000, rng)
dm_path = os.path.join(FIXTURES_DIR, "dm_truth.csv")
dm_counts.save(dm_path)
print(f"Dirichlet-multinomial truth saved to: {dm_path}")

# Sparse stand-in and its zero-free counterpart
sparse = synthetic_sparse_counts(rng=rng)
sparse_path = os.path.join(FIXTURES_DIR, "sparse_counts.csv")
sparse.save(sparse_path)
print(f"Sparse counts ({sparsity(sparse):.1%} zeros) saved to: {sparse_path}")

nozero = make_zero_free(sparse, config.ZERO_FREE_DEPTH, rng)
nozero_path = os.path.join(FIXTURES_DIR, "sparse_nozero.csv")
nozero.save(nozero_path)
print(f"Zero-free counts saved to: {nozero_path}")
