"""
Synthetic block-diagonal covariance instances.

S = blkdiag(1_{p1 x p1}, ..., 1_{p1 x p1}) + sigma * U U', with U a p x p
matrix of standard normals and sigma calibrated so that 1.25 times the
largest off-block entry of sigma * U U' equals one, the smallest nonzero
entry of the block-diagonal part.
"""
import logging
from dataclasses import dataclass, asdict
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import block_diag

from covthresh.compgraph import VertexPartition, critical_lambda_sweep
from covthresh.covmodel import SymMatrix
from covthresh.exceptions import DegenerateDrawError, InputError

logger = logging.getLogger(__name__)

NOISE_RULES = ('1.25',)
MAX_DRAWS = 10


@dataclass(frozen=True)
class SynthSpec:
    K: int
    p1: int
    seed: int = 0
    noise_rule: str = '1.25'

    def __post_init__(self):
        if self.K < 1 or self.p1 < 1:
            raise InputError(f"K and p1 must be at least 1, got K={self.K}, p1={self.p1}")
        if self.noise_rule not in NOISE_RULES:
            raise InputError(f"unknown noise rule {self.noise_rule!r}")

    @property
    def p(self) -> int:
        return self.K * self.p1

    @property
    def ratio(self) -> float:
        return float(self.noise_rule)


@dataclass(frozen=True)
class SynthInstance:
    S: SymMatrix
    sigma: float
    lambda_min: float
    lambda_max: float
    lambda_I: float
    lambda_II: float
    seed_used: int

    def to_dict(self) -> dict:
        """Sidecar written next to S.csv by the synth command."""
        out = asdict(self)
        del out['S']
        return out


def planted_partition(spec: SynthSpec) -> VertexPartition:
    return VertexPartition.from_blocks(
        spec.p, [range(k * spec.p1, (k + 1) * spec.p1) for k in range(spec.K)]
    )


def _noise_reference(gram: NDArray, labels: NDArray) -> float:
    """Largest |entry| the calibration is pinned to."""
    off_block = labels[:, None] != labels[None, :]
    if off_block.any():
        return float(np.max(np.abs(gram[off_block])))
    # a single block has no off-block entries; fall back to its off-diagonal
    off_diagonal = ~np.eye(gram.shape[0], dtype=bool)
    if off_diagonal.any():
        return float(np.max(np.abs(gram[off_diagonal])))
    return float(abs(gram[0, 0]))


def planted_interval(S, spec: SynthSpec) -> Optional[Tuple[float, float]]:
    """
    (lambda_min, lambda_max): the smallest and largest critical values at
    which thresholding S gives exactly the planted partition, or None when
    no critical value does.
    """
    labels = planted_partition(spec).labels()
    lam_min = lam_max = None
    for lam, ds, batch in critical_lambda_sweep(S):
        # no cross-block edge merged yet, so K components means the planted ones
        if ds.count == spec.K:
            if lam_max is None:
                lam_max = lam
            lam_min = lam
        if batch.size and np.any(labels[batch[:, 0]] != labels[batch[:, 1]]):
            break
    if lam_max is None:
        return None
    return lam_min, lam_max


def _draw(spec: SynthSpec, seed: int) -> Tuple[NDArray, float]:
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((spec.p, spec.p))
    gram = U @ U.T
    gram = (gram + gram.T) / 2.0
    reference = _noise_reference(gram, planted_partition(spec).labels())
    sigma = 1.0 / (spec.ratio * reference)
    blocks = block_diag(*[np.ones((spec.p1, spec.p1))] * spec.K)
    return blocks + sigma * gram, sigma


def generate(spec: SynthSpec) -> SynthInstance:
    """
    Draw an instance and locate the lambda interval that recovers the planted blocks.

    A draw whose thresholded graph never shows the planted partition is
    discarded and redrawn with the next seed, up to MAX_DRAWS attempts.

    Raises:
        DegenerateDrawError: if every attempt is degenerate.
    """
    for attempt in range(MAX_DRAWS):
        seed = spec.seed + attempt
        values, sigma = _draw(spec, seed)
        S = SymMatrix(values)
        interval = planted_interval(S, spec)
        if interval is None:
            logger.warning("seed %d: planted partition never appears; redrawing", seed)
            continue
        lam_min, lam_max = interval
        logger.info("K=%d p1=%d seed=%d: sigma=%.6g, planted on [%.6g, %.6g]",
                    spec.K, spec.p1, seed, sigma, lam_min, lam_max)
        return SynthInstance(
            S=S,
            sigma=sigma,
            lambda_min=lam_min,
            lambda_max=lam_max,
            lambda_I=(lam_min + lam_max) / 2.0,
            lambda_II=lam_max,
            seed_used=seed,
        )
    raise DegenerateDrawError(
        f"no draw out of {MAX_DRAWS} (seeds {spec.seed}..{spec.seed + MAX_DRAWS - 1}) "
        f"recovers the planted partition for K={spec.K}, p1={spec.p1}"
    )
