"""
Central finite-difference checks of analytic gradients.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .layers import Mode
from .network import Network, backward, forward, softmax_cross_entropy

DEFAULT_EPSILON = 1e-3
DROPOUT_SEED = 1234
# gradients this small are rounding noise on both sides
NORM_FLOOR = 1e-8


@dataclass(frozen=True)
class GradCheckResult:
    """Relative error per checked tensor, keyed ``"<layer>/<name>"``."""

    errors: Dict[str, float]

    @property
    def worst(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def passed(self, tolerance: float = 1e-3) -> bool:
        return self.worst < tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a|| + ||n||, NORM_FLOOR).

    The floor keeps tensors whose true gradient is zero, such as a conv
    bias ahead of batch norm, from scoring ~1 on pure rounding noise.
    """
    denom = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), NORM_FLOOR)
    return float(np.linalg.norm(analytic - numeric) / denom)


def _loss(net: Network, batch: np.ndarray, labels: np.ndarray) -> float:
    rng = np.random.default_rng(DROPOUT_SEED)
    logits, _ = forward(net, batch, Mode.TRAIN, rng)
    loss, _ = softmax_cross_entropy(logits, labels)
    return loss


def check_gradients(
    net: Network,
    batch: np.ndarray,
    labels: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
    max_entries: Optional[int] = 40,
    seed: int = 0,
) -> GradCheckResult:
    """Compare backward() against central differences of the Train-mode loss.

    The network is cast to float64 first; any bound error matrices stay in
    place so the check covers the injected path. Dropout masks are held
    fixed across evaluations. At most ``max_entries`` randomly chosen
    entries per tensor are perturbed.
    """
    net64 = net.astype(np.float64)
    batch64 = batch.astype(np.float64)
    _, cache = forward(net64, batch64, Mode.TRAIN, np.random.default_rng(DROPOUT_SEED))
    analytic = backward(net64, cache, labels).grads

    picker = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    for index, params in enumerate(net64.params):
        for name, tensor in params.items():
            flat = tensor.reshape(-1)
            count = flat.size
            if max_entries is not None and count > max_entries:
                chosen: List[int] = sorted(
                    picker.choice(count, size=max_entries, replace=False).tolist()
                )
            else:
                chosen = list(range(count))
            numeric = np.empty(len(chosen))
            for slot, position in enumerate(chosen):
                original = flat[position]
                flat[position] = original + epsilon
                plus = _loss(net64, batch64, labels)
                flat[position] = original - epsilon
                minus = _loss(net64, batch64, labels)
                flat[position] = original
                numeric[slot] = (plus - minus) / (2.0 * epsilon)
            expected = analytic[index][name].reshape(-1)[chosen]
            errors[f"{index}/{name}"] = relative_error(expected, numeric)
    return GradCheckResult(errors=errors)
