import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

DTYPE = np.complex128
# Singular values at or below RANK_EPS * s[0] are numerical zeros and always dropped.
RANK_EPS = 10 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class Tensor:
    """
    Dense tensor whose legs carry unique string labels.

    The data is stored as a C-ordered (row-major) complex array whose axes
    follow `labels`, so the serialized byte stream is fixed by the leg order.

    Attributes:
        labels (tuple): Leg labels, one per axis.
        data (np.ndarray): Complex entries, shape equal to the leg dimensions.

    Example:
        >>> t = Tensor.from_array(np.eye(2), ["i", "j"])
        >>> t.legs
        [('i', 2), ('j', 2)]
    """
    labels: Tuple[str, ...]
    data: np.ndarray

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"Leg labels must be unique, got {labels}")
        data = np.ascontiguousarray(self.data, dtype=DTYPE)
        if data.ndim != len(labels):
            raise ValueError(f"Tensor with labels {labels} needs {len(labels)} axes, got {data.ndim}")
        if any(dim < 1 for dim in data.shape):
            raise ValueError(f"Leg dimensions must be positive, got {data.shape}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data, labels: Sequence[str]) -> "Tensor":
        return cls(tuple(labels), np.asarray(data))

    @property
    def legs(self) -> List[Tuple[str, int]]:
        return list(zip(self.labels, self.data.shape))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def dim(self, label: str) -> int:
        return self.data.shape[self.axis(label)]

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"Leg '{label}' not found in {self.labels}")

    def transpose(self, labels: Sequence[str]) -> "Tensor":
        """
        Returns a tensor with its legs reordered to `labels`.

        Raises:
            ValueError: If `labels` is not a permutation of the current labels.
        """
        if sorted(labels) != sorted(self.labels):
            raise ValueError(f"{tuple(labels)} is not a permutation of {self.labels}")
        order = [self.axis(label) for label in labels]
        return Tensor(tuple(labels), np.transpose(self.data, order))

    def relabel(self, mapping: Dict[str, str]) -> "Tensor":
        return Tensor(tuple(mapping.get(label, label) for label in self.labels), self.data)

    def to_array(self, labels: Optional[Sequence[str]] = None) -> np.ndarray:
        """Returns the raw array, optionally with axes ordered as `labels`."""
        if labels is None:
            return self.data
        return self.transpose(labels).data

    def scale(self, factor: complex) -> "Tensor":
        return Tensor(self.labels, factor * self.data)

    def __str__(self) -> str:
        return f"Tensor(legs={self.legs})"


@dataclass(frozen=True, eq=False)
class SvdResult:
    """
    Truncated singular value decomposition of a tensor.

    Attributes:
        u: Left isometry with legs (left legs..., bond_label).
        s: Retained singular values, descending.
        vh: Right isometry with legs (bond_label, right legs...).
        discarded_weight: Dropped squared singular values over the total.
        bond_label: Label of the new bond leg.
    """
    u: Tensor
    s: np.ndarray
    vh: Tensor
    discarded_weight: float
    bond_label: str = "bond"


def contract(a: Tensor, b: Tensor, pairs: Iterable[Tuple[str, str]]) -> Tensor:
    """
    Contracts `a` with `b` over the paired legs.

    Args:
        a: First tensor.
        b: Second tensor.
        pairs: (leg of a, leg of b) pairs summed over.

    Returns:
        Tensor whose legs are the unpaired legs of `a` followed by those of `b`.

    Raises:
        ValueError: If a leg is missing, dimensions differ, or result labels collide.

    Example:
        >>> x = Tensor.from_array([[0, 1], [1, 0]], ["i", "j"])
        >>> y = Tensor.from_array([[1, 0], [0, -1]], ["j", "k"])
        >>> contract(x, y, [("j", "j")]).data.real
        array([[ 0., -1.],
               [ 1.,  0.]])
    """
    pairs = list(pairs)
    axes_a, axes_b = [], []
    for leg_a, leg_b in pairs:
        ia, ib = a.axis(leg_a), b.axis(leg_b)
        if a.shape[ia] != b.shape[ib]:
            raise ValueError(
                f"Dimension mismatch contracting '{leg_a}' ({a.shape[ia]}) with '{leg_b}' ({b.shape[ib]})")
        axes_a.append(ia)
        axes_b.append(ib)
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ValueError(f"A leg appears twice in the contraction pairs {pairs}")

    free_a = [label for i, label in enumerate(a.labels) if i not in axes_a]
    free_b = [label for i, label in enumerate(b.labels) if i not in axes_b]
    labels = free_a + free_b
    if len(set(labels)) != len(labels):
        raise ValueError(f"Contraction would produce duplicate leg labels {labels}")
    data = np.tensordot(a.data, b.data, axes=(axes_a, axes_b))
    return Tensor(tuple(labels), data)


def _split_legs(t: Tensor, left_legs: Iterable[str]) -> Tuple[List[str], List[str]]:
    left_set = set(left_legs)
    for label in left_set:
        t.axis(label)
    if not left_set or len(left_set) == len(t.labels):
        raise ValueError(f"left_legs must be a nonempty proper subset of {t.labels}, got {sorted(left_set)}")
    left = [label for label in t.labels if label in left_set]
    right = [label for label in t.labels if label not in left_set]
    return left, right


def _matrix_svd(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        logger.warning("gesdd did not converge, falling back to gesvd")
        return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")


def truncation_rank(s: np.ndarray, chi_max: Optional[int], cutoff: float) -> int:
    """
    Number of singular values kept: at most `chi_max`, none below `cutoff` * s[0], at least one.
    """
    if s.size == 0:
        return 0
    keep = int(np.count_nonzero(s > RANK_EPS * s[0]))
    if cutoff > 0:
        keep = min(keep, int(np.count_nonzero(s >= cutoff * s[0])))
    if chi_max is not None:
        keep = min(keep, int(chi_max))
    return max(keep, 1)


def discarded_weight(s: np.ndarray, keep: int) -> float:
    total = float(np.sum(s ** 2))
    if total == 0.0:
        return 0.0
    return float(np.sum(s[keep:] ** 2)) / total


def svd(t: Tensor,
        left_legs: Iterable[str],
        chi_max: Optional[int] = None,
        cutoff: float = 0.0,
        bond_label: str = "bond") -> SvdResult:
    """
    Splits `t` into u * diag(s) * vh across `left_legs` with truncation.

    Args:
        t: Tensor to decompose.
        left_legs: Legs that go to `u`; order follows `t`.
        chi_max: Maximal number of singular values kept (None for no cap).
        cutoff: Singular values below cutoff * (largest value) are dropped.
        bond_label: Label of the new bond on both factors.

    Returns:
        SvdResult with descending `s` and the relative discarded weight.

    Raises:
        ValueError: If `left_legs` is empty or contains every leg.
    """
    if chi_max is not None and chi_max < 1:
        raise ValueError(f"chi_max must be positive, got {chi_max}")
    if cutoff < 0:
        raise ValueError(f"cutoff must be nonnegative, got {cutoff}")
    left, right = _split_legs(t, left_legs)
    if bond_label in t.labels:
        raise ValueError(f"Bond label '{bond_label}' already used by {t.labels}")

    arranged = t.transpose(left + right).data
    left_shape = arranged.shape[:len(left)]
    right_shape = arranged.shape[len(left):]
    matrix = arranged.reshape(int(np.prod(left_shape)), int(np.prod(right_shape)))
    u, s, vh = _matrix_svd(matrix)

    keep = truncation_rank(s, chi_max, cutoff)
    weight = discarded_weight(s, keep)
    u = u[:, :keep].reshape(left_shape + (keep,))
    vh = vh[:keep, :].reshape((keep,) + right_shape)
    return SvdResult(u=Tensor(tuple(left) + (bond_label,), u),
                     s=s[:keep].copy(),
                     vh=Tensor((bond_label,) + tuple(right), vh),
                     discarded_weight=weight,
                     bond_label=bond_label)


def qr(t: Tensor, left_legs: Iterable[str], bond_label: str = "bond") -> Tuple[Tensor, Tensor]:
    """
    Economic QR decomposition across `left_legs`; q is a left isometry.
    """
    left, right = _split_legs(t, left_legs)
    arranged = t.transpose(left + right).data
    left_shape = arranged.shape[:len(left)]
    right_shape = arranged.shape[len(left):]
    matrix = arranged.reshape(int(np.prod(left_shape)), int(np.prod(right_shape)))
    q, r = scipy.linalg.qr(matrix, mode="economic")
    k = q.shape[1]
    return (Tensor(tuple(left) + (bond_label,), q.reshape(left_shape + (k,))),
            Tensor((bond_label,) + tuple(right), r.reshape((k,) + right_shape)))


def conjugate(t: Tensor) -> Tensor:
    """Elementwise complex conjugate; labels are preserved."""
    return Tensor(t.labels, np.conj(t.data))


def norm(t: Tensor) -> float:
    """Frobenius norm."""
    return float(np.linalg.norm(t.data.ravel()))
