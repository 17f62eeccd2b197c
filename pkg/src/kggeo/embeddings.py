"""Dense vector stores (graph-node embeddings, contextual vectors)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .kg import SnapshotFormatError

PathLike = Union[str, Path]


class MissingVectorError(KeyError):
    """The entity is known but has no vector in the store."""


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity clipped to [-1, 1]; 0.0 when either vector is zero."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(min(1.0, max(-1.0, float(a @ b) / (na * nb))))


class EmbeddingStore:
    """Fixed-dimension vectors keyed by IRI, with row-normalized copies for cosine."""

    def __init__(self, vectors: Mapping[str, Sequence[float]], dim: Optional[int] = None):
        keys = sorted(vectors)
        if dim is None:
            dim = len(vectors[keys[0]]) if keys else 0
        mat = np.zeros((len(keys), dim), dtype=float)
        for i, k in enumerate(keys):
            v = np.asarray(vectors[k], dtype=float)
            if v.shape != (dim,):
                raise ValueError(f"vector for {k} has dimension {v.shape}, expected {dim}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite vector for {k}")
            mat[i] = v
        self.dim = dim
        self.keys: List[str] = keys
        self.index: Dict[str, int] = {k: i for i, k in enumerate(keys)}
        self.matrix = mat
        norms = np.linalg.norm(mat, axis=1) if len(keys) else np.zeros(0)
        self._norms = norms
        safe = np.where(norms > 0, norms, 1.0)
        self.unit = mat / safe[:, None] if len(keys) else mat

    def __contains__(self, key: object) -> bool:
        return key in self.index

    def __len__(self) -> int:
        return len(self.keys)

    def get(self, key: str) -> Optional[np.ndarray]:
        i = self.index.get(key)
        return None if i is None else self.matrix[i]

    def similarity(self, a: str, b: str) -> Optional[float]:
        ia, ib = self.index.get(a), self.index.get(b)
        if ia is None or ib is None:
            return None
        if self._norms[ia] == 0 or self._norms[ib] == 0:
            return 0.0
        return float(min(1.0, max(-1.0, float(self.unit[ia] @ self.unit[ib]))))

    def similarities_to(self, key: str) -> np.ndarray:
        """Cosine of every stored vector against ``key``'s (row order = ``keys``)."""
        i = self.index.get(key)
        if i is None:
            raise MissingVectorError(key)
        if self._norms[i] == 0:
            return np.zeros(len(self.keys))
        sims = self.unit @ self.unit[i]
        sims[self._norms == 0] = 0.0
        return np.clip(sims, -1.0, 1.0)

    def items(self) -> Iterable[Tuple[str, np.ndarray]]:
        for k in self.keys:
            yield k, self.matrix[self.index[k]]


def load_embeddings(path: PathLike) -> EmbeddingStore:
    """Read ``dim d`` header then ``iri<TAB>v1 v2 ... vd`` lines."""
    vectors: Dict[str, List[float]] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if dim is None:
                parts = line.split()
                if len(parts) != 2 or parts[0] != "dim":
                    raise SnapshotFormatError("expected 'dim d' header", lineno, path)
                try:
                    dim = int(parts[1])
                except ValueError:
                    raise SnapshotFormatError("dimension is not an integer", lineno, path) from None
                continue
            key, sep, rest = line.partition("\t")
            if not sep:
                raise SnapshotFormatError("expected iri<TAB>vector", lineno, path)
            try:
                vec = [float(x) for x in rest.split()]
            except ValueError:
                raise SnapshotFormatError("non-numeric vector component", lineno, path) from None
            if len(vec) != dim:
                raise SnapshotFormatError(f"vector has {len(vec)} components, expected {dim}", lineno, path)
            if not all(math.isfinite(x) for x in vec):
                raise SnapshotFormatError("non-finite vector component", lineno, path)
            if key in vectors:
                raise SnapshotFormatError(f"duplicate vector for {key}", lineno, path)
            vectors[key] = vec
    return EmbeddingStore(vectors, dim or 0)


def write_embeddings(store: EmbeddingStore, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim {store.dim}\n")
        for k, v in store.items():
            fh.write(k + "\t" + " ".join(repr(float(x)) for x in v) + "\n")
