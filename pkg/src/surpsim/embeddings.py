"""Token representations: embedding tables, mean pooling, cosine distance,
and sigmoid activation vectors."""

from __future__ import annotations

import math
import warnings
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import DataError
from .tokens import DEFAULT_EOS, Tokens


def cosine_distance(x: np.ndarray, y: np.ndarray) -> float:
    """1 - cos(x, y), in [0, 2]. Zero-norm inputs are rejected."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        raise ValueError("cosine distance is undefined for zero-norm vectors")
    d = 1.0 - float(np.dot(x, y)) / (nx * ny)
    return min(max(d, 0.0), 2.0)


def logistic(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def default_eos_vector(vectors: Dict[str, np.ndarray]) -> np.ndarray:
    """Deterministic unit vector orthogonalized against the table mean.

    Used when no end-of-string row is supplied; the empty string still needs
    a representation for first-symbol distances.
    """
    dim = len(next(iter(vectors.values())))
    mean = np.mean(list(vectors.values()), axis=0)
    norm = float(np.linalg.norm(mean))
    candidates = [np.ones(dim) / math.sqrt(dim)]
    candidates += [np.eye(dim)[i] for i in range(dim)]
    if norm > 0:
        unit_mean = mean / norm
        for cand in candidates:
            residual = cand - float(np.dot(cand, unit_mean)) * unit_mean
            rnorm = float(np.linalg.norm(residual))
            if rnorm > 1e-9:
                return residual / rnorm
    return candidates[0]


class EmbeddingTable:
    """Immutable token -> vector map with a dedicated end-of-string vector."""

    def __init__(self, vectors: Dict[str, Sequence[float]],
                 eos_vector: Optional[Sequence[float]] = None):
        if not vectors:
            raise DataError("embedding table is empty")
        self._vectors: Dict[str, np.ndarray] = {}
        dim = None
        for token, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1:
                raise DataError(f"embedding for {token!r} is not a vector")
            if dim is None:
                dim = arr.shape[0]
            elif arr.shape[0] != dim:
                raise DataError(
                    f"embedding for {token!r} has dim {arr.shape[0]}, expected {dim}")
            if float(np.linalg.norm(arr)) == 0.0:
                raise DataError(f"embedding for {token!r} has zero norm")
            arr.setflags(write=False)
            self._vectors[token] = arr
        self.dim = dim
        if eos_vector is None:
            eos = default_eos_vector(self._vectors)
        else:
            eos = np.asarray(eos_vector, dtype=np.float64)
            if eos.shape != (dim,):
                raise DataError(f"eos vector has dim {eos.shape}, expected ({dim},)")
            if float(np.linalg.norm(eos)) == 0.0:
                raise DataError("eos vector has zero norm")
        eos.setflags(write=False)
        self.eos_vector = eos

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def tokens(self):
        return self._vectors.keys()

    def vector(self, token: str) -> np.ndarray:
        try:
            return self._vectors[token]
        except KeyError:
            raise DataError(f"no embedding for token {token!r}") from None

    def represent(self, tokens: Tokens) -> np.ndarray:
        """Mean-pooled representation; the empty string maps to the eos vector."""
        if not tokens:
            return self.eos_vector
        if len(tokens) == 1:
            return self.vector(tokens[0])
        return np.mean([self.vector(t) for t in tokens], axis=0)

    def activations(self, token: str) -> np.ndarray:
        """Elementwise logistic of the token embedding, strictly inside (0, 1)."""
        return logistic(self.vector(token))


def represent(table: EmbeddingTable, tokens: Sequence[str]) -> np.ndarray:
    return table.represent(tuple(tokens))


def load_embeddings(path, eos_token: str = DEFAULT_EOS) -> EmbeddingTable:
    """Parse a TSV of ``token<TAB>floats`` rows.

    An optional first line ``#dim N`` declares the dimensionality. A row for
    ``eos_token`` becomes the end-of-string vector. Duplicate tokens keep the
    last row, with a warning; ragged rows fail with their line number.
    """
    vectors: Dict[str, np.ndarray] = {}
    declared_dim = None
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if lineno == 1 and line.startswith("#dim"):
                try:
                    declared_dim = int(line.split()[1])
                except (IndexError, ValueError):
                    raise DataError(f"{path}:1: malformed #dim header") from None
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: expected token<TAB>values")
            token, _, rest = line.partition("\t")
            try:
                values = np.asarray([float(x) for x in rest.split()], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric embedding value") from None
            if values.size == 0:
                raise DataError(f"{path}:{lineno}: empty embedding row")
            if dim is None:
                dim = int(values.size)
                if declared_dim is not None and dim != declared_dim:
                    raise DataError(
                        f"{path}:{lineno}: row has dim {dim}, header declares {declared_dim}")
            elif values.size != dim:
                raise DataError(
                    f"{path}:{lineno}: row has dim {values.size}, expected {dim}")
            if token in vectors:
                warnings.warn(f"{path}:{lineno}: duplicate token {token!r}, last row wins")
            vectors[token] = values
    if not vectors:
        raise DataError(f"embedding file {path} contains no rows")
    eos_vec = vectors.pop(eos_token, None)
    if not vectors:
        raise DataError(f"embedding file {path} only defines the eos vector")
    return EmbeddingTable(vectors, eos_vector=eos_vec)


class RemoteEmbeddings:
    """Representation provider backed by a remote /v1/embed endpoint.

    Vectors are opaque: the server owns tokenization and pooling. Items are
    sent as space-joined wire tokens; the empty item returns the
    end-of-string embedding.
    """

    def __init__(self, backend):
        self._backend = backend
        self._cache: Dict[Tokens, np.ndarray] = {}
        self._dim: Optional[int] = None

    @property
    def dim(self) -> int:
        if self._dim is None:
            self.represent(())
        return self._dim

    @property
    def eos_vector(self) -> np.ndarray:
        return self.represent(())

    def represent(self, tokens: Tokens) -> np.ndarray:
        key = tuple(tokens)
        vec = self._cache.get(key)
        if vec is None:
            arr = self._backend.embed([" ".join(key)])
            vec = arr[0]
            if float(np.linalg.norm(vec)) == 0.0:
                raise DataError(f"remote embedding for {key!r} has zero norm")
            if self._dim is None:
                self._dim = vec.shape[0]
            vec.setflags(write=False)
            self._cache[key] = vec
        return vec

    def vector(self, token: str) -> np.ndarray:
        return self.represent((token,))

    def activations(self, token: str) -> np.ndarray:
        return logistic(self.vector(token))
