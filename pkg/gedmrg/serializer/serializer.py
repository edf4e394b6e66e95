import logging
import os
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from gedmrg.errors import SerializationError
from gedmrg.mpo.mpo import MPO_LABELS, MatrixProductOperator
from gedmrg.mps.mps import SITE_LABELS, CanonicalForm, MatrixProductState
from gedmrg.tensor.tensor import Tensor

logger = logging.getLogger(__name__)

MPS_MAGIC = "GEDMRG-MPS-1"
MPO_MAGIC = "GEDMRG-MPO-1"
# compress flag, n_sites, d, center (-1 for operators), canonical flag
HEADER_FMT = "<?IIiB"
PAYLOAD_DTYPE = "<c16"

Network = Union[MatrixProductState, MatrixProductOperator]


@dataclass(frozen=True)
class NetworkHeader:
    magic: str
    compress: bool
    n_sites: int
    d: int
    center: int
    canonical: bool

    @property
    def rank(self) -> int:
        return len(SITE_LABELS) if self.magic == MPS_MAGIC else len(MPO_LABELS)

    @property
    def labels(self):
        return SITE_LABELS if self.magic == MPS_MAGIC else MPO_LABELS


class NetworkSerializer:
    """
    Writes matrix product states and operators to a binary file with a
    per-site offset index, and reads them back in full or site by site.

    Layout (little-endian): a length-prefixed header string ("GEDMRG-MPS-1" or
    "GEDMRG-MPO-1"), the fixed header `HEADER_FMT`, one record per site
    (leg dimensions, payload length, complex128 row-major entries, optionally
    zlib-compressed) and, for canonical states, the Schmidt sequences.

    Attributes:
        bin_path (str): Path to the binary file.
        index_path (str): Path to the offsets file (bin_path + '.idx').
        compress (bool): Whether site payloads are zlib-compressed.

    Example:
        >>> ns = NetworkSerializer('state.bin')
        >>> ns.serialize(random_mps(6, 2, 4, seed=1))
        >>> psi = ns.deserialize()
        >>> psi.n_sites
        6
    """

    def __init__(self, bin_path: str, compress: bool = True) -> None:
        self.bin_path = bin_path
        self.index_path = self.bin_path + '.idx'
        self.compress = compress
        self.site_offsets: List[int] = []

    def serialize(self, network: Network) -> None:
        """
        Writes `network` and its offsets file.

        Raises:
            ValueError: If `network` is neither an MPS nor an MPO.
        """
        if isinstance(network, MatrixProductState):
            magic = MPS_MAGIC
            center = network.center
            canonical = network.canonical_form is CanonicalForm.MIXED
        elif isinstance(network, MatrixProductOperator):
            magic, center, canonical = MPO_MAGIC, -1, False
        else:
            raise ValueError(f"Cannot serialize objects of type {type(network).__name__}")

        buffer = bytearray()
        raw_magic = magic.encode('ascii')
        buffer.extend(struct.pack('<I', len(raw_magic)))
        buffer.extend(raw_magic)
        buffer.extend(struct.pack(HEADER_FMT, self.compress, network.n_sites, network.d, center, canonical))

        self.site_offsets = []
        for site in network.sites:
            self.site_offsets.append(len(buffer))
            raw = np.ascontiguousarray(site.data, dtype=PAYLOAD_DTYPE).tobytes()
            if self.compress:
                raw = zlib.compress(raw)
            buffer.extend(struct.pack(f'<{len(site.shape)}I', *site.shape))
            buffer.extend(struct.pack('<I', len(raw)))
            buffer.extend(raw)

        if canonical:
            for s in network.schmidt:
                buffer.extend(struct.pack('<I', s.size))
                buffer.extend(np.ascontiguousarray(s, dtype='<f8').tobytes())

        with open(self.bin_path, 'wb') as f_bin, open(self.index_path, 'w') as f_idx:
            f_bin.write(buffer)
            for offset in self.site_offsets:
                f_idx.write(f"{offset}\n")
        logger.debug(f"Wrote {magic} with {network.n_sites} sites to {self.bin_path} ({len(buffer)} bytes)")

    def _read_header(self, f) -> NetworkHeader:
        length_bytes = f.read(4)
        if len(length_bytes) != 4:
            raise SerializationError(f"'{self.bin_path}' is too short to hold a header")
        (length,) = struct.unpack('<I', length_bytes)
        if length > 64:
            raise SerializationError(f"'{self.bin_path}' has an implausible header length {length}")
        magic = f.read(length).decode('ascii', errors='replace')
        if magic not in (MPS_MAGIC, MPO_MAGIC):
            raise SerializationError(f"Unknown header '{magic}' in '{self.bin_path}'")
        fixed = f.read(struct.calcsize(HEADER_FMT))
        if len(fixed) != struct.calcsize(HEADER_FMT):
            raise SerializationError(f"Truncated header in '{self.bin_path}'")
        compress, n_sites, d, center, canonical = struct.unpack(HEADER_FMT, fixed)
        return NetworkHeader(magic, bool(compress), n_sites, d, center, bool(canonical))

    def _read_single_site(self, f, header: NetworkHeader) -> Tensor:
        """
        Reads one site record at the current file position.
        """
        shape_fmt = f'<{header.rank}I'
        shape_bytes = f.read(struct.calcsize(shape_fmt))
        length_bytes = f.read(4)
        if len(shape_bytes) != struct.calcsize(shape_fmt) or len(length_bytes) != 4:
            raise SerializationError(f"Truncated site record in '{self.bin_path}'")
        shape = struct.unpack(shape_fmt, shape_bytes)
        (length,) = struct.unpack('<I', length_bytes)
        raw = f.read(length)
        if len(raw) != length:
            raise SerializationError(f"Truncated site payload in '{self.bin_path}'")
        if header.compress:
            try:
                raw = zlib.decompress(raw)
            except zlib.error as e:
                raise SerializationError(f"Corrupt site payload in '{self.bin_path}': {e}")
        data = np.frombuffer(raw, dtype=PAYLOAD_DTYPE).copy()
        if data.size != int(np.prod(shape)):
            raise SerializationError(f"Site payload of {data.size} entries does not fit shape {shape}")
        return Tensor(header.labels, data.reshape(shape))

    def _read_schmidt_values(self, f) -> np.ndarray:
        count_bytes = f.read(4)
        if len(count_bytes) != 4:
            raise SerializationError(f"Truncated Schmidt section in '{self.bin_path}'")
        (count,) = struct.unpack('<I', count_bytes)
        raw = f.read(8 * count)
        if len(raw) != 8 * count:
            raise SerializationError(f"Truncated Schmidt values in '{self.bin_path}'")
        return np.frombuffer(raw, dtype='<f8').astype(float)

    def _check_exists(self) -> None:
        if not os.path.isfile(self.bin_path):
            raise FileNotFoundError(f"The network file '{self.bin_path}' does not exist.")

    def deserialize(self) -> Network:
        """
        Reads the whole file back.

        Raises:
            FileNotFoundError: If the binary file does not exist.
            SerializationError: On a wrong header or a corrupt record.
        """
        self._check_exists()
        with open(self.bin_path, 'rb') as f:
            header = self._read_header(f)
            sites = tuple(self._read_single_site(f, header) for _ in range(header.n_sites))
            if header.magic == MPO_MAGIC:
                return MatrixProductOperator(sites)
            schmidt = []
            if header.canonical:
                for _ in range(header.n_sites - 1):
                    schmidt.append(self._read_schmidt_values(f))
        form = CanonicalForm.MIXED if header.canonical else CanonicalForm.NONE
        return MatrixProductState(sites, tuple(schmidt), max(header.center, 0), form)

    def _load_offsets(self) -> List[int]:
        """
        Loads the offset index file, if not already loaded.
        """
        if not self.site_offsets:
            if not os.path.isfile(self.index_path):
                raise FileNotFoundError(f"The index file '{self.index_path}' does not exist.")
            with open(self.index_path, 'r') as f:
                self.site_offsets = [int(line.strip()) for line in f if line.strip()]
        return self.site_offsets

    def read_sites(self, indices: List[int], max_workers: Optional[int] = None) -> List[Tensor]:
        """
        Reads selected site tensors without loading the whole network.

        Args:
            indices: Site indices, in any order.
            max_workers: Reader threads; None reads sequentially.

        Returns:
            The site tensors in the order of `indices`.
        """
        self._check_exists()
        offsets = self._load_offsets()
        for idx in indices:
            if not 0 <= idx < len(offsets):
                raise ValueError(f"Site index {idx} out of range for {len(offsets)} sites")
        with open(self.bin_path, 'rb') as f:
            header = self._read_header(f)

        def read_one(idx: int) -> Tensor:
            with open(self.bin_path, 'rb') as f:
                f.seek(offsets[idx])
                return self._read_single_site(f, header)

        if max_workers is None:
            return [read_one(idx) for idx in indices]
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            return list(executor.map(read_one, indices))

    def __str__(self) -> str:
        return f"NetworkSerializer(path='{self.bin_path}', compress={self.compress})"
