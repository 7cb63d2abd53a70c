"""On-disk bundle container (HGPB v1) and its validation.

A bundle packages everything the weight optimizer needs for one target task:
per-source feature matrices, per-source raw prompt gradients, labels, and
optionally the source prompt tensors themselves.

Format, little-endian throughout:

    magic  "HGPB" (4 bytes)
    u32    version (= 1)
    u32    manifest byte length, then UTF-8 key=value lines
           (keys: M, N, h, p, d, C, provenance, seed)
    u32    tensor count, then per tensor:
        u16  name length, UTF-8 name
        u8   dtype (1 = f32, 2 = f64, 3 = i64)
        u8   ndim, then ndim x u64 dims
        payload, row-major packed

Required tensors: ``labels`` (i64, [N]), ``features/<i>`` and
``gradients/<i>`` for i in 0..M-1. ``prompts/<i>`` are optional, all-or-none.
f32 payloads are widened to f64 on read; the writer always emits f64.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"HGPB"
VERSION = 1

_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8")}


class BundleFormatError(ValueError):
    """Base class for malformed bundle files."""


class BadMagicError(BundleFormatError):
    pass


class UnsupportedVersionError(BundleFormatError):
    pass


class TruncatedPayloadError(BundleFormatError):
    def __init__(self, tensor_name: str, expected: int, actual: int):
        super().__init__(
            f"truncated payload for tensor {tensor_name!r}: expected "
            f"{expected} bytes, got {actual}"
        )
        self.tensor_name = tensor_name
        self.expected = expected
        self.actual = actual


class BundleValidationError(BundleFormatError):
    """A structurally well-formed file whose contents violate an invariant."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class BundleManifest:
    version: int
    source_count: int
    sample_count: int
    feature_dim: int
    prompt_rows: int
    prompt_cols: int
    class_count: int
    provenance: str = ""
    seed: int = 0


@dataclass
class PromptBundle:
    """In-memory bundle; ``validate_bundle`` checks the invariants."""

    features: list  # M arrays [N x h]
    gradients: list  # M arrays [p x d]
    labels: np.ndarray  # [N] int64
    class_count: int
    prompts: list | None = None  # M arrays [p x d], or None
    provenance: str = ""
    seed: int = 0

    @property
    def source_count(self) -> int:
        return len(self.features)

    @property
    def sample_count(self) -> int:
        return self.features[0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features[0].shape[1]

    @property
    def prompt_shape(self):
        return self.gradients[0].shape

    def manifest(self) -> BundleManifest:
        p, d = self.prompt_shape
        return BundleManifest(
            version=VERSION,
            source_count=self.source_count,
            sample_count=self.sample_count,
            feature_dim=self.feature_dim,
            prompt_rows=p,
            prompt_cols=d,
            class_count=self.class_count,
            provenance=self.provenance,
            seed=self.seed,
        )


def validate_bundle(bundle: PromptBundle):
    """Return the list of invariant violations (empty means valid).

    Violations are reported in a deterministic order: dimensional structure,
    then per-tensor finiteness in storage order, then label range/coverage.
    """
    out = []
    m = len(bundle.features)
    if m == 0:
        return ["bundle has no sources"]
    if len(bundle.gradients) != m:
        out.append(
            f"{m} feature matrices but {len(bundle.gradients)} gradient matrices"
        )
    if bundle.prompts is not None and len(bundle.prompts) != m:
        out.append(f"{m} sources but {len(bundle.prompts)} prompt tensors")

    fshape = np.asarray(bundle.features[0]).shape
    for i, f in enumerate(bundle.features):
        s = np.asarray(f).shape
        if len(s) != 2:
            out.append(f"features/{i} is not a matrix (shape {s})")
        elif s != fshape:
            out.append(f"features/{i} has shape {s}, features/0 has {fshape}")
    gshape = np.asarray(bundle.gradients[0]).shape if bundle.gradients else None
    for i, g in enumerate(bundle.gradients):
        s = np.asarray(g).shape
        if len(s) != 2:
            out.append(f"gradients/{i} is not a matrix (shape {s})")
        elif s != gshape:
            out.append(f"gradients/{i} has shape {s}, gradients/0 has {gshape}")
    if bundle.prompts is not None:
        for i, p in enumerate(bundle.prompts):
            s = np.asarray(p).shape
            if s != gshape:
                out.append(f"prompts/{i} has shape {s}, expected {gshape}")

    labels = np.asarray(bundle.labels)
    if labels.ndim != 1:
        out.append(f"labels must be 1-d, got shape {labels.shape}")
    elif len(fshape) == 2 and labels.size != fshape[0]:
        out.append(f"{labels.size} labels for {fshape[0]} samples")

    for i, f in enumerate(bundle.features):
        if not np.all(np.isfinite(f)):
            out.append(f"features/{i} contains non-finite entries")
    for i, g in enumerate(bundle.gradients):
        if not np.all(np.isfinite(g)):
            out.append(f"gradients/{i} contains non-finite entries")
    if bundle.prompts is not None:
        for i, p in enumerate(bundle.prompts):
            if not np.all(np.isfinite(p)):
                out.append(f"prompts/{i} contains non-finite entries")

    c = bundle.class_count
    if c < 2:
        out.append(f"class_count must be >= 2, got {c}")
    elif labels.ndim == 1 and labels.size:
        if labels.min() < 0 or labels.max() >= c:
            out.append(
                f"labels out of range 0..{c - 1}: "
                f"[{labels.min()}, {labels.max()}]"
            )
        else:
            counts = np.bincount(labels, minlength=c)
            for y in np.flatnonzero(counts == 0):
                out.append(f"class {y} has no samples in labels")
    return out


def _manifest_bytes(bundle: PromptBundle) -> bytes:
    man = bundle.manifest()
    lines = [
        f"M={man.source_count}",
        f"N={man.sample_count}",
        f"h={man.feature_dim}",
        f"p={man.prompt_rows}",
        f"d={man.prompt_cols}",
        f"C={man.class_count}",
        f"provenance={man.provenance}",
        f"seed={man.seed}",
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _write_tensor(out, name: str, arr: np.ndarray, dtype_code: int):
    payload = np.ascontiguousarray(arr.astype(_DTYPE_CODES[dtype_code], copy=False))
    name_b = name.encode("utf-8")
    out.write(struct.pack("<H", len(name_b)))
    out.write(name_b)
    out.write(struct.pack("<BB", dtype_code, payload.ndim))
    for dim in payload.shape:
        if dim >= 2**32:
            raise ValueError(f"tensor {name!r} dimension {dim} too large")
        out.write(struct.pack("<Q", dim))
    out.write(payload.tobytes())


def write_bundle(bundle: PromptBundle, path):
    """Serialize a valid bundle; f64 payloads round-trip bit-exactly."""
    violations = validate_bundle(bundle)
    if violations:
        raise BundleValidationError(violations)
    tensors = [("labels", np.asarray(bundle.labels, dtype=np.int64), 3)]
    for i, f in enumerate(bundle.features):
        tensors.append((f"features/{i}", np.asarray(f, dtype=np.float64), 2))
    for i, g in enumerate(bundle.gradients):
        tensors.append((f"gradients/{i}", np.asarray(g, dtype=np.float64), 2))
    if bundle.prompts is not None:
        for i, p in enumerate(bundle.prompts):
            tensors.append((f"prompts/{i}", np.asarray(p, dtype=np.float64), 2))

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    manifest = _manifest_bytes(bundle)
    buf.write(struct.pack("<I", len(manifest)))
    buf.write(manifest)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr, code in tensors:
        _write_tensor(buf, name, arr, code)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise TruncatedPayloadError(what, count, len(data))
    return data


def _parse_manifest(raw: bytes) -> dict:
    entries = {}
    for line in raw.decode("utf-8").splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise BundleFormatError(f"malformed manifest line: {line!r}")
        key, value = line.split("=", 1)
        entries[key] = value
    return entries


def read_bundle(path) -> PromptBundle:
    """Parse, widen to f64, and validate; raises on any defect."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version = struct.unpack("<I", _read_exact(fh, 4, "version"))[0]
        if version != VERSION:
            raise UnsupportedVersionError(f"unsupported version {version}")
        man_len = struct.unpack("<I", _read_exact(fh, 4, "manifest length"))[0]
        manifest = _parse_manifest(_read_exact(fh, man_len, "manifest"))
        tensor_count = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))[0]

        tensors = {}
        for t in range(tensor_count):
            name_len = struct.unpack(
                "<H", _read_exact(fh, 2, f"tensor {t} name length"))[0]
            name = _read_exact(fh, name_len, f"tensor {t} name").decode("utf-8")
            dtype_code, ndim = struct.unpack(
                "<BB", _read_exact(fh, 2, f"{name} header"))
            if dtype_code not in _DTYPE_CODES:
                raise BundleFormatError(
                    f"tensor {name!r} has unknown dtype code {dtype_code}")
            dims = struct.unpack(
                f"<{ndim}Q", _read_exact(fh, 8 * ndim, f"{name} dims"))
            dtype = _DTYPE_CODES[dtype_code]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            payload = _read_exact(fh, nbytes, name)
            arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
            if dtype_code in (1, 2):
                arr = arr.astype(np.float64)
            else:
                arr = arr.astype(np.int64)
            tensors[name] = arr

    try:
        m = int(manifest["M"])
        c = int(manifest["C"])
    except KeyError as exc:
        raise BundleFormatError(f"manifest missing key {exc}") from exc

    missing = [name for name in
               ["labels", *(f"features/{i}" for i in range(m)),
                *(f"gradients/{i}" for i in range(m))]
               if name not in tensors]
    if missing:
        raise BundleFormatError(f"missing required tensors: {missing}")

    prompt_names = [f"prompts/{i}" for i in range(m)]
    present = [name for name in prompt_names if name in tensors]
    if present and len(present) != m:
        raise BundleFormatError(
            f"prompts must be all-or-none: found {present}, expected "
            f"{prompt_names}")

    bundle = PromptBundle(
        features=[tensors[f"features/{i}"] for i in range(m)],
        gradients=[tensors[f"gradients/{i}"] for i in range(m)],
        labels=tensors["labels"],
        class_count=c,
        prompts=[tensors[name] for name in prompt_names] if present else None,
        provenance=manifest.get("provenance", ""),
        seed=int(manifest.get("seed", "0") or 0),
    )
    violations = validate_bundle(bundle)
    if violations:
        raise BundleValidationError(violations)
    declared = (int(manifest["N"]), int(manifest["h"]),
                int(manifest["p"]), int(manifest["d"]))
    actual = (bundle.sample_count, bundle.feature_dim, *bundle.prompt_shape)
    if declared != actual:
        raise BundleFormatError(
            f"manifest dims (N, h, p, d)={declared} disagree with payload "
            f"{actual}")
    return bundle
