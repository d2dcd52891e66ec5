"""Containers, error metrics and experiment reports.

Container layout (all integers little-endian)::

    offset 0   8 bytes   magic b"GRNCHEB\\0"
    offset 8   uint32    format version
    offset 12  uint32    zero
    offset 16  uint64    manifest length M (a multiple of 8)
    offset 24  M bytes   UTF-8 JSON manifest, right-padded with spaces
    offset 24+M          float64 little-endian blocks, back to back

The manifest lists every block as ``{"name", "offset", "shape"}`` with the
offset counted from the start of the block area, plus the SHA-256 of the
whole block area.  Models use the ``.gcm`` suffix, datasets ``.gds``.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from pathlib import Path

import numpy as np

from .chebcore import ChebSeries, as_domain, cc_weights, cheb_points
from .errors import CorruptContainer, VersionMismatch, ZeroExactNorm, ZeroResponseNorm
from .manifold import SveModel
from .problems import DatasetFile, ProblemSpec
from .quasimatrix import Quasimatrix

MAGIC = b"GRNCHEB\0"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sIIQ")
QUAD_BLOCK = 512


# ---------------------------------------------------------------- container


def write_container(path, kind: str, meta: dict, blocks: dict[str, np.ndarray]) -> str:
    """Write a container and return the SHA-256 of the file."""
    entries = []
    chunks = []
    off = 0
    for name, arr in blocks.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        entries.append({"name": name, "offset": off, "shape": list(a.shape)})
        chunks.append(a.tobytes())
        off += a.nbytes
    data = b"".join(chunks)
    manifest = {
        "kind": kind,
        "format_version": FORMAT_VERSION,
        "meta": meta,
        "blocks": entries,
        "data_bytes": len(data),
        "sha256": hashlib.sha256(data).hexdigest(),
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    mbytes += b" " * (-len(mbytes) % 8)
    blob = HEADER.pack(MAGIC, FORMAT_VERSION, 0, len(mbytes)) + mbytes + data
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def read_container(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise CorruptContainer(f"{path}: file shorter than header")
    magic, version, _, mlen = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptContainer(f"{path}: bad magic")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    start = HEADER.size + mlen
    if len(raw) < start:
        raise CorruptContainer(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[HEADER.size : start].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptContainer(f"{path}: unreadable manifest ({exc})") from None
    data = raw[start:]
    if len(data) != manifest.get("data_bytes"):
        raise CorruptContainer(f"{path}: expected {manifest.get('data_bytes')} data bytes, found {len(data)}")
    if hashlib.sha256(data).hexdigest() != manifest.get("sha256"):
        raise CorruptContainer(f"{path}: checksum mismatch")
    if kind is not None and manifest.get("kind") != kind:
        raise CorruptContainer(f"{path}: holds a {manifest.get('kind')!r}, expected {kind!r}")
    blocks = {}
    for e in manifest["blocks"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        a = np.frombuffer(data, dtype="<f8", count=n, offset=e["offset"]).reshape(e["shape"])
        blocks[e["name"]] = a.astype(float)
    return manifest, blocks


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_model(path, model: SveModel, nets=None, extra: dict | None = None) -> str:
    """Store an :class:`SveModel`; ``nets`` optionally adds network checkpoints.

    ``nets`` maps a name (e.g. ``"G"``) to a :class:`~greencheb.ratnet.RatNet`.
    """
    meta = {
        "theta": model.theta,
        "xdomain": list(model.xdomain.as_tuple()),
        "sdomain": list(model.sdomain.as_tuple()),
        "rank": model.rank,
        "flags": list(model.flags),
        "info": model.meta,
        "nets": {},
    }
    meta.update(extra or {})
    blocks = {"U": model.U.coeffs, "V": model.V.coeffs, "sigma": model.sigma, "H": model.H.coeffs}
    for name, net in (nets or {}).items():
        keys = []
        for k, v in net.state_dict().items():
            blocks[f"net.{name}.{k}"] = v.detach().numpy()
            keys.append(k)
        meta["nets"][name] = {"dims": net.dims, "keys": keys}
    return write_container(path, "model", meta, blocks)


def load_model(path) -> SveModel:
    manifest, b = read_container(path, "model")
    m = manifest["meta"]
    xd, sd = as_domain(m["xdomain"]), as_domain(m["sdomain"])
    try:
        return SveModel(
            Quasimatrix(sd, b["U"]), b["sigma"], Quasimatrix(xd, b["V"]), ChebSeries(xd, b["H"]),
            m["theta"], tuple(m["flags"]), m.get("info", {}),
        )
    except KeyError as exc:
        raise CorruptContainer(f"{path}: missing block {exc}") from None


def load_networks(path) -> dict:
    """Rebuild the network checkpoints stored alongside a model."""
    import torch

    from .ratnet import RatNet

    manifest, b = read_container(path, "model")
    out = {}
    for name, spec in manifest["meta"].get("nets", {}).items():
        dims = spec["dims"]
        net = RatNet(dims[0], dims[-1], dims[1], len(dims) - 2)
        net.load_state_dict({k: torch.tensor(b[f"net.{name}.{k}"]) for k in spec["keys"]})
        out[name] = net
    return out


def save_dataset(path, ds: DatasetFile) -> str:
    meta = {
        "problem": ds.problem.as_dict(),
        "zeta": ds.zeta,
        "seed": ds.seed,
        "kernel": ds.kernel,
        "nx": int(ds.x.size),
        "ns": int(ds.s.size),
        "n_samples": ds.n_samples,
    }
    blocks = {
        "x": ds.x, "s": ds.s, "F": ds.F, "U": ds.U, "U_clean": ds.U_clean,
        "train_idx": ds.train_idx.astype(float), "val_idx": ds.val_idx.astype(float),
    }
    return write_container(path, "dataset", meta, blocks)


def load_dataset(path) -> DatasetFile:
    manifest, b = read_container(path, "dataset")
    m = manifest["meta"]
    p = m["problem"]
    prob = ProblemSpec(p["id"], p["theta"], tuple(p["domain"]), p["bc"])
    try:
        return DatasetFile(
            prob, b["x"], b["s"], b["F"], b["U"], b["U_clean"], m["zeta"], m["seed"],
            b["train_idx"].astype(int), b["val_idx"].astype(int), m["kernel"],
        )
    except KeyError as exc:
        raise CorruptContainer(f"{path}: missing block {exc}") from None


# ---------------------------------------------------------------- metrics


def relative_error(model: SveModel, exact, n: int | None = None) -> float:
    """``||G - G_exact|| / ||G_exact||`` in ``L2`` of the rectangle.

    Clenshaw-Curtis tensor quadrature with ``n + 1`` points per variable,
    ``n`` defaulting to twice the model degree (at least 256).
    """
    if n is None:
        n = max(256, 2 * max(model.U.degree, model.V.degree))
    xd, sd = model.xdomain, model.sdomain
    x, s = cheb_points(n, xd), cheb_points(n, sd)
    wx, ws = cc_weights(n, xd), cc_weights(n, sd)
    Us = model.U(s) * model.sigma if model.rank else None
    num = den = 0.0
    for i in range(0, x.size, QUAD_BLOCK):
        xb = x[i : i + QUAD_BLOCK]
        E = np.asarray(exact(xb[:, None], s[None, :]), dtype=float)
        E = np.broadcast_to(E, (xb.size, s.size))
        G = model.V(xb) @ Us.T if Us is not None else 0.0
        num += wx[i : i + QUAD_BLOCK] @ ((G - E) ** 2 @ ws)
        den += wx[i : i + QUAD_BLOCK] @ (E**2 @ ws)
    if not den > 0:
        raise ZeroExactNorm("exact kernel has zero L2 norm")
    return float(np.sqrt(max(num, 0.0) / den))


def test_errors(model: SveModel, ds: DatasetFile, idx=None, clean: bool = False) -> np.ndarray:
    """Per-sample ``||u~_i - u_i|| / ||u_i||`` (trapezoid norms on the x grid)."""
    from .ratnet import trapezoid_weights

    idx = np.arange(ds.n_samples) if idx is None else np.asarray(idx, dtype=int)
    F, U = ds.subset(idx, clean=clean)
    w = trapezoid_weights(ds.x)
    nu = np.sqrt(w @ U**2)
    for i, v in zip(idx, nu):
        if not v > 0:
            raise ZeroResponseNorm(int(i))
    pred = model.apply_values(ds.s, F, ds.x)
    return np.sqrt(w @ (pred - U) ** 2) / nu


def test_error(model: SveModel, ds: DatasetFile, idx=None, clean: bool = False) -> float:
    """Mean relative response error over the test pairs, in percent."""
    return float(100.0 * np.mean(test_errors(model, ds, idx, clean)))


# ---------------------------------------------------------------- reports


def build_report(model_paths, data_paths=(), exact_problem: str | None = None) -> dict:
    """Metrics recomputed from stored artifacts, keyed by file hashes."""
    from .problems import exact_green

    rows = []
    datasets = [(p, load_dataset(p)) for p in data_paths]
    for mp in model_paths:
        t0 = time.perf_counter()
        model = load_model(mp)
        row = {
            "model": str(mp),
            "model_sha256": file_sha256(mp),
            "theta": model.theta,
            "rank": model.rank,
            "flags": list(model.flags),
            "sigma_head": model.sigma[:5].tolist(),
            "tests": [],
        }
        if exact_problem:
            g = exact_green(ProblemSpec(exact_problem, model.theta))
            if g is not None:
                row["relative_error"] = relative_error(model, g)
        for dp, ds in datasets:
            if ds.theta != model.theta:
                continue
            entry = {"data": str(dp), "data_sha256": file_sha256(dp), "zeta": ds.zeta,
                     "test_error_pct": test_error(model, ds)}
            if ds.zeta > 0:
                entry["test_error_clean_pct"] = test_error(model, ds, clean=True)
            row["tests"].append(entry)
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    return {"format_version": FORMAT_VERSION, "models": rows}
