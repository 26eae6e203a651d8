"""Versioned weight files.

Layout (version 1): a NumPy ``.npz`` archive holding

- ``header``: UTF-8 JSON as a uint8 array with ``format``, ``version``,
  ``byte_order`` and the full network ``config``;
- one little-endian float64 array per weight matrix (``<name>``), per learning-rate
  matrix (``lr_<name>``) and per previous-epoch gradient (``prev_grad_<name>``);
- ``rho_d`` and ``rho_v``.

Arrays keep their row-major shape, so loading is bitwise exact.
"""

from __future__ import annotations

import io
import json
import logging
import zipfile
import zlib
from pathlib import Path
from typing import Any, Dict

import numpy as np
from pydantic import ValidationError

from . import settings
from .config import NetworkConfig
from .errors import ConfigurationError, HPRNNError, PersistenceError, VersionError
from .net_core import WEIGHT_NAMES, NetworkState
from .reports import atomic_write_bytes


logger = logging.getLogger(__name__)

FORMAT_NAME = "hprnn-state"
FORMAT_VERSION = 1


def _header(state: NetworkState) -> Dict[str, Any]:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "byte_order": "little",
        "dtype": settings.FLOAT_DTYPE,
        "config": state.config.model_dump(),
    }


def save_state(state: NetworkState, path: str | Path) -> Path:
    state.check_shapes()
    arrays: Dict[str, np.ndarray] = {
        "header": np.frombuffer(json.dumps(_header(state), sort_keys=True).encode("utf-8"), dtype=np.uint8),
        "rho_d": state.rho_d.astype(settings.FLOAT_DTYPE),
        "rho_v": state.rho_v.astype(settings.FLOAT_DTYPE),
    }
    for name in WEIGHT_NAMES:
        arrays[name] = getattr(state, name).astype(settings.FLOAT_DTYPE)
        arrays[f"lr_{name}"] = state.lr[name].astype(settings.FLOAT_DTYPE)
        arrays[f"prev_grad_{name}"] = state.prev_grad[name].astype(settings.FLOAT_DTYPE)
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    target = Path(path)
    atomic_write_bytes(target, buffer.getvalue())
    logger.info("saved network state to %s", target)
    return target


def _read_header(archive) -> Dict[str, Any]:
    if "header" not in archive.files:
        raise PersistenceError("state file has no header")
    try:
        header = json.loads(bytes(archive["header"]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PersistenceError(f"state header is not valid JSON ({exc})") from exc
    if header.get("format") != FORMAT_NAME:
        raise PersistenceError(f"not an {FORMAT_NAME} file (format={header.get('format')!r})")
    version = header.get("version")
    if not isinstance(version, int) or version > FORMAT_VERSION or version < 1:
        raise VersionError(f"unsupported state file version {version!r} (this build reads {FORMAT_VERSION})")
    return header


def load_state(path: str | Path) -> NetworkState:
    source = Path(path)
    if not source.exists():
        raise PersistenceError(f"state file not found: {source}")
    try:
        with np.load(io.BytesIO(source.read_bytes()), allow_pickle=False) as archive:
            header = _read_header(archive)
            try:
                config = NetworkConfig.model_validate(header["config"])
            except (KeyError, ValidationError) as exc:
                raise PersistenceError(f"state header has an invalid config ({exc})") from exc
            try:
                config.check()
            except ConfigurationError as exc:
                raise PersistenceError(f"state header has an invalid config ({exc})") from exc

            def read(key: str) -> np.ndarray:
                if key not in archive.files:
                    raise PersistenceError(f"state file is missing array '{key}'")
                return archive[key].astype(np.float64)

            state = NetworkState(
                config=config,
                **{name: read(name) for name in WEIGHT_NAMES},
                rho_d=read("rho_d"),
                rho_v=read("rho_v"),
                lr={name: read(f"lr_{name}") for name in WEIGHT_NAMES},
                prev_grad={name: read(f"prev_grad_{name}") for name in WEIGHT_NAMES},
            )
    except HPRNNError:
        raise
    except (zipfile.BadZipFile, zlib.error, OSError, ValueError, EOFError, KeyError, NotImplementedError) as exc:
        raise PersistenceError(f"state file {source} is corrupt or truncated ({exc})") from exc
    try:
        state.check_shapes()
    except HPRNNError as exc:
        raise PersistenceError(f"state file {source} is inconsistent: {exc}") from exc
    return state
