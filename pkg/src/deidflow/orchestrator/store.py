"""Keyed blob storage. The local backend maps keys onto a directory tree."""

from __future__ import annotations

import hashlib
import os
import tempfile
import threading
from abc import ABC, abstractmethod
from pathlib import Path


class ObjectNotFound(KeyError):
    pass


def check_key(key: str) -> str:
    parts = key.split("/")
    if not key or key.startswith("/") or any(p in ("", ".", "..") for p in parts):
        raise ValueError(f"invalid object key {key!r}")
    return key


class ObjectStore(ABC):
    @abstractmethod
    def put(self, key: str, data: bytes) -> None:
        """Atomically publish ``data`` under ``key``; readers never see a partial object."""

    @abstractmethod
    def get(self, key: str) -> bytes: ...

    @abstractmethod
    def exists(self, key: str) -> bool: ...

    @abstractmethod
    def delete(self, key: str) -> None: ...

    @abstractmethod
    def list(self, prefix: str = "") -> list[str]:
        """Sorted keys starting with ``prefix``."""

    def digest(self, prefix: str = "") -> str:
        """Content hash over (key, bytes) pairs; equal iff the visible content is equal."""
        h = hashlib.sha256()
        for key in self.list(prefix):
            data = self.get(key)
            h.update(key.encode() + b"\0" + len(data).to_bytes(8, "big"))
            h.update(data)
        return h.hexdigest()

    def total_bytes(self, prefix: str = "") -> int:
        return sum(len(self.get(k)) for k in self.list(prefix))


class MemoryObjectStore(ObjectStore):
    def __init__(self):
        self._data: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def put(self, key, data):
        with self._lock:
            self._data[check_key(key)] = bytes(data)

    def get(self, key):
        try:
            return self._data[key]
        except KeyError:
            raise ObjectNotFound(key) from None

    def exists(self, key):
        return key in self._data

    def delete(self, key):
        with self._lock:
            self._data.pop(key, None)

    def list(self, prefix=""):
        with self._lock:
            return sorted(k for k in self._data if k.startswith(prefix))


class LocalObjectStore(ObjectStore):
    """Directory-tree backend. Writes go to a temp file and are renamed into place."""

    _TMP = ".tmp-"

    def __init__(self, root, fsync: bool = False):
        self.root = Path(root)
        self.fsync = fsync
        self.root.mkdir(parents=True, exist_ok=True)

    def __repr__(self):
        return f"LocalObjectStore({str(self.root)!r})"

    def _path(self, key: str) -> Path:
        return self.root.joinpath(*check_key(key).split("/"))

    def put(self, key, data):
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=self._TMP)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                if self.fsync:
                    fh.flush()
                    os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def get(self, key):
        try:
            return self._path(key).read_bytes()
        except (FileNotFoundError, IsADirectoryError):
            raise ObjectNotFound(key) from None

    def exists(self, key):
        return self._path(key).is_file()

    def delete(self, key):
        try:
            self._path(key).unlink()
        except FileNotFoundError:
            pass

    def list(self, prefix=""):
        keys = []
        for dirpath, _, files in os.walk(self.root):
            rel = Path(dirpath).relative_to(self.root)
            for name in files:
                if name.startswith(self._TMP):
                    continue
                key = "/".join((*rel.parts, name))
                if key.startswith(prefix):
                    keys.append(key)
        return sorted(keys)
