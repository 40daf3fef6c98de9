"""Page-aligned mappings with raw-address access."""

from __future__ import annotations

import ctypes
import mmap
import os

from . import _native

PAGE_SIZE = mmap.PAGESIZE


def round_up_pages(n: int) -> int:
    return -(-n // PAGE_SIZE) * PAGE_SIZE


class PageBuffer:
    """A shared mapping (anonymous or file-backed) addressed by raw pointer.

    Reads and writes go through ``ctypes.memmove`` on the mapping address so the
    access happens in native code under the calling thread's protection-key
    rights, exactly like a C program touching the memory.
    """

    def __init__(self, mm: mmap.mmap, size: int, path: str | None = None):
        self._mm = mm
        self._view = (ctypes.c_char * size).from_buffer(mm)
        self.address = ctypes.addressof(self._view)
        self.size = size
        self.path = path

    @classmethod
    def anonymous(cls, size: int) -> "PageBuffer":
        if size <= 0:
            raise ValueError("mapping size must be positive")
        return cls(mmap.mmap(-1, size, flags=mmap.MAP_SHARED), size)

    @classmethod
    def from_file(cls, path: str, size: int, create: bool) -> "PageBuffer":
        if create:
            fd = os.open(path, os.O_RDWR | os.O_CREAT | os.O_EXCL, 0o600)
            try:
                os.ftruncate(fd, size)
            except BaseException:
                os.close(fd)
                os.unlink(path)
                raise
        else:
            fd = os.open(path, os.O_RDWR)
            size = os.fstat(fd).st_size
        try:
            mm = mmap.mmap(fd, size, flags=mmap.MAP_SHARED)
        finally:
            os.close(fd)
        return cls(mm, size, path)

    @property
    def closed(self) -> bool:
        return self._mm is None

    def read(self, offset: int, n: int) -> bytes:
        return ctypes.string_at(self.address + offset, n)

    def write(self, offset: int, data: bytes, start: int = 0, n: int | None = None) -> None:
        """Copy ``data[start:start + n]`` to ``offset`` without slicing ``data``."""
        if n is None:
            n = len(data) - start
        if n <= 0:
            return
        if not isinstance(data, bytes):
            data = bytes(data)
        src = ctypes.cast(ctypes.c_char_p(data), ctypes.c_void_p).value + start
        ctypes.memmove(self.address + offset, src, n)

    def load_acquire(self, offset: int) -> int:
        return _native.load_acquire(self.address + offset)

    def store_release(self, offset: int, value: int) -> None:
        _native.store_release(self.address + offset, value)

    def fetch_or(self, offset: int, bits: int) -> int:
        return _native.fetch_or(self.address + offset, bits)

    def fetch_and(self, offset: int, mask: int) -> int:
        return _native.fetch_and(self.address + offset, mask)

    def close(self) -> None:
        if self._mm is None:
            return
        self._view = None
        self._mm.close()
        self._mm = None
        self.address = 0
