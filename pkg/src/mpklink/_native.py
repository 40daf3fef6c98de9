"""Tiny C helper for the operations Python cannot express.

* 32-bit atomics with acquire/release ordering on raw addresses (status words,
  register slots).
* RDPKRU/WRPKRU and a fault-trapping single-byte probe for the hardware
  protection backend.

The shared object is compiled with the system C compiler on first use and cached
under ``$MPKLINK_CACHE`` (default ``~/.cache/mpklink``).  When no compiler is
available the atomics fall back to plain aligned 32-bit ctypes accesses, which
are single-copy atomic on x86-64 and aarch64 but carry no fence; the hardware
backend is then unavailable.
"""

from __future__ import annotations

import ctypes
import hashlib
import logging
import os
import shutil
import subprocess
import tempfile
import threading
from pathlib import Path

log = logging.getLogger(__name__)

C_SOURCE = r"""
#define _GNU_SOURCE
#include <stdint.h>
#include <setjmp.h>
#include <signal.h>
#include <string.h>

uint32_t mpkl_load_acquire_u32(const uint32_t *p) { return __atomic_load_n(p, __ATOMIC_ACQUIRE); }
void mpkl_store_release_u32(uint32_t *p, uint32_t v) { __atomic_store_n(p, v, __ATOMIC_RELEASE); }
uint32_t mpkl_fetch_or_u32(uint32_t *p, uint32_t v) { return __atomic_fetch_or(p, v, __ATOMIC_ACQ_REL); }
uint32_t mpkl_fetch_and_u32(uint32_t *p, uint32_t v) { return __atomic_fetch_and(p, v, __ATOMIC_ACQ_REL); }

#if defined(__x86_64__)
int mpkl_has_pkru(void) { return 1; }
uint32_t mpkl_rdpkru(void) {
    uint32_t eax, edx;
    __asm__ volatile(".byte 0x0f,0x01,0xee" : "=a"(eax), "=d"(edx) : "c"(0));
    return eax;
}
void mpkl_wrpkru(uint32_t v) {
    __asm__ volatile(".byte 0x0f,0x01,0xef" : : "a"(v), "c"(0), "d"(0) : "memory");
}
#else
int mpkl_has_pkru(void) { return 0; }
uint32_t mpkl_rdpkru(void) { return 0; }
void mpkl_wrpkru(uint32_t v) { (void)v; }
#endif

static __thread sigjmp_buf probe_env;
static __thread volatile sig_atomic_t probing;
static struct sigaction previous;
static volatile int installed;

static void on_segv(int sig, siginfo_t *info, void *uc) {
    if (probing) { probing = 0; siglongjmp(probe_env, 1); }
    /* not ours: hand over to whoever was installed before (faulthandler, default) */
    sigaction(SIGSEGV, &previous, NULL);
    if (previous.sa_flags & SA_SIGINFO) previous.sa_sigaction(sig, info, uc);
    else if (previous.sa_handler != SIG_IGN && previous.sa_handler != SIG_DFL) previous.sa_handler(sig);
}

int mpkl_install_probe_handler(void) {
    if (installed) return 0;
    struct sigaction sa;
    memset(&sa, 0, sizeof sa);
    sa.sa_sigaction = on_segv;
    sa.sa_flags = SA_SIGINFO | SA_NODEFER;
    sigemptyset(&sa.sa_mask);
    if (sigaction(SIGSEGV, &sa, &previous) != 0) return -1;
    installed = 1;
    return 0;
}

/* 0 = access completed, 1 = faulted. The kernel resets PKRU on signal entry
   and siglongjmp skips sigreturn, so the caller's PKRU is restored by hand. */
int mpkl_probe(volatile uint8_t *p, int write) {
    uint32_t saved = mpkl_has_pkru() ? mpkl_rdpkru() : 0;
    if (sigsetjmp(probe_env, 1)) {
        if (mpkl_has_pkru()) mpkl_wrpkru(saved);
        return 1;
    }
    probing = 1;
    uint8_t v = *p;
    if (write) *p = v;
    probing = 0;
    return 0;
}
"""

_lock = threading.Lock()
_lib: ctypes.CDLL | None = None
_tried = False


def _cache_dir() -> Path:
    env = os.environ.get("MPKLINK_CACHE")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "mpklink"


def _build() -> Path | None:
    cc = os.environ.get("CC") or shutil.which("cc") or shutil.which("gcc") or shutil.which("clang")
    if cc is None:
        return None
    digest = hashlib.sha256(C_SOURCE.encode()).hexdigest()[:16]
    out_dir = _cache_dir()
    target = out_dir / f"libmpklink-{digest}.so"
    if target.exists():
        return target
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir) as tmp:
        src = Path(tmp) / "mpklink.c"
        src.write_text(C_SOURCE)
        so = Path(tmp) / target.name
        proc = subprocess.run(
            [cc, "-O2", "-shared", "-fPIC", str(src), "-o", str(so)],
            capture_output=True, text=True,
        )
        if proc.returncode != 0:
            log.warning("native helper failed to compile: %s", proc.stderr.strip())
            return None
        os.replace(so, target)  # atomic against concurrent builders
    return target


def load() -> ctypes.CDLL | None:
    """Return the helper library, building it if needed; None when unavailable."""
    global _lib, _tried
    if _tried:
        return _lib
    with _lock:
        if _tried:
            return _lib
        try:
            path = _build()
            if path is not None:
                lib = ctypes.PyDLL(str(path))
                u32, vp = ctypes.c_uint32, ctypes.c_void_p
                lib.mpkl_load_acquire_u32.argtypes = [vp]
                lib.mpkl_load_acquire_u32.restype = u32
                lib.mpkl_store_release_u32.argtypes = [vp, u32]
                lib.mpkl_store_release_u32.restype = None
                lib.mpkl_fetch_or_u32.argtypes = [vp, u32]
                lib.mpkl_fetch_or_u32.restype = u32
                lib.mpkl_fetch_and_u32.argtypes = [vp, u32]
                lib.mpkl_fetch_and_u32.restype = u32
                lib.mpkl_has_pkru.restype = ctypes.c_int
                lib.mpkl_rdpkru.restype = u32
                lib.mpkl_wrpkru.argtypes = [u32]
                lib.mpkl_wrpkru.restype = None
                lib.mpkl_install_probe_handler.restype = ctypes.c_int
                lib.mpkl_probe.argtypes = [vp, ctypes.c_int]
                lib.mpkl_probe.restype = ctypes.c_int
                _lib = lib
        except OSError as exc:
            log.warning("native helper unavailable: %s", exc)
            _lib = None
        _tried = True
    if _lib is None:
        log.warning("falling back to unfenced 32-bit accesses for shared status words")
    return _lib


# atomics -------------------------------------------------------------------

def load_acquire(addr: int) -> int:
    lib = load()
    if lib is not None:
        return lib.mpkl_load_acquire_u32(addr)
    return ctypes.c_uint32.from_address(addr).value


def store_release(addr: int, value: int) -> None:
    lib = load()
    if lib is not None:
        lib.mpkl_store_release_u32(addr, value)
    else:
        ctypes.c_uint32.from_address(addr).value = value


def fetch_or(addr: int, bits: int) -> int:
    lib = load()
    if lib is not None:
        return lib.mpkl_fetch_or_u32(addr, bits)
    cell = ctypes.c_uint32.from_address(addr)
    old = cell.value
    cell.value = old | bits
    return old


def fetch_and(addr: int, mask: int) -> int:
    lib = load()
    if lib is not None:
        return lib.mpkl_fetch_and_u32(addr, mask)
    cell = ctypes.c_uint32.from_address(addr)
    old = cell.value
    cell.value = old & mask
    return old
