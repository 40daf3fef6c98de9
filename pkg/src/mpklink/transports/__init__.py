"""Baseline channels (FIFO pair, Unix socket, polled shared memory) and dispatch."""

from __future__ import annotations

from .base import (
    DEFAULT_BUFFER_CAPACITY,
    DEFAULT_MAX_MESSAGE,
    DEFAULT_POLL_INTERVAL_US,
    Channel,
    ChannelConfig,
    Role,
    Transport,
)
from .fifo import FifoChannel, fifo_paths, open_fifo_pair
from .shm import ShmChannel, open_shm, region_paths
from .uds import UdsChannel, open_uds, socket_path

__all__ = [
    "DEFAULT_BUFFER_CAPACITY", "DEFAULT_MAX_MESSAGE", "DEFAULT_POLL_INTERVAL_US",
    "Channel", "ChannelConfig", "Role", "Transport",
    "FifoChannel", "ShmChannel", "UdsChannel",
    "open_channel", "open_fifo_pair", "open_shm", "open_uds",
    "fifo_paths", "region_paths", "socket_path",
]


def open_channel(cfg: ChannelConfig, **mpk_options) -> Channel:
    """Open the endpoint described by ``cfg``.

    ``mpk_options`` (policy, backend, chunk_capacity, trace) apply to MPK only;
    MPK endpoints rendezvous by ``cfg.path`` inside the current process.
    """
    if cfg.transport is Transport.FIFO:
        return open_fifo_pair(cfg)
    if cfg.transport is Transport.UDS:
        return open_uds(cfg)
    if cfg.transport is Transport.SHM:
        return open_shm(cfg)
    from ..mpk_channel import open_mpk
    return open_mpk(cfg, **mpk_options)
