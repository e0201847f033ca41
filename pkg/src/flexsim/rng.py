"""Per-device random streams.

Every (seed, device_id, stream name) triple maps to its own counter-based
Philox generator, so adding or reordering devices never perturbs the draws
of any other device.
"""

from __future__ import annotations

import hashlib

import numpy as np

STREAMS = (
    "ambient",
    "door",
    "unplug",
    "latency",
    "outage",
    "bandwidth",
    "faults",
    "house",
    "sensor_noise",
    "dispatch",
)


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big")


def device_stream(seed: int, device_id: str, stream: str) -> np.random.Generator:
    """Independent generator for one device and one purpose."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & (2**64 - 1),
        spawn_key=(_stable_int(device_id), _stable_int(stream)),
    )
    return np.random.Generator(np.random.Philox(ss))


class DeviceStreams:
    """Lazily created named streams for a single device."""

    def __init__(self, seed: int, device_id: str):
        self.seed = seed
        self.device_id = device_id
        self._streams: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = device_stream(self.seed, self.device_id, name)
        return self._streams[name]
