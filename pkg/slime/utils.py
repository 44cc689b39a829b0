import asyncio
import hashlib
import logging
import math
from typing import Any, Callable, Iterable, List, Optional, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level: str = "INFO") -> None:
    """Configure the root logger once and force the project formatter on all handlers."""
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT)
    formatter = logging.Formatter(LOG_FORMAT)
    for handler in logging.getLogger().handlers:
        handler.setFormatter(formatter)


async def gather_bounded(func: Callable[[T], R], items: Iterable[T], limit: int) -> List[R]:
    """Run ``func`` over ``items`` in worker threads, at most ``limit`` at a time.

    Results come back in input order regardless of completion order.
    """
    semaphore = asyncio.Semaphore(limit)

    async def run_with_semaphore(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(func, item)

    return await asyncio.gather(*[run_with_semaphore(item) for item in items])


def run_bounded(func: Callable[[T], R], items: Iterable[T], max_workers: int = 1) -> List[R]:
    items = list(items)
    if max_workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return asyncio.run(gather_bounded(func, items, max_workers))


def stable_hash(key: str) -> int:
    """64-bit hash of a string that does not change between interpreter runs."""
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def substream_rng(seed: int, key: Optional[str] = None, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, key, stream).

    Keys are hashed so that adding a key never shifts another key's draws.
    """
    entropy = [seed & 0xFFFFFFFFFFFFFFFF]
    if key is not None:
        entropy.append(stable_hash(key))
    entropy.append(stream)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def format_float(value: Optional[float]) -> str:
    """Shortest round-tripping text for a float; empty for missing values."""
    if value is None:
        return ""
    if not math.isfinite(value):
        raise ValueError(f"cannot serialize non-finite value {value!r}")
    return repr(float(value))


def parse_float(text: str) -> Optional[float]:
    return None if text == "" else float(text)


def to_jsonable(value: Any) -> Any:
    """numpy scalars/arrays to plain Python for json.dumps."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value
