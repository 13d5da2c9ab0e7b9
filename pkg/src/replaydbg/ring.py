"""Fixed-capacity FIFO ring buffers used for all on-target recording."""

from collections import deque
from typing import Generic, Iterable, Iterator, List, Optional, TypeVar

T = TypeVar("T")


class RingBuffer(Generic[T]):
    """FIFO buffer that overwrites its oldest entry once full.

    Surviving entries keep insertion order; ``overwritten_count`` tracks how
    many entries were lost. A buffer that never overwrote is known to hold
    the complete insertion history.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("ring capacity must be >= 1")
        self.capacity = capacity
        self._entries: deque[T] = deque()
        self.overwritten_count = 0

    def push(self, entry: T) -> Optional[T]:
        """Insert an entry, returning the overwritten one if any."""
        dropped = None
        if len(self._entries) == self.capacity:
            dropped = self._entries.popleft()
            self.overwritten_count += 1
        self._entries.append(entry)
        return dropped

    def extend(self, entries: Iterable[T]) -> None:
        for entry in entries:
            self.push(entry)

    def entries(self) -> List[T]:
        return list(self._entries)

    def oldest(self) -> T:
        if not self._entries:
            raise IndexError("empty ring")
        return self._entries[0]

    def newest(self) -> T:
        if not self._entries:
            raise IndexError("empty ring")
        return self._entries[-1]

    def replace_entries(self, entries: Iterable[T]) -> None:
        """Replace contents in order, keeping capacity and overwrite count."""
        items = list(entries)
        if len(items) > self.capacity:
            raise ValueError("more entries than capacity")
        self._entries = deque(items)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[T]:
        return iter(self._entries)

    def __bool__(self) -> bool:
        return bool(self._entries)
