import pytest
from hypothesis import given
from hypothesis import strategies as st

from replaydbg.ring import RingBuffer


def test_rejects_zero_capacity():
    with pytest.raises(ValueError):
        RingBuffer(0)


def test_overwrite_keeps_newest_in_order():
    ring = RingBuffer(4)
    ring.extend(range(6))
    assert ring.entries() == [2, 3, 4, 5]
    assert ring.overwritten_count == 2


def test_push_returns_dropped_entry():
    ring = RingBuffer(1)
    assert ring.push("a") is None
    assert ring.push("b") == "a"


@given(
    capacity=st.integers(min_value=1, max_value=20),
    items=st.lists(st.integers(), max_size=100),
)
def test_contents_are_last_min_capacity_n_insertions(capacity, items):
    ring = RingBuffer(capacity)
    ring.extend(items)
    assert ring.entries() == items[-capacity:] if items else ring.entries() == []
    assert len(ring) == min(capacity, len(items))
    assert ring.overwritten_count == max(0, len(items) - capacity)
