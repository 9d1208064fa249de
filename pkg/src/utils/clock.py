"""Virtual clock shared by every role in a simulated world."""

MINUTE = 60
HOUR = 60 * MINUTE
DAY = 24 * HOUR
YEAR = 365 * DAY


class VirtualClock:
    """Monotone integer seconds; wall-clock time is never consulted."""

    def __init__(self, start: int = 0):
        if start < 0:
            raise ValueError("Clock start must be non-negative")
        self._now = start

    def now(self) -> int:
        return self._now

    def advance(self, seconds: int) -> int:
        if seconds < 0:
            raise ValueError("Virtual time cannot move backwards")
        self._now += seconds
        return self._now

    def advance_to(self, timestamp: int) -> int:
        if timestamp < self._now:
            raise ValueError(f"Cannot rewind clock from {self._now} to {timestamp}")
        self._now = timestamp
        return self._now
