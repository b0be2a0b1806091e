"""Monotonic event journal for workflow observation.

Consumers replay from an id cursor, so delivery is at-least-once and a client
that reconnects mid-run can catch up without missing transitions. Ids are
unique and strictly increasing within a bus.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable


@dataclass(frozen=True)
class WorkflowEvent:
    id: int
    kind: str
    payload: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.id, "kind": self.kind, "payload": self.payload}


class EventBus:
    def __init__(self):
        self._events: list[WorkflowEvent] = []
        self._listeners: list[Callable[[WorkflowEvent], None]] = []
        self._lock = threading.Lock()
        self._next_id = 1

    def emit(self, kind: str, **payload) -> WorkflowEvent:
        with self._lock:
            event = WorkflowEvent(self._next_id, kind, payload)
            self._next_id += 1
            self._events.append(event)
            listeners = list(self._listeners)
        for listener in listeners:
            listener(event)
        return event

    def subscribe(self, listener: Callable[[WorkflowEvent], None]) -> None:
        with self._lock:
            self._listeners.append(listener)

    def unsubscribe(self, listener: Callable[[WorkflowEvent], None]) -> None:
        with self._lock:
            if listener in self._listeners:
                self._listeners.remove(listener)

    def replay(self, after: int = 0) -> list[WorkflowEvent]:
        """Events with id greater than the cursor, oldest first."""
        with self._lock:
            return [e for e in self._events if e.id > after]

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)
