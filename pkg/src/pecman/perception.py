"""Map synchronization between agents.

Agent maps are sets of quantized wall-cell keys (see :func:`pecman.world.cell_key`),
so synchronization checks are exact set comparisons. Messages carry the
newly discovered cells as merged fragments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .geometry import Point2
from .world import Fragment, ScanResult, cells_to_fragments, fragments_to_cells

# header (sender, frame, x, y) plus three int32 per fragment
_HEADER_BYTES = 24
_FRAGMENT_BYTES = 12


class Mode(str, Enum):
    SHARED = "shared"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class PerceptionMessage:
    sender: int
    frame: int
    fragments: frozenset
    sender_position: Point2

    def __post_init__(self):
        if not self.fragments:
            raise ValueError("empty perception message")

    def cells(self) -> set[int]:
        return fragments_to_cells(self.fragments)

    def byte_size(self) -> int:
        return _HEADER_BYTES + _FRAGMENT_BYTES * len(self.fragments)


def make_message(sender: int, frame: int, new_cells, position) -> PerceptionMessage | None:
    """Message for the cells an agent just discovered, or None if there are none."""
    if not new_cells:
        return None
    frags = frozenset(Fragment(*f) for f in cells_to_fragments(new_cells))
    return PerceptionMessage(sender, frame, frags, Point2(*position))


class Transport:
    """Carries messages from agents to the coordinator."""

    def send(self, msg: PerceptionMessage) -> None:
        raise NotImplementedError

    def deliver(self, frame: int) -> list[PerceptionMessage]:
        raise NotImplementedError


class InProcessTransport(Transport):
    """Lossless, same-frame delivery."""

    def __init__(self):
        self._queue: list[PerceptionMessage] = []

    def send(self, msg):
        self._queue.append(msg)

    def deliver(self, frame):
        out, self._queue = self._queue, []
        return out


@dataclass
class SharedMapState:
    n_agents: int
    mode: Mode = Mode.SHARED
    maps: list = field(default=None)
    union: set = field(default_factory=set)
    log: list = field(default_factory=list)

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.maps is None:
            self.maps = [set() for _ in range(self.n_agents)]

    def synchronized(self, exact: bool = True) -> bool:
        """All agent maps equal. ``exact=False`` compares sizes against the union,
        which is equivalent right after a broadcast (every map is then a subset of it)."""
        if not exact:
            n = len(self.union)
            return all(len(m) == n for m in self.maps)
        return all(m == self.maps[0] for m in self.maps[1:])


def self_update(agent: int, cells, state: SharedMapState) -> set[int]:
    """Merge an agent's own scan into its map; returns the cells that were new to it."""
    delta = set(cells) - state.maps[agent]
    state.maps[agent] |= delta
    return delta


def independent_update(agent: int, scan: ScanResult, state: SharedMapState) -> set[int]:
    """Only the scanning agent's map grows."""
    if state.mode is not Mode.INDEPENDENT:
        raise ValueError("independent_update requires independent mode")
    cells = scan.cells if scan.cells else fragments_to_cells(scan.discovered_walls)
    return self_update(agent, cells, state)


def collect_and_broadcast(messages, state: SharedMapState) -> dict[int, set[int]]:
    """Fold messages into the coordinator's union and hand each agent what it lacks.

    Senders are assumed to already hold their own fragments (they are merged
    here as well, idempotently). Returns the received delta per agent.
    """
    if state.mode is not Mode.SHARED:
        raise ValueError("collect_and_broadcast requires shared mode")
    incoming = set()
    for msg in sorted(messages, key=lambda m: (m.sender, m.frame)):
        cells = msg.cells()
        state.maps[msg.sender] |= cells
        incoming |= cells
        state.log.append({
            "frame": msg.frame,
            "sender": msg.sender,
            "fragments": len(msg.fragments),
            "bytes": msg.byte_size(),
        })
    state.union |= incoming
    deltas = {}
    for i, m in enumerate(state.maps):
        d = incoming - m
        m |= d
        if len(m) != len(state.union):
            # the map lagged behind before this frame; every map is a subset of the union
            d |= state.union - m
            m |= d
        deltas[i] = d
    return deltas


def message_log_jsonl(state: SharedMapState) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in state.log)
