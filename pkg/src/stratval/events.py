"""Append-only event log with a line-delimited text serialisation.

Every state transition, trade, settlement, slash, mint, burn, audit,
allocation and realised return is one record. Records carry an epoch, a
strictly increasing sequence number, a kind, and a fixed-order field list
per kind (see ``SCHEMAS``). Token amounts are signed integers in
micro-units; floats are rendered with ``repr`` so a (config, seed) pair
reproduces the log byte for byte.

The log is the source of truth for verification: folding the primitive
``ledger`` records reconstructs every balance, and the ``transition``
records reconstruct every instance state machine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

SCHEMA_VERSION = 1

# kind -> ordered (field, type) pairs; types: i=int, f=float, s=str, b=bool
SCHEMAS: dict[str, tuple[tuple[str, str], ...]] = {
    "run_meta": (
        ("seed", "i"), ("epochs", "i"), ("audit_rate", "f"), ("discount", "f"),
        ("fraud_threshold", "f"), ("claim_truth_threshold", "f"), ("fee_rate_ppm", "i"),
        ("utility", "s"), ("risk_aversion", "f"),
        ("cost_base", "f"), ("cost_rate", "f"), ("cost_exponent", "f"),
    ),
    "genesis_agent": (("agent", "s"), ("role", "s"), ("supra", "i"), ("alpha", "i")),
    "genesis_pool": (("account", "s"), ("token", "s"), ("amount", "i")),
    "epoch_start": (("phase", "s"),),
    "intention": (
        ("intention", "s"), ("owner", "s"), ("deposit", "i"), ("alpha_burn", "i"),
        ("metric_index", "i"), ("goal", "s"), ("readjust_every", "i"), ("threshold", "f"),
    ),
    "strategy": (
        ("strategy", "s"), ("proposer", "s"), ("collateral", "i"),
        ("complexity", "f"), ("quality", "f"),
    ),
    "instance_open": (
        ("instance", "s"), ("strategy", "s"), ("intention", "s"),
        ("mechanism", "s"), ("seed_stake", "i"), ("liquidity", "f"),
    ),
    "transition": (("instance", "s"), ("src", "s"), ("dst", "s")),
    "trade": (
        ("instance", "s"), ("voter", "s"), ("side", "s"),
        ("gross", "i"), ("fee", "i"), ("net", "i"),
    ),
    "lmsr_trade": (
        ("instance", "s"), ("voter", "s"), ("side", "s"),
        ("shares", "f"), ("cost", "i"), ("fee", "i"),
    ),
    "criteria": (("instance", "s"), ("implied", "f"), ("decision", "s")),
    "resolution": (("instance", "s"), ("resolver_kind", "s"), ("resolver", "s"), ("outcome", "s")),
    "ds_stake": (("instance", "s"), ("searcher", "s"), ("stake", "i")),
    "challenge": (("instance", "s"), ("arbitrator", "s"), ("stake", "i"), ("upheld", "b")),
    "slash_event": (
        ("agent", "s"), ("token", "s"), ("amount", "i"),
        ("reason", "s"), ("instance", "s"),
    ),
    "settle": (
        ("instance", "s"), ("outcome", "s"), ("pool_total", "i"),
        ("maker_loss", "i"), ("implied", "f"),
    ),
    "payout": (("instance", "s"), ("agent", "s"), ("amount", "i")),
    "mint_event": (("agent", "s"), ("amount", "i"), ("reason", "s"), ("instance", "s")),
    "burn_event": (("agent", "s"), ("amount", "i"), ("intention", "s")),
    "ledger": (("op", "s"), ("src", "s"), ("dst", "s"), ("token", "s"), ("amount", "i")),
    "allocation_round": (("intention", "s"), ("budget", "i"), ("allocated", "i")),
    "allocation": (("intention", "s"), ("strategy", "s"), ("amount", "i"), ("omega", "f")),
    "idle_capital": (("intention", "s"), ("amount", "i")),
    "value": (
        ("intention", "s"), ("strategy", "s"), ("allocation", "i"),
        ("ret", "f"), ("delta_v", "i"),
    ),
    "commission": (
        ("strategy", "s"), ("intention", "s"), ("proposer", "s"),
        ("amount", "i"), ("diverted", "i"),
    ),
    "audit": (
        ("strategy", "s"), ("outcome", "s"), ("gas", "i"),
        ("reward", "i"), ("pool_after", "i"),
    ),
    "fraud": (("strategy", "s"), ("instance", "s"), ("slashed", "i")),
}

_TRUE, _FALSE = "1", "0"


@dataclass(frozen=True)
class Event:
    epoch: int
    seq: int
    kind: str
    fields: dict[str, object]

    def __getattr__(self, name: str):
        try:
            return self.fields[name]
        except KeyError:
            raise AttributeError(name) from None


class EventLogError(Exception):
    pass


def _render(value: object, ftype: str) -> str:
    if ftype == "i":
        return str(int(value))
    if ftype == "f":
        return repr(float(value))
    if ftype == "b":
        return _TRUE if value else _FALSE
    s = str(value)
    if " " in s or "=" in s or not s:
        raise EventLogError(f"string field value {s!r} must be non-empty without spaces or '='")
    return s


def _parse(value: str, ftype: str) -> object:
    if ftype == "i":
        return int(value)
    if ftype == "f":
        return float(value)
    if ftype == "b":
        return value == _TRUE
    return value


@dataclass
class EventLog:
    """Ordered, append-only sequence of records."""

    records: list[Event] = field(default_factory=list)
    _next_seq: int = 0

    def append(self, epoch: int, kind: str, **fields: object) -> Event:
        schema = SCHEMAS.get(kind)
        if schema is None:
            raise EventLogError(f"unknown event kind {kind!r}")
        names = [n for n, _ in schema]
        missing = [n for n in names if n not in fields]
        extra = [n for n in fields if n not in names]
        if missing or extra:
            raise EventLogError(f"{kind}: missing={missing} extra={extra}")
        for name, ftype in schema:
            _render(fields[name], ftype)  # reject unserialisable values at append time
        ev = Event(epoch=epoch, seq=self._next_seq, kind=kind, fields=dict(fields))
        self._next_seq += 1
        self.records.append(ev)
        return ev

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.records if e.kind in kinds]

    # -- serialisation -------------------------------------------------------

    def to_lines(self) -> list[str]:
        lines = [f"#schema {SCHEMA_VERSION}"]
        for ev in self.records:
            schema = SCHEMAS[ev.kind]
            parts = [str(ev.epoch), str(ev.seq), ev.kind]
            for name, ftype in schema:
                parts.append(f"{name}={_render(ev.fields[name], ftype)}")
            lines.append(" ".join(parts))
        return lines

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.to_lines():
                fh.write(line + "\n")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "EventLog":
        it = iter(lines)
        try:
            header = next(it).strip()
        except StopIteration:
            raise EventLogError("empty log") from None
        if not header.startswith("#schema "):
            raise EventLogError("missing schema header line")
        version = int(header.split()[1])
        if version != SCHEMA_VERSION:
            raise EventLogError(f"unsupported schema version {version}")
        log = cls()
        for lineno, line in enumerate(it, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) < 3:
                raise EventLogError(f"line {lineno}: malformed record")
            epoch, seq, kind = int(parts[0]), int(parts[1]), parts[2]
            schema = SCHEMAS.get(kind)
            if schema is None:
                raise EventLogError(f"line {lineno}: unknown kind {kind!r}")
            if len(parts) - 3 != len(schema):
                raise EventLogError(f"line {lineno}: wrong field count for {kind}")
            fields: dict[str, object] = {}
            for (name, ftype), token in zip(schema, parts[3:]):
                key, _, raw = token.partition("=")
                if key != name:
                    raise EventLogError(f"line {lineno}: expected field {name}, got {key}")
                fields[name] = _parse(raw, ftype)
            log.records.append(Event(epoch=epoch, seq=seq, kind=kind, fields=fields))
            log._next_seq = seq + 1
        return log

    @classmethod
    def read(cls, path) -> "EventLog":
        with open(path) as fh:
            return cls.from_lines(fh)
