"""At-least-once work queue with leases, backed by SQLite.

A message is only removed by an explicit ack carrying the current lease
token. A lease that is not acked before its visibility timeout expires goes
back to pending and will be handed out again; each hand-out counts as one
attempt, and a message that has used up ``max_attempts`` is parked in the
dead-letter state instead of being delivered again.

``path=":memory:"`` gives a private in-process queue; a file path lets
several processes share one queue.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

DEFAULT_VISIBILITY_TIMEOUT = 60.0
DEFAULT_MAX_ATTEMPTS = 3

_SCHEMA = """
CREATE TABLE IF NOT EXISTS messages (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    body TEXT NOT NULL,
    state TEXT NOT NULL DEFAULT 'pending',
    attempts INTEGER NOT NULL DEFAULT 0,
    lease_token TEXT,
    lease_expires REAL,
    worker TEXT,
    last_error TEXT
);
CREATE INDEX IF NOT EXISTS messages_state ON messages (state, id);
"""


@dataclass(frozen=True)
class Lease:
    message_id: int
    body: dict
    attempt: int
    token: str
    expires: float


@dataclass(frozen=True)
class QueueStats:
    pending: int = 0
    leased: int = 0
    done: int = 0
    dead: int = 0

    @property
    def depth(self) -> int:
        """Outstanding messages: waiting or in flight."""
        return self.pending + self.leased


@dataclass(frozen=True)
class DeadLetter:
    message_id: int
    body: dict
    attempts: int
    last_error: str | None


class WorkQueue:
    def __init__(self, path=":memory:", visibility_timeout: float = DEFAULT_VISIBILITY_TIMEOUT,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS, clock=time.time):
        self.path = str(path)
        if self.path != ":memory:":
            Path(self.path).parent.mkdir(parents=True, exist_ok=True)
        self.visibility_timeout = visibility_timeout
        self.max_attempts = max_attempts
        self.clock = clock
        self._lock = threading.RLock()
        self._connect()

    def _connect(self):
        self._db = sqlite3.connect(self.path, timeout=60, isolation_level=None, check_same_thread=False)
        self._db.executescript(_SCHEMA)
        if self.path != ":memory:":
            self._db.execute("PRAGMA journal_mode=WAL")

    # Reopened from the path in child processes.
    def __getstate__(self):
        if self.path == ":memory:":
            raise TypeError("an in-memory queue cannot be shared with another process")
        return {"path": self.path, "visibility_timeout": self.visibility_timeout,
                "max_attempts": self.max_attempts}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self.clock = time.time
        self._lock = threading.RLock()
        self._connect()

    def close(self):
        self._db.close()

    def _tx(self):
        return _Transaction(self._db, self._lock)

    def put(self, body: dict) -> int:
        with self._tx() as db:
            cur = db.execute("INSERT INTO messages (body) VALUES (?)", (json.dumps(body, sort_keys=True),))
            return cur.lastrowid

    def put_many(self, bodies) -> list[int]:
        with self._tx() as db:
            return [db.execute("INSERT INTO messages (body) VALUES (?)",
                               (json.dumps(b, sort_keys=True),)).lastrowid for b in bodies]

    def _reap(self, db, now):
        db.execute("UPDATE messages SET state='pending', lease_token=NULL, lease_expires=NULL, "
                   "last_error=COALESCE(last_error, 'lease expired') "
                   "WHERE state='leased' AND lease_expires <= ?", (now,))

    def reap(self) -> None:
        with self._tx() as db:
            self._reap(db, self.clock())

    def lease(self, worker_id: str = "") -> Lease | None:
        now = self.clock()
        with self._tx() as db:
            self._reap(db, now)
            while True:
                row = db.execute("SELECT id, body, attempts FROM messages WHERE state='pending' "
                                 "ORDER BY id LIMIT 1").fetchone()
                if row is None:
                    return None
                msg_id, body, attempts = row
                if attempts >= self.max_attempts:
                    db.execute("UPDATE messages SET state='dead', "
                               "last_error=COALESCE(last_error, '') || ' (max attempts exceeded)' "
                               "WHERE id=?", (msg_id,))
                    continue
                token = uuid.uuid4().hex
                expires = now + self.visibility_timeout
                db.execute("UPDATE messages SET state='leased', attempts=attempts+1, lease_token=?, "
                           "lease_expires=?, worker=? WHERE id=?", (token, expires, worker_id, msg_id))
                return Lease(msg_id, json.loads(body), attempts + 1, token, expires)

    def ack(self, lease: Lease) -> bool:
        """Remove the message. False when the lease was lost (expired and re-issued)."""
        with self._tx() as db:
            cur = db.execute("UPDATE messages SET state='done', lease_token=NULL WHERE id=? "
                             "AND state='leased' AND lease_token=?", (lease.message_id, lease.token))
            return cur.rowcount == 1

    def nack(self, lease: Lease, error: str = "") -> bool:
        """Return the message to pending right away, recording why."""
        with self._tx() as db:
            cur = db.execute("UPDATE messages SET state='pending', lease_token=NULL, lease_expires=NULL, "
                             "last_error=? WHERE id=? AND state='leased' AND lease_token=?",
                             (error, lease.message_id, lease.token))
            return cur.rowcount == 1

    def stats(self) -> QueueStats:
        with self._lock:
            counts = dict(self._db.execute("SELECT state, COUNT(*) FROM messages GROUP BY state").fetchall())
        return QueueStats(counts.get("pending", 0), counts.get("leased", 0),
                          counts.get("done", 0), counts.get("dead", 0))

    def settle(self) -> QueueStats:
        """Expire stale leases, park exhausted messages, and report the result."""
        with self._tx() as db:
            now = self.clock()
            self._reap(db, now)
            db.execute("UPDATE messages SET state='dead', "
                       "last_error=COALESCE(last_error, '') || ' (max attempts exceeded)' "
                       "WHERE state='pending' AND attempts >= ?", (self.max_attempts,))
        return self.stats()

    def drain_dead(self) -> list[DeadLetter]:
        """Return dead letters, marking pending ones that already exhausted their attempts first."""
        with self._tx() as db:
            self._reap(db, self.clock())
            db.execute("UPDATE messages SET state='dead' WHERE state='pending' AND attempts >= ?",
                       (self.max_attempts,))
            rows = db.execute("SELECT id, body, attempts, last_error FROM messages WHERE state='dead' "
                              "ORDER BY id").fetchall()
        return [DeadLetter(i, json.loads(b), a, e) for i, b, a, e in rows]


class _Transaction:
    def __init__(self, db, lock):
        self.db = db
        self.lock = lock

    def __enter__(self):
        self.lock.acquire()
        self.db.execute("BEGIN IMMEDIATE")
        return self.db

    def __exit__(self, exc_type, *_):
        try:
            self.db.execute("ROLLBACK" if exc_type else "COMMIT")
        finally:
            self.lock.release()
