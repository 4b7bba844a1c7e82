"""
Run ledger for the cavity readout toolkit.

SQLite-based record of CLI runs (command, config hash, seed, status, output
files) and the headline numbers each run produced. The ledger lives in
DATA_DIR, never in the output directory, so outputs stay byte-identical.
"""

import json
import os
import sqlite3
from datetime import datetime, timezone
from pathlib import Path


_SCHEMA = """
CREATE TABLE IF NOT EXISTS runs (
    id              INTEGER PRIMARY KEY AUTOINCREMENT,
    started_at      TEXT NOT NULL,
    finished_at     TEXT,
    command         TEXT NOT NULL,
    config_path     TEXT,
    config_sha256   TEXT,
    master_seed     TEXT,
    workers         INTEGER DEFAULT 1,
    out_dir         TEXT,
    outputs         TEXT,
    error           TEXT,
    status          TEXT DEFAULT 'running'
);

CREATE TABLE IF NOT EXISTS results (
    id              INTEGER PRIMARY KEY AUTOINCREMENT,
    run_id          INTEGER NOT NULL REFERENCES runs(id),
    created_at      TEXT NOT NULL,
    name            TEXT NOT NULL,
    value           REAL,
    detail          TEXT
);
"""


def _now() -> str:
    """Return current UTC time as ISO 8601 string."""
    return datetime.now(timezone.utc).isoformat()


class RunStore:
    """
    SQLite store for CLI runs and their headline results.

    Usage:
        store = RunStore("runs.db")
        run_id = store.create_run("errors", config_path, sha, seed=7)
        store.add_result(run_id, "tm.eps", 8.0e-4)
        store.finish_run(run_id, outputs=["errors.json"])
    """

    def __init__(self, db_path: str | None = None):
        if db_path is None:
            data_dir = os.environ.get("DATA_DIR", ".")
            db_path = str(Path(data_dir) / "runs.db")
        self._conn = sqlite3.connect(db_path)
        self._conn.row_factory = sqlite3.Row
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA foreign_keys=ON")
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    # ── Runs ────────────────────────────────────────────────────

    def create_run(
        self,
        command: str,
        config_path: str | None = None,
        config_sha256: str | None = None,
        seed: int = 0,
        workers: int = 1,
        out_dir: str | None = None,
    ) -> int:
        """Start a new run. Returns run_id."""
        cur = self._conn.execute(
            """INSERT INTO runs (
                started_at, command, config_path, config_sha256,
                master_seed, workers, out_dir
            ) VALUES (?, ?, ?, ?, ?, ?, ?)""",
            # seeds are u64 and may not fit a signed SQLite integer
            (_now(), command, config_path, config_sha256, str(seed), workers, out_dir),
        )
        self._conn.commit()
        return cur.lastrowid

    def record_config(self, run_id: int, config_sha256: str) -> None:
        """Attach the config hash once the file has been read."""
        self._conn.execute(
            "UPDATE runs SET config_sha256 = ? WHERE id = ?", (config_sha256, run_id)
        )
        self._conn.commit()

    def finish_run(
        self,
        run_id: int,
        outputs: list[str] | None = None,
        status: str = "completed",
        error: str | None = None,
    ) -> None:
        """Mark a run as finished with its output files."""
        self._conn.execute(
            """UPDATE runs SET
                finished_at = ?,
                outputs = ?,
                status = ?,
                error = ?
            WHERE id = ?""",
            (_now(), json.dumps([str(p) for p in outputs or []]), status, error, run_id),
        )
        self._conn.commit()

    def get_run(self, run_id: int) -> dict | None:
        """Get run details by ID."""
        row = self._conn.execute(
            "SELECT * FROM runs WHERE id = ?", (run_id,)
        ).fetchone()
        return self._decode_run(row) if row else None

    def get_runs(self, command: str | None = None) -> list[dict]:
        """List runs, newest first, optionally for one command."""
        if command:
            rows = self._conn.execute(
                "SELECT * FROM runs WHERE command = ? ORDER BY id DESC", (command,)
            ).fetchall()
        else:
            rows = self._conn.execute(
                "SELECT * FROM runs ORDER BY id DESC"
            ).fetchall()
        return [self._decode_run(r) for r in rows]

    # ── Results ─────────────────────────────────────────────────

    def add_result(self, run_id: int, name: str, value: float | None, detail: dict | None = None) -> int:
        """Store one headline number of a run. Returns result_id."""
        if self.get_run(run_id) is None:
            raise ValueError(f"Run {run_id} not found")
        cur = self._conn.execute(
            "INSERT INTO results (run_id, created_at, name, value, detail) VALUES (?, ?, ?, ?, ?)",
            (run_id, _now(), name, value, json.dumps(detail or {}, sort_keys=True)),
        )
        self._conn.commit()
        return cur.lastrowid

    def add_results(self, run_id: int, results: dict[str, float]) -> list[int]:
        return [self.add_result(run_id, name, value) for name, value in results.items()]

    def get_results(self, run_id: int) -> list[dict]:
        """Results of a run in insertion order."""
        rows = self._conn.execute(
            "SELECT * FROM results WHERE run_id = ? ORDER BY id", (run_id,)
        ).fetchall()
        out = []
        for r in rows:
            d = dict(r)
            d["detail"] = json.loads(d["detail"]) if d.get("detail") else {}
            out.append(d)
        return out

    # ── Stats ───────────────────────────────────────────────────

    def stats(self) -> dict:
        """Summary stats across all runs."""
        runs = self._conn.execute("SELECT COUNT(*) FROM runs").fetchone()[0]
        completed = self._conn.execute(
            "SELECT COUNT(*) FROM runs WHERE status = 'completed'"
        ).fetchone()[0]
        failed = self._conn.execute(
            "SELECT COUNT(*) FROM runs WHERE status = 'failed'"
        ).fetchone()[0]
        results = self._conn.execute("SELECT COUNT(*) FROM results").fetchone()[0]
        by_command = {
            row[0]: row[1]
            for row in self._conn.execute(
                "SELECT command, COUNT(*) FROM runs GROUP BY command ORDER BY command"
            ).fetchall()
        }
        return {
            "total_runs": runs,
            "completed": completed,
            "failed": failed,
            "results": results,
            "by_command": by_command,
        }

    # ── Internal ────────────────────────────────────────────────

    @staticmethod
    def _decode_run(row: sqlite3.Row) -> dict:
        """Convert a Row to dict and decode the JSON outputs list."""
        d = dict(row)
        val = d.get("outputs")
        if isinstance(val, str):
            try:
                d["outputs"] = json.loads(val)
            except json.JSONDecodeError:
                d["outputs"] = []
        else:
            d["outputs"] = []
        d["master_seed"] = int(d["master_seed"]) if d.get("master_seed") is not None else None
        return d
